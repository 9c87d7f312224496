# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the batched kernels in ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, asinh, log, sinh, cosh, log1p, exp

cnp.import_array()

cdef double SMALL_RADIUS = 1e-8
cdef double PHI_SERIES_MAX = 1e-3
cdef double PHI_DIRECT_MAX = 20.0


cdef inline double _phi(double r) noexcept nogil:
    cdef double r2
    if r < PHI_SERIES_MAX:
        r2 = r * r
        return r2 / 6.0 - r2 * r2 / 180.0
    if r <= PHI_DIRECT_MAX:
        return log(sinh(r) / r)
    return r - log(2.0 * r) + log1p(-exp(-2.0 * r))


cdef double SPLIT = 134217729.0


cdef inline void _two_prod(double a, double b, double* p, double* e) noexcept nogil:
    cdef double ca, a_hi, a_lo, cb, b_hi, b_lo
    p[0] = a * b
    ca = SPLIT * a
    a_hi = ca - (ca - a)
    a_lo = a - a_hi
    cb = SPLIT * b
    b_hi = cb - (cb - b)
    b_lo = b - b_hi
    e[0] = ((a_hi * b_hi - p[0]) + a_hi * b_lo + a_lo * b_hi) + a_lo * b_lo


cdef inline double _lorentz_inner(const double[::1] mu, const double[:, ::1] X,
                                  Py_ssize_t i) noexcept nogil:
    """Compensated <mu, X_i>_L (Ogita-Rump-Oishi Dot2)."""
    cdef double p, s, h, r, t, z, q
    cdef Py_ssize_t j
    _two_prod(-X[i, 0], mu[0], &p, &s)
    for j in range(1, mu.shape[0]):
        _two_prod(X[i, j], mu[j], &h, &r)
        t = p + h
        z = t - p
        q = (p - (t - z)) + (h - z)
        p = t
        s = s + (q + r)
    return p + s


cdef inline double _tangent_row(const double[::1] mu, const double[:, ::1] X,
                                Py_ssize_t i, double[::1] out) noexcept nogil:
    """Write the tangent coordinates of row i into out; return the radius."""
    cdef Py_ssize_t j, dp1 = mu.shape[0]
    cdef bint same = True
    for j in range(dp1):
        if X[i, j] != mu[j]:
            same = False
            break
    if same:
        for j in range(dp1 - 1):
            out[j] = 0.0
        return 0.0
    # boost x to the origin frame: y_s = x_s + mu_s (<mu, x>_L - x0) / (mu0 + 1)
    cdef double k = (_lorentz_inner(mu, X, i) - X[i, 0]) / (mu[0] + 1.0)
    cdef double s = 0.0, u
    for j in range(1, dp1):
        u = X[i, j] + k * mu[j]
        out[j - 1] = u
        s += u * u
    s = sqrt(s)
    cdef double r = asinh(s)
    cdef double q
    if r < SMALL_RADIUS:
        q = 1.0 - r * r / 6.0
    else:
        q = r / s
    for j in range(dp1 - 1):
        out[j] *= q
    return r


def tangent_coords_batch(mu, X):
    cdef const double[::1] m = np.ascontiguousarray(mu, dtype=np.float64)
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], d = m.shape[0] - 1, i
    Z = np.empty((n, d))
    r = np.empty(n)
    cdef double[:, ::1] z = Z
    cdef double[::1] rv = r
    with nogil:
        for i in range(n):
            rv[i] = _tangent_row(m, x, i, z[i])
    return Z, r


def phi_batch(r):
    cdef const double[::1] rv = np.ascontiguousarray(r, dtype=np.float64).ravel()
    out = np.empty(rv.shape[0])
    cdef double[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(rv.shape[0]):
            o[i] = _phi(rv[i])
    return out.reshape(np.shape(r))


def scatter_phi(mu, X):
    cdef const double[::1] m = np.ascontiguousarray(mu, dtype=np.float64)
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], d = m.shape[0] - 1, i, a, b
    S = np.zeros((d, d))
    buf = np.empty(d)
    cdef double[:, ::1] s = S
    cdef double[::1] z = buf
    cdef double total = 0.0, r
    with nogil:
        for i in range(n):
            r = _tangent_row(m, x, i, z)
            total += _phi(r)
            for a in range(d):
                for b in range(a + 1):
                    s[a, b] += z[a] * z[b]
        for a in range(d):
            for b in range(a + 1):
                s[a, b] /= n
                s[b, a] = s[a, b]
    return S, total


def wrap_batch(mu, Z):
    cdef const double[::1] m = np.ascontiguousarray(mu, dtype=np.float64)
    cdef const double[:, ::1] z = np.ascontiguousarray(Z, dtype=np.float64)
    cdef Py_ssize_t n = z.shape[0], d = z.shape[1], i, j
    X = np.empty((n, d + 1))
    cdef double[:, ::1] x = X
    cdef double coef, r, sr, ch, t, norm2
    with nogil:
        for i in range(n):
            coef = 0.0
            r = 0.0
            for j in range(d):
                coef += z[i, j] * m[j + 1]
                r += z[i, j] * z[i, j]
            coef /= m[0] + 1.0
            r = sqrt(r)
            if r < SMALL_RADIUS:
                sr = 1.0 + r * r / 6.0
            else:
                sr = sinh(r) / r
            ch = cosh(r)
            norm2 = 0.0
            for j in range(1, d + 1):
                t = ch * m[j] + sr * (z[i, j - 1] + coef * m[j])
                x[i, j] = t
                norm2 += t * t
            x[i, 0] = sqrt(1.0 + norm2)
    return X
