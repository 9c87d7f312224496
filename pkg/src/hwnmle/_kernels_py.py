"""NumPy implementation of the batched hot kernels.

Same signatures as the compiled ``_kernels`` module; used when the extension
is not built or when ``HWNMLE_PURE_PYTHON`` is set.
"""
from __future__ import annotations

import math

import numpy as np

SMALL_RADIUS = 1e-8
PHI_SERIES_MAX = 1e-3
PHI_DIRECT_MAX = 20.0


SPLIT = 134217729.0  # 2**27 + 1


def _two_prod(a, b):
    """``a * b = p + e`` exactly (Dekker)."""
    p = a * b
    ca = SPLIT * a
    a_hi = ca - (ca - a)
    a_lo = a - a_hi
    cb = SPLIT * b
    b_hi = cb - (cb - b)
    b_lo = b - b_hi
    e = ((a_hi * b_hi - p) + a_hi * b_lo + a_lo * b_hi) + a_lo * b_lo
    return p, e


def lorentz_inner_rows(mu, X):
    """``<mu, X_i>_L`` for every row, as accurate as if computed in twice the precision."""
    sign = np.ones_like(mu)
    sign[0] = -1.0
    P, E = _two_prod(X * sign, mu)
    p, s = P[:, 0], E[:, 0]
    for j in range(1, mu.shape[0]):
        h = P[:, j]
        t = p + h
        z = t - p
        s = s + (((p - (t - z)) + (h - z)) + E[:, j])
        p = t
    return p + s


def tangent_coords_batch(mu, X):
    """Tangent coordinates at ``mu`` of every row of ``X``.

    Returns ``(Z, r)`` with ``Z`` of shape ``(n, d)`` and ``r = |Z|`` row-wise.
    """
    mu = np.ascontiguousarray(mu, dtype=float)
    X = np.ascontiguousarray(X, dtype=float)
    if X.shape[0] == 1:
        z, r = _tangent_single(mu.tolist(), X[0].tolist())
        return np.array([z]), np.array([r])
    # boost to the origin frame: y_s = x_s + mu_s (<mu, x>_L - x0) / (mu0 + 1);
    # the inner product cancels terms of size x0 * mu0, so it is compensated
    k = (lorentz_inner_rows(mu, X) - X[:, 0]) / (mu[0] + 1.0)
    u = X[:, 1:] + k[:, None] * mu[1:]
    s = np.sqrt(np.einsum("ij,ij->i", u, u))
    r = np.arcsinh(s)
    small = r < SMALL_RADIUS
    q = np.empty_like(r)
    q[small] = 1.0 - r[small] ** 2 / 6.0
    q[~small] = r[~small] / s[~small]
    Z = q[:, None] * u
    same = np.all(X == mu, axis=1)
    if same.any():
        Z[same] = 0.0
        r[same] = 0.0
    return Z, r


def _tangent_single(mu, x):
    """Scalar version of one ``tangent_coords_batch`` row; avoids array overhead."""
    if mu == x:
        return [0.0] * (len(mu) - 1), 0.0
    p, s = _two_prod(-x[0], mu[0])
    for a, b in zip(x[1:], mu[1:]):
        h, e = _two_prod(a, b)
        t = p + h
        z = t - p
        s += ((p - (t - z)) + (h - z)) + e
        p = t
    k = (p + s - x[0]) / (mu[0] + 1.0)
    u = [a + k * b for a, b in zip(x[1:], mu[1:])]
    norm = math.sqrt(sum(c * c for c in u))
    r = math.asinh(norm)
    q = 1.0 - r * r / 6.0 if r < SMALL_RADIUS else r / norm
    return [q * c for c in u], r


def phi_batch(r):
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    lo = r < PHI_SERIES_MAX
    hi = r > PHI_DIRECT_MAX
    mid = ~(lo | hi)
    r2 = r[lo] ** 2
    out[lo] = r2 / 6.0 - r2 * r2 / 180.0
    out[mid] = np.log(np.sinh(r[mid]) / r[mid])
    rh = r[hi]
    out[hi] = rh - np.log(2.0 * rh) + np.log1p(-np.exp(-2.0 * rh))
    return out


def scatter_phi(mu, X):
    """Empirical tangent scatter at ``mu`` and the summed Jacobian term."""
    Z, r = tangent_coords_batch(mu, X)
    n = Z.shape[0]
    S = Z.T @ Z / n
    S = 0.5 * (S + S.T)
    return S, float(phi_batch(r).sum())


def wrap_batch(mu, Z):
    """``Exp_mu(PT_{o->mu}(0, z))`` for every row ``z`` of ``Z``."""
    mu = np.ascontiguousarray(mu, dtype=float)
    Z = np.ascontiguousarray(Z, dtype=float)
    if Z.shape[0] == 1:
        return np.array([_wrap_single(mu.tolist(), Z[0].tolist())])
    n, d = Z.shape
    v = np.zeros((n, d + 1))
    v[:, 1:] = Z
    coef = (Z @ mu[1:]) / (mu[0] + 1.0)
    v[:, 0] += coef
    v[:, 0] += coef * mu[0]
    v[:, 1:] += coef[:, None] * mu[1:]
    r = np.sqrt(np.einsum("ij,ij->i", Z, Z))
    small = r < SMALL_RADIUS
    sr = np.empty_like(r)
    sr[small] = 1.0 + r[small] ** 2 / 6.0
    sr[~small] = np.sinh(r[~small]) / r[~small]
    X = np.cosh(r)[:, None] * mu + sr[:, None] * v
    X[:, 0] = np.sqrt(1.0 + np.einsum("ij,ij->i", X[:, 1:], X[:, 1:]))
    return X


def _wrap_single(mu, z):
    coef = sum(a * b for a, b in zip(z, mu[1:])) / (mu[0] + 1.0)
    r = math.sqrt(sum(a * a for a in z))
    try:
        sr = 1.0 + r * r / 6.0 if r < SMALL_RADIUS else math.sinh(r) / r
        ch = math.cosh(r)
    except OverflowError:
        # same outcome as the array path: non-finite coordinates
        return [math.inf] * (len(z) + 1)
    xs = [ch * m + sr * (a + coef * m) for a, m in zip(z, mu[1:])]
    return [math.sqrt(1.0 + sum(c * c for c in xs))] + xs
