"""Lorentz-model primitives for hyperbolic space of curvature -1.

Points of ``H^d`` are stored as ambient vectors ``x`` in ``R^{d+1}`` with
``<x, x>_L = -1`` and ``x[0] > 0``.  The tangent space at the origin
``o = (1, 0, ..., 0)`` is identified with ``R^d`` through ``(0, u) <-> u``.

The scalar API works on :class:`HyperPoint` / :class:`TangentVec` values and
validates its inputs.  Batched versions used by the likelihood code live in
:mod:`hwnmle._backend`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _backend

__all__ = [
    "HyperPoint",
    "TangentVec",
    "lorentz_inner",
    "lorentz_norm",
    "origin",
    "project_to_hyperboloid",
    "distance",
    "exp_map",
    "log_map",
    "parallel_transport",
    "tangent_coords",
    "embed_tangent_at_origin",
    "phi",
    "exp_origin",
]

ON_MANIFOLD_TOL = 1e-10
TANGENT_TOL = 1e-8
SMALL_RADIUS = 1e-8
PHI_SERIES_MAX = 1e-3
PHI_DIRECT_MAX = 20.0


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


def lorentz_inner(x, y) -> float:
    """Lorentz bilinear form ``-x0*y0 + sum_j xj*yj``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if x.shape[0] < 3:
        raise ValueError("ambient dimension must be at least 3 (d >= 2)")
    return float(-x[0] * y[0] + x[1:] @ y[1:])


def lorentz_norm(v) -> float:
    """Norm of a tangent vector; clamps the tiny negative round-off at zero."""
    return math.sqrt(max(lorentz_inner(v, v), 0.0))


@dataclass(frozen=True, eq=False)
class HyperPoint:
    """A point on the upper sheet of the hyperboloid."""

    coords: np.ndarray

    def __post_init__(self):
        c = _frozen(self.coords)
        if c.ndim != 1 or c.shape[0] < 3:
            raise ValueError("a point needs an ambient vector of length d+1 >= 3")
        if not np.all(np.isfinite(c)):
            raise FloatingPointError("non-finite coordinates")
        if c[0] <= 0:
            raise ValueError("point is not on the upper sheet (x0 <= 0)")
        resid = abs(-c[0] * c[0] + c[1:] @ c[1:] + 1.0)
        if resid > ON_MANIFOLD_TOL * max(1.0, c[0] * c[0]):
            raise ValueError(f"point is off the hyperboloid (residual {resid:.3g})")
        object.__setattr__(self, "coords", c)

    @property
    def dim(self) -> int:
        return self.coords.shape[0] - 1

    @property
    def spatial(self) -> np.ndarray:
        return self.coords[1:]

    def __repr__(self):
        return f"HyperPoint({np.array2string(self.coords, precision=6)})"


@dataclass(frozen=True, eq=False)
class TangentVec:
    """A tangent vector ``vec`` attached to ``base``.

    Construction checks Lorentz orthogonality to the base point and removes
    the residual normal component by recomputing the time entry.
    """

    base: HyperPoint
    vec: np.ndarray

    def __post_init__(self):
        v = np.array(self.vec, dtype=float)
        mu = self.base.coords
        if v.shape != mu.shape:
            raise ValueError(f"dimension mismatch: {v.shape} vs {mu.shape}")
        if not np.all(np.isfinite(v)):
            raise FloatingPointError("non-finite tangent vector")
        ip = -mu[0] * v[0] + mu[1:] @ v[1:]
        scale = max(1.0, float(np.abs(v).max()) * float(mu[0]))
        if abs(ip) > TANGENT_TOL * scale:
            raise ValueError(f"vector is not tangent at base (<mu,v>_L = {ip:.3g})")
        if ip != 0.0:
            # recompute the time entry from the spatial part
            v[0] = float(mu[1:] @ v[1:]) / mu[0]
        v.setflags(write=False)
        object.__setattr__(self, "vec", v)

    @property
    def norm(self) -> float:
        # Euclidean norm after transport to the origin; no cancellation
        mu, v = self.base.coords, self.vec
        return float(np.linalg.norm(v[1:] - (v[0] / (mu[0] + 1.0)) * mu[1:]))


def origin(d: int) -> HyperPoint:
    o = np.zeros(d + 1)
    o[0] = 1.0
    return HyperPoint(o)


def project_to_hyperboloid(y) -> HyperPoint:
    """Repair a near-manifold ambient vector by recomputing its time coordinate."""
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y[1:])):
        raise FloatingPointError("non-finite spatial coordinates")
    out = np.empty_like(y)
    out[1:] = y[1:]
    with np.errstate(over="ignore"):
        out[0] = math.sqrt(1.0 + y[1:] @ y[1:])
    if not math.isfinite(out[0]):
        raise FloatingPointError("coordinates too large to represent")
    return HyperPoint(out)


def _point(x) -> HyperPoint:
    return x if isinstance(x, HyperPoint) else HyperPoint(x)


def distance(x, y) -> float:
    """Geodesic distance ``arcosh(-<x, y>_L)``.

    Close points (``-<x, y>_L < 2``) go through ``2 asinh(|x - y|_L / 2)``,
    which avoids the cancellation in ``-<x, y>_L - 1``.
    """
    x, y = _point(x), _point(y)
    a = -lorentz_inner(x.coords, y.coords)
    if a >= 2.0:
        return math.acosh(a)
    diff = x.coords - y.coords
    chord2 = -diff[0] * diff[0] + diff[1:] @ diff[1:]
    return 2.0 * math.asinh(0.5 * math.sqrt(max(chord2, 0.0)))


def exp_map(mu, v) -> HyperPoint:
    """Exponential map at ``mu``; ``v`` may be a TangentVec or a raw ambient vector."""
    mu = _point(mu)
    if not isinstance(v, TangentVec):
        v = TangentVec(mu, v)
    elif v.base is not mu and not np.array_equal(v.base.coords, mu.coords):
        raise ValueError("tangent vector is based at a different point")
    # transport to the origin, exponentiate there and boost back; this avoids
    # cancelling ambient terms of size cosh(r) * mu0
    u = v.vec[1:] - (v.vec[0] / (mu.coords[0] + 1.0)) * mu.coords[1:]
    return HyperPoint(_backend.wrap_batch(mu.coords, u[None, :])[0])


def log_map(mu, x) -> TangentVec:
    mu, x = _point(mu), _point(x)
    if np.array_equal(mu.coords, x.coords):
        return TangentVec(mu, np.zeros_like(mu.coords))
    u = _origin_coords(mu, x)
    m0, ms = mu.coords[0], mu.coords[1:]
    c = float(ms @ u)
    vec = np.concatenate([[c], u + (c / (m0 + 1.0)) * ms])
    return TangentVec(mu, vec)


def _origin_coords(mu: HyperPoint, x: HyperPoint) -> np.ndarray:
    return _backend.tangent_coords_batch(mu.coords, x.coords[None, :])[0][0]


def parallel_transport(x, y, v) -> TangentVec:
    """Transport ``v`` from ``x`` to ``y`` along the connecting geodesic."""
    x, y = _point(x), _point(y)
    if not isinstance(v, TangentVec):
        v = TangentVec(x, v)
    elif not np.array_equal(v.base.coords, x.coords):
        raise ValueError("tangent vector is not based at the source point")
    alpha = -lorentz_inner(x.coords, y.coords)
    coef = lorentz_inner(y.coords, v.vec) / (alpha + 1.0)
    return TangentVec(y, v.vec + coef * (x.coords + y.coords))


def embed_tangent_at_origin(u) -> TangentVec:
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise FloatingPointError("non-finite tangent coordinates")
    return TangentVec(origin(u.shape[0]), np.concatenate([[0.0], u]))


def tangent_coords(mu, x) -> np.ndarray:
    """Coordinates of ``x`` in ``R^d`` centred at ``mu``.

    Log at ``mu``, transport back to the origin, drop the zero time entry.
    The Euclidean norm of the result equals ``distance(mu, x)``.
    """
    mu, x = _point(mu), _point(x)
    return _frozen(_origin_coords(mu, x))


def exp_origin(u) -> HyperPoint:
    """``Exp_o((0, u))`` computed directly from the coordinates."""
    u = np.asarray(u, dtype=float)
    r = float(np.linalg.norm(u))
    c = np.empty(u.shape[0] + 1)
    if r < SMALL_RADIUS:
        c[1:] = (1.0 + r * r / 6.0) * u
    else:
        try:
            c[1:] = (math.sinh(r) / r) * u
        except OverflowError:
            raise FloatingPointError(f"Exp_o overflows at radius {r:.6g}") from None
    return project_to_hyperboloid(c)


def phi(r: float) -> float:
    """``log(sinh(r) / r)`` with stable small- and large-radius branches."""
    r = float(r)
    if not math.isfinite(r) or r < 0:
        raise ValueError(f"phi needs a finite non-negative radius, got {r}")
    if r < PHI_SERIES_MAX:
        r2 = r * r
        return r2 / 6.0 - r2 * r2 / 180.0
    if r <= PHI_DIRECT_MAX:
        return math.log(math.sinh(r) / r)
    return r - math.log(2.0 * r) + math.log1p(-math.exp(-2.0 * r))
