"""The anisotropic hyperbolic wrapped normal distribution HWN_d(mu, Sigma).

``X = Exp_mu(PT_{o->mu} Z)`` with ``Z ~ N_d(0, Sigma)``.  Its density with
respect to the Riemannian volume is the Gaussian density of the tangent
coordinates ``T_mu(x)`` times the Jacobian factor ``(r / sinh r)^(d-1)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from . import _backend
from .geometry import HyperPoint
from .rng import standard_normal
from .spd import cholesky

__all__ = [
    "HwnParams",
    "Sample",
    "sample",
    "log_density",
    "log_density_batch",
    "density",
    "log_likelihood",
    "likelihood_decomposition",
    "read_sample_csv",
    "write_sample_csv",
]

LOG_2PI = math.log(2.0 * math.pi)
CSV_MANIFOLD_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class HwnParams:
    mu: HyperPoint
    sigma: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mu = self.mu if isinstance(self.mu, HyperPoint) else HyperPoint(self.mu)
        sigma = np.array(self.sigma, dtype=float)
        if sigma.shape != (mu.dim, mu.dim):
            raise ValueError(f"sigma must be {mu.dim}x{mu.dim}, got {sigma.shape}")
        sigma.setflags(write=False)
        L = cholesky(sigma)
        L.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "chol", L)

    @property
    def dim(self) -> int:
        return self.mu.dim

    @property
    def log_det_sigma(self) -> float:
        return 2.0 * float(np.log(np.diag(self.chol)).sum())


@dataclass(frozen=True, eq=False)
class Sample:
    """Observations as rows of an ``(n, d+1)`` array of ambient coordinates."""

    points: np.ndarray

    def __post_init__(self):
        X = np.array(self.points, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 3:
            raise ValueError(f"sample must be a nonempty (n, d+1) array with d >= 2, got {X.shape}")
        if not np.all(np.isfinite(X)):
            raise FloatingPointError("sample contains non-finite coordinates")
        if np.any(X[:, 0] <= 0):
            raise ValueError("sample point on the lower sheet")
        with np.errstate(over="ignore", invalid="ignore"):
            resid = np.abs(-X[:, 0] ** 2 + np.einsum("ij,ij->i", X[:, 1:], X[:, 1:]) + 1.0)
        if not np.all(np.isfinite(resid)):
            raise FloatingPointError("sample coordinates too large to represent")
        if np.any(resid > CSV_MANIFOLD_TOL * np.maximum(1.0, X[:, 0] ** 2)):
            raise ValueError(f"sample point off the hyperboloid (residual {resid.max():.3g})")
        X[:, 0] = np.sqrt(1.0 + np.einsum("ij,ij->i", X[:, 1:], X[:, 1:]))
        X.setflags(write=False)
        object.__setattr__(self, "points", X)

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1] - 1

    def __getitem__(self, i) -> HyperPoint:
        return HyperPoint(self.points[i])


def sample(params: HwnParams, n: int, rng, return_tangent: bool = False):
    """Draw ``n`` points.

    With ``return_tangent=True`` also return the Gaussian tangent draws ``Z``
    (shape ``(n, d)``) that were wrapped onto the manifold.
    """
    if n < 1:
        raise ValueError("n must be positive")
    xi = standard_normal(rng, (n, params.dim))
    Z = xi @ params.chol.T
    X = _backend.wrap_batch(params.mu.coords, Z)
    out = Sample(X)
    return (out, Z) if return_tangent else out


def _as_rows(x) -> np.ndarray:
    if isinstance(x, Sample):
        return x.points
    if isinstance(x, HyperPoint):
        return x.coords[None, :]
    X = np.asarray(x, dtype=float)
    return X[None, :] if X.ndim == 1 else X


def log_density_batch(params: HwnParams, X, constant: bool = True) -> np.ndarray:
    """Log-density at each row of ``X``.

    ``constant=False`` drops ``-(d/2) log(2 pi)``, giving the criterion
    the optimisers work with.
    """
    X = _as_rows(X)
    d = params.dim
    Z, r = _backend.tangent_coords_batch(params.mu.coords, X)
    y = _solve_lower(params.chol, Z.T)
    out = -0.5 * params.log_det_sigma - 0.5 * np.einsum("ij,ij->j", y, y)
    out -= (d - 1) * _backend.phi_batch(r)
    if constant:
        out -= 0.5 * d * LOG_2PI
    return out


def _solve_lower(L, B):
    return solve_triangular(L, B, lower=True, check_finite=False)


def log_density(params: HwnParams, x) -> float:
    return float(log_density_batch(params, _as_rows(x))[0])


def density(params: HwnParams, x) -> float:
    return math.exp(log_density(params, x))


def log_likelihood(params: HwnParams, data: Sample) -> float:
    return float(log_density_batch(params, data).sum())


def likelihood_decomposition(params: HwnParams, data: Sample) -> dict:
    """The log-likelihood written through the tangent scatter ``S_n(mu)``.

    ``-(n/2) log det Sigma - (n/2) tr(S_n Sigma^{-1}) - (d-1) sum phi - (nd/2) log 2pi``.
    Returns the individual terms and their ``total``.
    """
    n, d = len(data), params.dim
    S, phi_sum = _backend.scatter_phi(params.mu.coords, data.points)
    W = _solve_lower(params.chol, S)
    W = _solve_lower(params.chol, W.T)
    terms = {
        "log_det": -0.5 * n * params.log_det_sigma,
        "trace": -0.5 * n * float(np.trace(W)),
        "jacobian": -(d - 1) * phi_sum,
        "constant": -0.5 * n * d * LOG_2PI,
    }
    terms["total"] = sum(terms.values())
    return terms


def write_sample_csv(data: Sample, dest) -> None:
    """Write ``x0,...,xd`` rows to a path or an open text stream."""
    if hasattr(dest, "write"):
        _write_rows(data, dest)
        return
    with open(dest, "w", newline="") as fh:
        _write_rows(data, fh)


def _write_rows(data: Sample, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow([f"x{j}" for j in range(data.dim + 1)])
    for row in data.points:
        w.writerow([repr(float(v)) for v in row])


def read_sample_csv(path) -> Sample:
    """Read a sample; rows are checked against the hyperboloid and re-projected."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        expected = [f"x{j}" for j in range(len(header))]
        if [h.strip() for h in header] != expected:
            raise ValueError(f"{path}: header must be {','.join(expected)}")
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return Sample(np.array(rows))
