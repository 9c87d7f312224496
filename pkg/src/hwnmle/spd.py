"""Symmetric positive definite matrix calculus.

Half-vectorisation uses the lower triangle in column-major order, so for a
3x3 matrix ``vech(A) = (a00, a10, a20, a11, a21, a22)``.  Every module that
packs covariance coordinates goes through :func:`vech` / :func:`mat`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Shell",
    "vech",
    "mat",
    "vech_size",
    "sym_eig",
    "spd_log",
    "spd_exp",
    "cholesky",
    "clip_spectrum",
    "make_test_covariance",
    "random_rotation",
    "is_spd",
]

SYMMETRY_TOL = 1e-12
PSD_FLOOR_TOL = 1e-10


@dataclass(frozen=True)
class Shell:
    """Eigenvalue bounds ``lambda_minus * I <= Sigma <= lambda_plus * I``."""

    lambda_minus: float = 0.03
    lambda_plus: float = 20.0

    def __post_init__(self):
        lo, hi = float(self.lambda_minus), float(self.lambda_plus)
        if not (math.isfinite(lo) and math.isfinite(hi)) or not 0.0 < lo < hi:
            raise ValueError(f"shell needs 0 < lambda_minus < lambda_plus, got ({lo}, {hi})")
        object.__setattr__(self, "lambda_minus", lo)
        object.__setattr__(self, "lambda_plus", hi)

    def contains(self, eigenvalues) -> bool:
        """True when every eigenvalue lies strictly inside the shell."""
        s = np.asarray(eigenvalues)
        return bool(np.all((s > self.lambda_minus) & (s < self.lambda_plus)))


def _check_symmetric(A, tol=SYMMETRY_TOL) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    if np.abs(A - A.T).max(initial=0.0) > tol * scale:
        raise ValueError("matrix is not symmetric")
    return A


def vech_size(d: int) -> int:
    return d * (d + 1) // 2


def _dim_from_vech(m: int) -> int:
    d = int(round((math.sqrt(8 * m + 1) - 1) / 2))
    if vech_size(d) != m or m == 0:
        raise ValueError(f"length {m} is not a triangular number")
    return d


def _vech_index(d: int):
    # column-major lower triangle == row-major upper triangle, transposed
    cols, rows = np.triu_indices(d)
    return rows, cols


def vech(A) -> np.ndarray:
    A = _check_symmetric(A)
    rows, cols = _vech_index(A.shape[0])
    return A[rows, cols].copy()


def mat(b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.ndim != 1:
        raise ValueError("vech vector must be one-dimensional")
    d = _dim_from_vech(b.shape[0])
    rows, cols = _vech_index(d)
    A = np.zeros((d, d))
    A[rows, cols] = b
    A[cols, rows] = b
    return A


def sym_eig(A):
    """Eigen-decomposition of a symmetric matrix, eigenvalues ascending."""
    A = _check_symmetric(A, tol=1e-8)
    try:
        s, U = np.linalg.eigh(0.5 * (A + A.T))
    except np.linalg.LinAlgError as exc:
        raise FloatingPointError(f"eigensolver failed: {exc}") from exc
    return s, U


def is_spd(A) -> bool:
    try:
        s, _ = sym_eig(A)
    except (ValueError, FloatingPointError):
        return False
    return bool(s[0] > 0)


def spd_log(S) -> np.ndarray:
    s, U = sym_eig(S)
    if s[0] <= 0:
        raise ValueError("matrix logarithm needs a positive definite matrix")
    L = (U * np.log(s)) @ U.T
    return 0.5 * (L + L.T)


def spd_exp(B) -> np.ndarray:
    s, U = sym_eig(B)
    E = (U * np.exp(s)) @ U.T
    return 0.5 * (E + E.T)


def cholesky(S) -> np.ndarray:
    S = _check_symmetric(S, tol=1e-8)
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise ValueError("Cholesky factorisation needs a positive definite matrix") from exc


def clip_spectrum(S, shell: Shell) -> np.ndarray:
    """Project the spectrum of a PSD matrix onto ``[lambda_minus, lambda_plus]``.

    This is the exact minimiser of ``log det Sigma + tr(S Sigma^{-1})`` over
    covariances with eigenvalues in the shell.  When the spectrum is already
    inside, the (symmetrised) input is returned unchanged, bit for bit.
    """
    S = _check_symmetric(S, tol=1e-9)
    S = 0.5 * (S + S.T)
    s, U = sym_eig(S)
    if s[0] < -PSD_FLOOR_TOL * max(1.0, abs(s[-1])):
        raise ValueError(f"matrix is not positive semidefinite (eigenvalue {s[0]:.3g})")
    if s[0] >= shell.lambda_minus and s[-1] <= shell.lambda_plus:
        return S
    c = np.clip(np.maximum(s, 0.0), shell.lambda_minus, shell.lambda_plus)
    out = (U * c) @ U.T
    return 0.5 * (out + out.T)


def random_rotation(d: int, rng) -> np.ndarray:
    """Haar-distributed element of SO(d) via sign-fixed QR of a Gaussian matrix."""
    from .rng import standard_normal

    G = standard_normal(rng, (d, d))
    Q, R = np.linalg.qr(G)
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


def make_test_covariance(d: int, condition_number: float, scale: float, rng) -> np.ndarray:
    """Randomly rotated covariance with geometrically spaced eigenvalues.

    Eigenvalues run from ``scale`` to ``scale * condition_number``.
    """
    if d < 2:
        raise ValueError("d must be at least 2")
    if condition_number < 1:
        raise ValueError("condition number must be >= 1")
    eig = scale * condition_number ** (np.arange(d) / (d - 1))
    eig[-1] = scale * condition_number
    if condition_number == 1:
        return scale * np.eye(d)
    Q = random_rotation(d, rng)
    S = (Q * eig) @ Q.T
    return 0.5 * (S + S.T)
