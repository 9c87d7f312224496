"""Covariance-profiled negative log-likelihood.

For a candidate location ``mu`` the covariance is profiled out exactly: the
empirical tangent scatter ``S_n(mu)`` is eigen-decomposed and its spectrum
clipped to the shell.  The resulting criterion is

    Q(mu) = (n/2) log det Sigma~ + (n/2) tr(S_n Sigma~^{-1}) + (d-1) sum_i phi(r_i)

which is minimised over ``mu``.  Everything here is oriented for
minimisation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .geometry import HyperPoint, exp_origin
from .model import Sample
from .spd import Shell, clip_spectrum

__all__ = [
    "ProfiledValue",
    "tangent_scatter",
    "covariance_profile",
    "profiled_objective",
    "practical_objective",
    "objective_at",
    "objective_gradient",
]


@dataclass(frozen=True, eq=False)
class ProfiledValue:
    objective: float
    sigma_profile: np.ndarray
    scatter: np.ndarray
    shell_active: bool


def _coords(mu) -> np.ndarray:
    return mu.coords if isinstance(mu, HyperPoint) else np.asarray(mu, dtype=float)


def _points(data) -> np.ndarray:
    return data.points if isinstance(data, Sample) else np.asarray(data, dtype=float)


def tangent_scatter(mu, data) -> np.ndarray:
    """``(1/n) sum_i T_mu(X_i) T_mu(X_i)^T``, symmetric PSD."""
    S, _ = _backend.scatter_phi(_coords(mu), _points(data))
    return S


def covariance_profile(mu, data, shell: Shell):
    """Shell-constrained covariance maximising the likelihood at ``mu``.

    Returns ``(sigma_profile, shell_active)``.
    """
    S = tangent_scatter(mu, data)
    s = np.linalg.eigvalsh(S)
    return clip_spectrum(S, shell), not shell.contains(s)


def profiled_objective(mu, data, shell: Shell) -> ProfiledValue:
    X = _points(data)
    n, d = X.shape[0], X.shape[1] - 1
    S, phi_sum = _backend.scatter_phi(_coords(mu), X)
    s = np.linalg.eigvalsh(S)
    clipped = np.clip(np.maximum(s, 0.0), shell.lambda_minus, shell.lambda_plus)
    # trace term in the eigenbasis of S: sum_j s_j / clip(s_j)
    value = 0.5 * n * (np.log(clipped).sum() + (s / clipped).sum()) + (d - 1) * phi_sum
    return ProfiledValue(
        objective=float(value),
        sigma_profile=clip_spectrum(S, shell),
        scatter=S,
        shell_active=not shell.contains(s),
    )


def practical_objective(mu, data) -> float:
    """Unconstrained profile ``(n/2) log det S_n(mu) + (d-1) sum phi``.

    Differs from the shell-constrained criterion by exactly ``nd/2`` while the
    shell is inactive; ``+inf`` when the scatter is singular.
    """
    X = _points(data)
    n, d = X.shape[0], X.shape[1] - 1
    S, phi_sum = _backend.scatter_phi(_coords(mu), X)
    sign, logdet = np.linalg.slogdet(S)
    if sign <= 0:
        return float("inf")
    return float(0.5 * n * logdet + (d - 1) * phi_sum)


def objective_at(nu, data, shell: Shell) -> float:
    """Criterion as a function of the global coordinate ``mu = Exp_o((0, nu))``."""
    return profiled_objective(exp_origin(nu), data, shell).objective


def objective_gradient(nu, data, shell: Shell, step: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient with steps ``step * max(1, |nu_j|)``."""
    if step <= 0:
        raise ValueError("step must be positive")
    nu = np.asarray(nu, dtype=float)
    X = _points(data)
    grad = np.empty_like(nu)
    for j in range(nu.shape[0]):
        h = step * max(1.0, abs(nu[j]))
        up = nu.copy()
        up[j] += h
        dn = nu.copy()
        dn[j] -= h
        f_up = objective_at(up, X, shell)
        f_dn = objective_at(dn, X, shell)
        if not (np.isfinite(f_up) and np.isfinite(f_dn)):
            raise FloatingPointError(f"non-finite objective while differentiating coordinate {j}")
        grad[j] = (f_up - f_dn) / (up[j] - dn[j])
    return grad
