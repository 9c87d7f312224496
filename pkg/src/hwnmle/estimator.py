"""Shell-constrained profile maximum likelihood estimator.

The location is optimised in the global coordinate ``nu`` with
``mu = Exp_o((0, nu))``; the covariance is profiled out by spectral
clipping at every evaluation.  Minimisation uses BFGS on the inverse
Hessian with finite-difference gradients and Armijo backtracking.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .geometry import HyperPoint, exp_origin, origin, project_to_hyperboloid, tangent_coords
from .model import Sample
from .profile import covariance_profile, objective_at, objective_gradient, profiled_objective
from .rng import derive_rng, standard_normal
from .spd import Shell, clip_spectrum

__all__ = [
    "FitOptions",
    "FitResult",
    "ConvergenceError",
    "FitError",
    "frechet_mean",
    "two_step_init",
    "fit",
    "minimize_bfgs",
]

log = logging.getLogger(__name__)

ARMIJO_C1 = 1e-4
BACKTRACK = 0.5
MAX_BACKTRACKS = 50
TIE_TOL = 1e-12
WOLFE_C2 = 0.9
# relative rounding noise of the profiled criterion (measured ~5e-15)
NOISE_REL = 1e-13
FLOOR_FACTOR = 100.0


class ConvergenceError(RuntimeError):
    """Iteration did not converge; ``last`` holds the final iterate."""

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class FitError(RuntimeError):
    """No start converged; ``result`` holds the best iterate found."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class FitOptions:
    shell: Shell = field(default_factory=Shell)
    grad_tol: float = 1e-6
    step_tol: float = 1e-10
    max_iters: int = 500
    n_starts: int = 1
    perturb_sd: float = 0.1
    fd_step: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.shell, dict):
            object.__setattr__(self, "shell", Shell(**self.shell))
        if self.grad_tol <= 0 or self.step_tol <= 0 or self.fd_step <= 0 or self.perturb_sd < 0:
            raise ValueError("tolerances and steps must be positive")
        if self.max_iters < 1 or self.n_starts < 1:
            raise ValueError("max_iters and n_starts must be at least 1")


@dataclass(frozen=True, eq=False)
class FitResult:
    mu_hat: HyperPoint
    sigma_hat: np.ndarray
    nu_hat: np.ndarray
    objective: float
    iterations: int
    converged: bool
    shell_active: bool
    n_starts_used: int
    grad_norm: float = math.nan

    def to_dict(self) -> dict:
        return {
            "mu_hat": self.mu_hat.coords.tolist(),
            "sigma_hat": self.sigma_hat.tolist(),
            "nu_hat": self.nu_hat.tolist(),
            "objective": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
            "shell_active": self.shell_active,
            "n_starts_used": self.n_starts_used,
            "grad_norm": self.grad_norm,
        }


def frechet_mean(data: Sample, tol: float = 1e-9, max_iters: int = 100) -> HyperPoint:
    """Sample Frechet mean by a safeguarded Karcher iteration.

    ``mu <- Exp_mu(P mean_i Log_mu(X_i))``, started at the projected
    Euclidean mean of the ambient coordinates and stopped once the mean
    tangent vector has norm at most ``tol``.  The step is preconditioned by
    the Hessian of the Frechet function ``F = mean r_i^2 / 2``, which has
    weight 1 along each geodesic to a data point and ``r coth r`` across it.
    If that step fails to decrease ``F``, the damped step
    ``tau = 2 / (1 + mean r coth r)`` is used and halved until it does.  The
    plain unit step oscillates for widely spread data.  Once the stopping
    rule holds, the final preconditioned step is still applied when it does
    not increase ``F``.
    """
    X = data.points if isinstance(data, Sample) else np.asarray(data, dtype=float)
    mu = project_to_hyperboloid(X.mean(axis=0)).coords
    Z, r = _backend.tangent_coords_batch(mu, X)
    for _ in range(max_iters):
        step = Z.mean(axis=0)
        step_sq = float(step @ step)
        value = 0.5 * float(np.mean(r * r))
        slack = 1e-12 * value
        done = math.sqrt(step_sq) <= tol

        def trial(delta):
            cand = _backend.wrap_batch(mu, delta[None, :])[0]
            Zc, rc = _backend.tangent_coords_batch(cand, X)
            return cand, Zc, rc, 0.5 * float(np.mean(rc * rc))

        if done and step_sq == 0.0:
            return HyperPoint(mu)
        coth = np.ones_like(r)
        far = r > 1e-8
        coth[far] = r[far] / np.tanh(r[far])
        # Hessian of F: unit weight along each geodesic, r coth r across it
        U = np.zeros_like(Z)
        U[far] = Z[far] / r[far, None]
        H = np.diag(np.full(Z.shape[1], coth.mean())) + ((1.0 - coth)[:, None] * U).T @ U / len(r)
        cand, Zc, rc, fc = trial(np.linalg.solve(H, step))
        if done:
            # the last Newton step is nearly free and sharpens the answer
            return HyperPoint(cand if fc <= value + slack else mu)
        if not fc <= value + slack:
            tau = 2.0 / (1.0 + coth.mean())
            for _halving in range(30):
                cand, Zc, rc, fc = trial(tau * step)
                if fc <= value + slack:
                    break
                tau *= 0.5
        mu, Z, r = cand, Zc, rc
    raise ConvergenceError(f"Frechet mean did not converge in {max_iters} iterations", HyperPoint(mu))


def two_step_init(data: Sample, shell: Shell):
    """Frechet mean and the shell-clipped tangent scatter around it."""
    mu = frechet_mean(data)
    sigma, _active = covariance_profile(mu, data, shell)
    return mu, sigma


@dataclass
class _Run:
    nu: np.ndarray
    f: float
    grad: np.ndarray
    iterations: int
    converged: bool


def minimize_bfgs(func, grad, x0, grad_tol=1e-6, step_tol=1e-10, max_iters=500, check_descent=True) -> _Run:
    """BFGS with Armijo backtracking (c1 = 1e-4, factor 0.5, at most 50 halvings).

    Stops when ``max|g| <= grad_tol`` or the relative step falls to
    ``step_tol``.  Close to the optimum the Armijo decrease drops below the
    rounding noise of ``func``; the full quasi-Newton step is then accepted
    if it stays within that noise and passes the strong Wolfe curvature test.
    """
    x = np.array(x0, dtype=float)
    f = func(x)
    g = grad(x)
    n = x.shape[0]
    H = np.eye(n)
    first = True
    for it in range(max_iters):
        if np.max(np.abs(g)) <= grad_tol:
            return _Run(x, f, g, it, True)
        p = -H @ g
        slope = float(g @ p)
        if slope >= 0:
            H = np.eye(n)
            p = -g
            slope = float(g @ p)
        if first:
            # unit first step in the steepest-descent direction
            scale = 1.0 / max(1.0, float(np.linalg.norm(p)))
            p = p * scale
            slope *= scale
        noise = NOISE_REL * max(1.0, abs(f))
        g_new = None
        t = 1.0
        for k in range(MAX_BACKTRACKS):
            x_new = x + t * p
            f_new = _safe(func, x_new)
            if f_new <= f + ARMIJO_C1 * t * slope:
                break
            if k == 0 and not first and f_new <= f + noise:
                g_try = grad(x_new)
                if abs(float(g_try @ p)) <= WOLFE_C2 * abs(slope):
                    g_new = g_try
                    break
            t *= BACKTRACK
        else:
            # no measurable decrease along a descent direction: stationary to
            # within evaluation precision only if the predicted decrease is noise
            at_floor = abs(slope) <= FLOOR_FACTOR * noise
            return _Run(x, f, g, it, bool(np.max(np.abs(g)) <= grad_tol or at_floor))
        if check_descent:
            assert f_new <= f + noise, "line search accepted an ascent step"
        s = x_new - x
        if g_new is None:
            g_new = grad(x_new)
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            if first:
                H = np.eye(n) * (sy / float(y @ y))
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
            first = False
        x, f, g = x_new, f_new, g_new
        if np.max(np.abs(g)) <= grad_tol:
            return _Run(x, f, g, it + 1, True)
        if np.linalg.norm(s) <= step_tol * max(1.0, float(np.linalg.norm(x))):
            return _Run(x, f, g, it + 1, True)
    return _Run(x, f, g, max_iters, bool(np.max(np.abs(g)) <= grad_tol))


def _safe(func, x) -> float:
    try:
        v = func(x)
    except (FloatingPointError, ValueError, OverflowError):
        return math.inf
    return v if math.isfinite(v) else math.inf


def fit(data: Sample, opts: FitOptions | None = None) -> FitResult:
    """Profile MLE of ``(mu, Sigma)`` for HWN data.

    Raises :class:`FitError` (carrying the best iterate) when no start
    converges.
    """
    opts = opts or FitOptions()
    if not isinstance(data, Sample):
        data = Sample(data)
    if data.dim < 2:
        raise ValueError("d must be at least 2")
    X = data.points
    shell = opts.shell
    mu_f = frechet_mean(data)
    nu0 = tangent_coords(origin(data.dim), mu_f)

    starts = [np.array(nu0)]
    if opts.n_starts > 1:
        rng = derive_rng(opts.seed, 0)
        eps = standard_normal(rng, (opts.n_starts - 1, data.dim)) * opts.perturb_sd
        starts += [nu0 + e for e in eps]

    def func(nu):
        return objective_at(nu, X, shell)

    def grad(nu):
        return objective_gradient(nu, X, shell, opts.fd_step)

    runs = []
    for k, start in enumerate(starts):
        try:
            runs.append(minimize_bfgs(func, grad, start, opts.grad_tol, opts.step_tol, opts.max_iters))
        except FloatingPointError as exc:
            log.warning("start %d failed: %s", k, exc)
    if not runs:
        raise FitError("every start failed numerically")

    converged = [r for r in runs if r.converged]
    pool = converged or runs
    best = pool[0]
    for r in pool[1:]:
        if r.f < best.f - TIE_TOL:
            best = r

    mu_hat = exp_origin(best.nu)
    pv = profiled_objective(mu_hat, X, shell)
    result = FitResult(
        mu_hat=mu_hat,
        sigma_hat=pv.sigma_profile,
        nu_hat=best.nu,
        objective=pv.objective,
        iterations=best.iterations,
        converged=best.converged,
        shell_active=pv.shell_active,
        n_starts_used=len(starts),
        grad_norm=float(np.max(np.abs(best.grad))),
    )
    if not converged:
        raise FitError("no start converged", result)
    return result
