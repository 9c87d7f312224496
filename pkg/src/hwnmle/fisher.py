"""Fisher information in the local chart and Wald regions.

The chart around ``(mu0, Sigma0)`` uses ``alpha`` in ``R^d`` and
``beta = vech(log Sigma)``:

    mu(alpha) = Exp_mu0(PT_{o->mu0}(0, alpha)),  Sigma(beta) = exp(mat(beta)),

so that ``alpha = T_mu0(mu)``.  Scores are central finite differences of the
constant-free log-density; the information is the Monte Carlo mean of score
outer products, and the location block is reduced by a Schur complement.
"""
from __future__ import annotations

import json
import math
from functools import lru_cache
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _backend
from .geometry import HyperPoint, tangent_coords
from .model import HwnParams, log_density_batch, sample
from .rng import derive_rng
from .spd import mat, spd_exp, spd_log, vech, vech_size

__all__ = [
    "Chart",
    "InfoMatrices",
    "params_from_chart",
    "score",
    "score_batch",
    "mc_fisher_information",
    "hessian_information",
    "schur_complement",
    "efficient_score",
    "chi_square_quantile",
    "chi_square_cdf",
    "wald_location_statistic",
    "wald_full_statistic",
    "wald_location_covered",
    "wald_full_covered",
]

SCORE_STEP = 1e-5
HESSIAN_STEP = 1e-4
MAX_CONDITION = 1e12
PARTITION = 5000


@dataclass(frozen=True, eq=False)
class Chart:
    mu0: HyperPoint
    beta0: np.ndarray

    def __post_init__(self):
        mu0 = self.mu0 if isinstance(self.mu0, HyperPoint) else HyperPoint(self.mu0)
        beta0 = np.array(self.beta0, dtype=float)
        if beta0.shape != (vech_size(mu0.dim),):
            raise ValueError(f"beta0 must have length {vech_size(mu0.dim)} for d={mu0.dim}")
        beta0.setflags(write=False)
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "beta0", beta0)

    @classmethod
    def at(cls, params: HwnParams) -> "Chart":
        return cls(params.mu, vech(spd_log(params.sigma)))

    @property
    def d(self) -> int:
        return self.mu0.dim

    @property
    def p(self) -> int:
        return self.d + self.beta0.shape[0]

    @property
    def theta0(self) -> np.ndarray:
        return np.concatenate([np.zeros(self.d), self.beta0])


def params_from_chart(chart: Chart, alpha, beta) -> HwnParams:
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (chart.d,):
        raise ValueError(f"alpha must have length {chart.d}")
    if np.all(alpha == 0.0):
        mu = chart.mu0
    else:
        mu = HyperPoint(_backend.wrap_batch(chart.mu0.coords, alpha[None, :])[0])
    return HwnParams(mu, spd_exp(mat(beta)))


def _theta_params(chart: Chart, theta) -> HwnParams:
    return params_from_chart(chart, theta[: chart.d], theta[chart.d :])


def score_batch(chart: Chart, theta, X, fd_step: float = SCORE_STEP) -> np.ndarray:
    """Scores of the rows of ``X`` at ``theta``; shape ``(len(X), p)``."""
    if fd_step <= 0:
        raise ValueError("fd_step must be positive")
    theta = np.asarray(theta, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.empty((X.shape[0], theta.shape[0]))
    for k in range(theta.shape[0]):
        h = fd_step * max(1.0, abs(theta[k]))
        up = theta.copy()
        up[k] += h
        dn = theta.copy()
        dn[k] -= h
        f_up = log_density_batch(_theta_params(chart, up), X, constant=False)
        f_dn = log_density_batch(_theta_params(chart, dn), X, constant=False)
        out[:, k] = (f_up - f_dn) / (up[k] - dn[k])
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite score")
    return out


def score(chart: Chart, theta, x, fd_step: float = SCORE_STEP) -> np.ndarray:
    x = x.coords if isinstance(x, HyperPoint) else x
    return score_batch(chart, theta, np.asarray(x)[None, :], fd_step)[0]


def schur_complement(full, d: int) -> np.ndarray:
    """``I_aa - I_ab I_bb^{-1} I_ba`` via a solve against the nuisance block."""
    full = np.asarray(full, dtype=float)
    Iaa, Iab, Ibb = full[:d, :d], full[:d, d:], full[d:, d:]
    if np.linalg.cond(Ibb) > MAX_CONDITION:
        raise FloatingPointError("nuisance information block is numerically singular")
    eff = Iaa - Iab @ np.linalg.solve(Ibb, Iab.T)
    return 0.5 * (eff + eff.T)


@dataclass(frozen=True, eq=False)
class InfoMatrices:
    full: np.ndarray
    efficient_location: np.ndarray
    mc_draws: int
    seed: int
    chart: Chart | None = None
    fd_step: float = SCORE_STEP

    @property
    def target(self) -> float:
        """``tr(I_{aa.b}^{-1})``, the efficient scaled location risk."""
        return float(np.trace(np.linalg.inv(self.efficient_location)))

    def to_json(self) -> str:
        payload = {
            "full": self.full.tolist(),
            "efficient_location": self.efficient_location.tolist(),
            "target": self.target,
            "mc_draws": self.mc_draws,
            "seed": self.seed,
            "fd_step": self.fd_step,
            "method": "mean score outer product; central-difference scores of the constant-free log-density",
            "vech_order": "lower triangle, column-major",
        }
        if self.chart is not None:
            payload["chart"] = {"mu0": self.chart.mu0.coords.tolist(), "beta0": self.chart.beta0.tolist()}
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "InfoMatrices":
        obj = json.loads(text)
        chart = None
        if "chart" in obj:
            chart = Chart(HyperPoint(obj["chart"]["mu0"]), obj["chart"]["beta0"])
        return cls(
            full=np.array(obj["full"], dtype=float),
            efficient_location=np.array(obj["efficient_location"], dtype=float),
            mc_draws=int(obj["mc_draws"]),
            seed=int(obj["seed"]),
            chart=chart,
            fd_step=float(obj.get("fd_step", SCORE_STEP)),
        )


def _partition_sum(chart, params, start, count, seed, fd_step):
    rng = derive_rng(seed, start // PARTITION)
    X = sample(params, count, rng).points
    s = score_batch(chart, chart.theta0, X, fd_step)
    return s.T @ s


def mc_fisher_information(
    chart: Chart, draws: int, seed: int, fd_step: float = SCORE_STEP, threads: int = 1
) -> InfoMatrices:
    """Monte Carlo Fisher information at the chart centre.

    Draws are split into fixed partitions with their own derived streams,
    so the result does not depend on ``threads``.
    """
    if draws < 1000:
        raise ValueError("need at least 1000 draws")
    params = _theta_params(chart, chart.theta0)
    blocks = [(s, min(PARTITION, draws - s)) for s in range(0, draws, PARTITION)]

    def work(block):
        return _partition_sum(chart, params, block[0], block[1], seed, fd_step)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    total = np.zeros((chart.p, chart.p))
    for part in parts:
        total += part
    full = total / draws
    full = 0.5 * (full + full.T)
    if np.linalg.cond(full) > MAX_CONDITION:
        raise FloatingPointError("Fisher information is numerically singular")
    return InfoMatrices(full, schur_complement(full, chart.d), draws, int(seed), chart, fd_step)


def hessian_information(chart: Chart, X, fd_step: float = HESSIAN_STEP) -> np.ndarray:
    """``-mean Hessian`` of the log-density over ``X`` by central differences.

    Cross-check for the outer-product estimate (information identity).
    """
    theta0 = chart.theta0
    p = theta0.shape[0]
    h = fd_step * np.maximum(1.0, np.abs(theta0))

    def f(delta):
        return float(log_density_batch(_theta_params(chart, theta0 + delta), X, constant=False).mean())

    f0 = f(np.zeros(p))
    H = np.empty((p, p))
    E = np.diag(h)
    for i in range(p):
        H[i, i] = (f(E[i]) - 2.0 * f0 + f(-E[i])) / h[i] ** 2
        for j in range(i):
            v = (f(E[i] + E[j]) - f(E[i] - E[j]) - f(-E[i] + E[j]) + f(-E[i] - E[j])) / (4.0 * h[i] * h[j])
            H[i, j] = H[j, i] = v
    return -H


def efficient_score(scores, info: InfoMatrices) -> np.ndarray:
    """``s_a - I_ab I_bb^{-1} s_b`` for each row of ``scores``."""
    d = info.efficient_location.shape[0]
    full = info.full
    coef = np.linalg.solve(full[d:, d:], full[d:, :d])
    return scores[:, :d] - scores[:, d:] @ coef


# chi-square quantiles through the regularised incomplete gamma function


def _gamma_series(a, x):
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(10000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-17:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cont_frac(a, x):
    # upper tail Q(a, x) by modified Lentz
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    dd = 1.0 / b
    h = dd
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2.0
        dd = an * dd + b
        if abs(dd) < tiny:
            dd = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        dd = 1.0 / dd
        delta = dd * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def _reg_lower_gamma(a, x):
    if x <= 0:
        return 0.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_cont_frac(a, x)


def chi_square_cdf(q: float, df: int) -> float:
    return _reg_lower_gamma(0.5 * df, 0.5 * q)


@lru_cache(maxsize=256)
def chi_square_quantile(df: int, level: float) -> float:
    """Inverse chi-square CDF by bisection, absolute tolerance 1e-10."""
    if df < 1 or int(df) != df:
        raise ValueError("df must be a positive integer")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    lo, hi = 0.0, max(1.0, float(df))
    while chi_square_cdf(hi, df) < level:
        lo, hi = hi, 2.0 * hi
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        if chi_square_cdf(mid, df) < level:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def wald_location_statistic(chart: Chart, info: InfoMatrices, mu_hat, n: int) -> float:
    a = tangent_coords(chart.mu0, mu_hat)
    return float(n * a @ info.efficient_location @ a)


def wald_full_statistic(chart: Chart, info: InfoMatrices, mu_hat, sigma_hat, n: int) -> float:
    a = tangent_coords(chart.mu0, mu_hat)
    delta = np.concatenate([a, vech(spd_log(sigma_hat)) - chart.beta0])
    return float(n * delta @ info.full @ delta)


def wald_location_covered(chart, info, mu_hat, n, level=0.95) -> bool:
    return wald_location_statistic(chart, info, mu_hat, n) <= chi_square_quantile(chart.d, level)


def wald_full_covered(chart, info, mu_hat, sigma_hat, n, level=0.95) -> bool:
    return wald_full_statistic(chart, info, mu_hat, sigma_hat, n) <= chi_square_quantile(chart.p, level)
