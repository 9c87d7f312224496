"""Monte Carlo calibration study for the profile MLE.

One truth ``(mu0, Sigma0)`` is drawn per dimension and shared by every
replication and sample size.  Each replication samples ``n`` points from
its own derived stream, fits, and records the scaled geodesic risk, Wald
coverage of the location and full parameter, and shell activity.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .estimator import FitError, FitOptions, fit
from .fisher import (
    Chart,
    InfoMatrices,
    chi_square_quantile,
    mc_fisher_information,
    wald_full_statistic,
    wald_location_statistic,
)
from .geometry import distance, exp_origin, tangent_coords
from .model import HwnParams, sample
from .rng import derive_rng
from .spd import Shell, make_test_covariance, random_rotation

__all__ = [
    "SCHEMA_VERSION",
    "StudyConfig",
    "StudyRow",
    "ConfigError",
    "default_sigma_scale",
    "make_truth",
    "fisher_for_truth",
    "run_replication",
    "run_cell",
    "run_study",
    "load_config",
]

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TRUTH_STREAM = 1 << 40
FISHER_STREAM = (1 << 40) + 1

STUDY_ROWS_HEADER = [
    "d", "n", "n_risk_mean", "target", "ratio", "loc_coverage", "full_coverage",
    "rel_cov_err", "shell_active_frac", "failures", "median_runtime_s", "median_iters",
]


class ConfigError(ValueError):
    pass


def default_sigma_scale(d: int, cond_number: float) -> float:
    """Smallest eigenvalue making geometrically spaced eigenvalues average to one."""
    return d / float(np.sum(cond_number ** (np.arange(d) / (d - 1))))


@dataclass(frozen=True)
class StudyConfig:
    """Study design; ``d`` and ``n`` may be single values or lists.

    ``sigma_scale=None`` scales the covariance so that ``tr(Sigma0) = d``.
    """

    d: int | list = 2
    n: int | list = 500
    replications: int = 500
    base_seed: int = 20240601
    cond_number: float = 10.0
    sigma_scale: float | None = None
    rho_origin_mu0: float = 3.0
    shell: Shell = field(default_factory=Shell)
    fisher_draws: int = 20000
    level: float = 0.95
    fit: FitOptions = field(default_factory=FitOptions)
    threads: int = 1
    record_timing: bool = True
    schema: int = SCHEMA_VERSION

    def __post_init__(self):
        if isinstance(self.shell, dict):
            object.__setattr__(self, "shell", Shell(**self.shell))
        if isinstance(self.fit, dict):
            fo = dict(self.fit)
            if "shell" in fo:
                fo["shell"] = Shell(**fo["shell"])
            else:
                fo["shell"] = self.shell
            object.__setattr__(self, "fit", FitOptions(**fo))
        if self.fit.shell != self.shell:
            object.__setattr__(self, "fit", replace(self.fit, shell=self.shell))
        for name in ("d", "n"):
            value = getattr(self, name)
            values = list(value) if isinstance(value, (list, tuple)) else [value]
            if not values or any(int(v) != v for v in values):
                raise ConfigError(f"{name}: expected integer or list of integers")
        if any(v < 2 for v in self.dims):
            raise ConfigError("d: dimensions must be at least 2")
        if any(v < 1 for v in self.sizes):
            raise ConfigError("n: sample sizes must be positive")
        if self.replications < 1:
            raise ConfigError("replications: must be at least 1")
        if self.cond_number < 1:
            raise ConfigError("cond_number: must be >= 1")
        if self.sigma_scale is not None and self.sigma_scale <= 0:
            raise ConfigError("sigma_scale: must be positive or null")
        if not 0 < self.level < 1:
            raise ConfigError("level: must lie in (0, 1)")
        if self.fisher_draws < 1000:
            raise ConfigError("fisher_draws: need at least 1000")
        if self.threads < 1:
            raise ConfigError("threads: must be at least 1")
        if self.schema != SCHEMA_VERSION:
            raise ConfigError(f"schema: unsupported version {self.schema}")

    @property
    def dims(self) -> list:
        return [int(v) for v in (self.d if isinstance(self.d, (list, tuple)) else [self.d])]

    @property
    def sizes(self) -> list:
        return [int(v) for v in (self.n if isinstance(self.n, (list, tuple)) else [self.n])]

    def scale_for(self, d: int) -> float:
        if self.sigma_scale is None:
            return default_sigma_scale(d, self.cond_number)
        return float(self.sigma_scale)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["fit"].pop("shell")
        return out


def load_config(source) -> StudyConfig:
    """Build a config from a JSON file path, JSON text or dict; unknown keys are rejected."""
    if isinstance(source, dict):
        obj = source
    else:
        text = Path(source).read_text() if Path(str(source)).exists() else str(source)
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    allowed = {f.name for f in fields(StudyConfig)}
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    if "fit" in obj:
        fit_allowed = {f.name for f in fields(FitOptions)}
        bad = sorted(set(obj["fit"]) - fit_allowed)
        if bad:
            raise ConfigError(f"unknown config key(s): {', '.join('fit.' + k for k in bad)}")
    if "shell" in obj:
        bad = sorted(set(obj["shell"]) - {"lambda_minus", "lambda_plus"})
        if bad:
            raise ConfigError(f"unknown config key(s): {', '.join('shell.' + k for k in bad)}")
    try:
        return StudyConfig(**obj)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class StudyRow:
    d: int
    n: int
    n_risk_mean: float
    target: float
    ratio: float
    loc_coverage: float
    full_coverage: float
    rel_cov_err: float
    shell_active_frac: float
    failures: int
    median_runtime_s: float
    median_iters: float


def make_truth(config: StudyConfig, d: int, rng=None):
    """True parameters ``(mu0, Sigma0)`` and the chart centred on them.

    ``mu0`` sits at distance ``rho_origin_mu0`` from the origin in a random
    direction; ``Sigma0`` is a randomly rotated covariance with the
    configured condition number.
    """
    rng = rng if rng is not None else derive_rng(config.base_seed, TRUTH_STREAM, d)
    sigma0 = make_test_covariance(d, config.cond_number, config.scale_for(d), rng)
    direction = random_rotation(d, rng)[:, 0]
    mu0 = exp_origin(config.rho_origin_mu0 * direction)
    params = HwnParams(mu0, sigma0)
    return params, Chart.at(params)


def _fisher_seed(config: StudyConfig, d: int) -> int:
    ss = np.random.SeedSequence(config.base_seed & ((1 << 64) - 1), spawn_key=(FISHER_STREAM, d))
    return int(ss.generate_state(1, np.uint64)[0])


def fisher_for_truth(config: StudyConfig, chart: Chart, cache_dir=None) -> InfoMatrices:
    d = chart.d
    seed = _fisher_seed(config, d)
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"fisher_d{d}_M{config.fisher_draws}_seed{seed}.json"
        if path.exists():
            info = InfoMatrices.from_json(path.read_text())
            if info.chart is not None and np.allclose(info.chart.mu0.coords, chart.mu0.coords, atol=1e-12) \
                    and np.allclose(info.chart.beta0, chart.beta0, atol=1e-12):
                return info
            log.warning("ignoring cached information at %s: chart mismatch", path)
    info = mc_fisher_information(chart, config.fisher_draws, seed, threads=config.threads)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(info.to_json())
    return info


def run_replication(truth: HwnParams, chart: Chart, info: InfoMatrices, config: StudyConfig,
                    n: int, rep_index: int) -> dict:
    """Sample, fit and score one replication."""
    rng = derive_rng(config.base_seed, rep_index)
    data = sample(truth, n, rng)
    t0 = time.perf_counter()
    failed = False
    try:
        res = fit(data, config.fit)
    except FitError as exc:
        failed = True
        res = exc.result
    runtime = time.perf_counter() - t0
    d = chart.d
    row = {"d": d, "n": n, "rep": rep_index, "failed": failed}
    if res is None:
        row.update(risk=math.nan, loc_covered=False, full_covered=False, shell_active=False,
                   runtime_s=runtime, iters=0, alpha=np.full(d, math.nan), sigma_hat=None)
        return row
    alpha = np.array(tangent_coords(chart.mu0, res.mu_hat))
    loc_stat = wald_location_statistic(chart, info, res.mu_hat, n)
    full_stat = wald_full_statistic(chart, info, res.mu_hat, res.sigma_hat, n)
    row.update(
        risk=n * distance(res.mu_hat, chart.mu0) ** 2,
        loc_covered=loc_stat <= chi_square_quantile(d, config.level),
        full_covered=full_stat <= chi_square_quantile(chart.p, config.level),
        shell_active=res.shell_active,
        runtime_s=runtime,
        iters=res.iterations,
        alpha=alpha * math.sqrt(n),
        sigma_hat=res.sigma_hat,
        mu_hat=res.mu_hat.coords,
    )
    return row


def _rep_task(args):
    truth_mu, truth_sigma, info_json, config_dict, n, rep = args
    config = load_config(config_dict)
    truth = HwnParams(truth_mu, truth_sigma)
    info = InfoMatrices.from_json(info_json)
    return run_replication(truth, info.chart, info, config, n, rep)


def _summarise(rows, info: InfoMatrices, d: int, n: int, record_timing: bool) -> StudyRow:
    ok = [r for r in rows if not r["failed"]]
    failures = len(rows) - len(ok)
    target = info.target
    if ok:
        risk = float(np.mean([r["risk"] for r in ok]))
        loc = float(np.mean([r["loc_covered"] for r in ok]))
        full = float(np.mean([r["full_covered"] for r in ok]))
        shell = float(np.mean([r["shell_active"] for r in ok]))
        iters = float(np.median([r["iters"] for r in ok]))
    else:
        risk = loc = full = shell = iters = math.nan
    inv_eff = np.linalg.inv(info.efficient_location)
    if len(ok) >= 2:
        A = np.array([r["alpha"] for r in ok])
        cov = np.cov(A, rowvar=False, ddof=1)
        rel = float(np.linalg.norm(cov - inv_eff) / np.linalg.norm(inv_eff))
    else:
        rel = math.nan
    runtime = float(np.median([r["runtime_s"] for r in rows])) if record_timing else math.nan
    return StudyRow(d, n, risk, target, risk / target, loc, full, rel, shell, failures, runtime, iters)


def run_cell(config: StudyConfig, d: int, n: int, truth=None, info=None, cache_dir=None):
    """All replications for one ``(d, n)``; returns ``(StudyRow, per-replication rows)``."""
    if truth is None:
        truth, chart = make_truth(config, d)
    else:
        chart = Chart.at(truth)
    if info is None:
        info = fisher_for_truth(config, chart, cache_dir)
    reps = range(config.replications)
    if config.threads > 1:
        info_json = info.to_json()
        cfg = config.to_dict()
        tasks = [(truth.mu.coords, truth.sigma, info_json, cfg, n, r) for r in reps]
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            rows = list(pool.map(_rep_task, tasks, chunksize=max(1, len(tasks) // (4 * config.threads))))
    else:
        rows = [run_replication(truth, chart, info, config, n, r) for r in reps]
    rows.sort(key=lambda r: r["rep"])
    if not config.record_timing:
        for r in rows:
            r["runtime_s"] = math.nan
    return _summarise(rows, info, d, n, config.record_timing), rows


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "nan" if math.isnan(v) else repr(v)


def run_study(config: StudyConfig, out_dir=None, cache_dir=None):
    """Run every ``(d, n)`` cell; write the CSV outputs when ``out_dir`` is given.

    Returns ``(study_rows, replication_rows)``.
    """
    study_rows, all_reps = [], []
    for d in config.dims:
        truth, chart = make_truth(config, d)
        info = fisher_for_truth(config, chart, cache_dir)
        for n in config.sizes:
            row, reps = run_cell(config, d, n, truth=truth, info=info)
            log.info("d=%d n=%d ratio=%.3f loc=%.3f full=%.3f", d, n, row.ratio, row.loc_coverage,
                     row.full_coverage)
            study_rows.append(row)
            all_reps.extend(reps)
    if out_dir is not None:
        write_outputs(study_rows, all_reps, config, out_dir)
    return study_rows, all_reps


def write_outputs(study_rows, rep_rows, config: StudyConfig, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "study_rows.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STUDY_ROWS_HEADER)
        for r in study_rows:
            w.writerow([_fmt(getattr(r, k)) for k in STUDY_ROWS_HEADER])
    dmax = max(config.dims)
    with open(out / "replications.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["d", "n", "rep", "failed", "risk", "loc_covered", "full_covered", "shell_active",
                    "runtime_s", "iters"] + [f"alpha_hat_scaled_{j}" for j in range(dmax)])
        for r in rep_rows:
            alpha = list(r["alpha"]) + [math.nan] * (dmax - len(r["alpha"]))
            w.writerow([_fmt(r[k]) for k in ("d", "n", "rep", "failed", "risk", "loc_covered",
                                             "full_covered", "shell_active", "runtime_s", "iters")]
                       + [_fmt(a) for a in alpha])
    with open(out / "risk_target.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["d", "n", "n_risk_mean", "target"])
        for r in study_rows:
            w.writerow([_fmt(r.d), _fmt(r.n), _fmt(r.n_risk_mean), _fmt(r.target)])
    with open(out / "coverage.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["d", "n", "loc_coverage", "full_coverage", "nominal"])
        for r in study_rows:
            w.writerow([_fmt(r.d), _fmt(r.n), _fmt(r.loc_coverage), _fmt(r.full_coverage), _fmt(config.level)])
