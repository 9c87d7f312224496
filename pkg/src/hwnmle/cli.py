"""Command line interface: ``hwnmle {sample,fit,fisher,calibrate}``.

Exit status is 0 on success, 1 on usage or configuration errors and 2 on
numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .calibration import ConfigError, StudyConfig, fisher_for_truth, load_config, make_truth, run_study
from .estimator import ConvergenceError, FitError, FitOptions, fit
from .geometry import exp_origin
from .model import HwnParams, read_sample_csv, sample, write_sample_csv
from .rng import make_rng
from .spd import Shell

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _parse_sigma(text: str, d: int) -> np.ndarray:
    text = text.strip()
    if text.startswith("["):
        try:
            S = np.array(json.loads(text), dtype=float)
        except (json.JSONDecodeError, ValueError):
            raise UsageError(f"--sigma: cannot parse matrix {text!r}") from None
    else:
        S = np.diag(_floats(text))
    if S.shape != (d, d):
        raise UsageError(f"--sigma: expected a {d}x{d} matrix (or {d} diagonal entries)")
    return S


def _emit(text: str, args, default_name: str, out=None):
    target = out or (Path(args.out_dir) / default_name if args.out_dir else None)
    if target is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    Path(target).parent.mkdir(parents=True, exist_ok=True)
    Path(target).write_text(text if text.endswith("\n") else text + "\n")


def cmd_sample(args) -> int:
    if args.design:
        cfg = StudyConfig(d=args.design, base_seed=args.seed)
        params, _chart = make_truth(cfg, args.design)
    else:
        if not args.mu0 or not args.sigma:
            raise UsageError("sample: give --mu0 and --sigma, or --design D")
        nu = np.array(_floats(args.mu0))
        params = HwnParams(exp_origin(nu), _parse_sigma(args.sigma, nu.shape[0]))
    data = sample(params, args.n, make_rng(args.seed))
    out = args.out or (Path(args.out_dir) / "sample.csv" if args.out_dir else None)
    if out is None:
        write_sample_csv(data, sys.stdout)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        write_sample_csv(data, out)
    return EXIT_OK


def cmd_fit(args) -> int:
    try:
        data = read_sample_csv(args.csv)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    opts = FitOptions(
        shell=Shell(args.lambda_minus, args.lambda_plus),
        grad_tol=args.grad_tol,
        n_starts=args.n_starts,
        seed=args.seed,
    )
    res = fit(data, opts)
    _emit(json.dumps(res.to_dict(), indent=2), args, "fit.json", args.out)
    return EXIT_OK


def cmd_fisher(args) -> int:
    cfg = load_config(args.config) if args.config else StudyConfig(base_seed=args.seed)
    cfg = replace(cfg, d=args.d, fisher_draws=args.draws, threads=args.threads)
    _params, chart = make_truth(cfg, args.d)
    info = fisher_for_truth(cfg, chart)
    _emit(info.to_json(), args, f"fisher_d{args.d}.json", args.out)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = load_config(args.config)
    if args.threads_given:
        cfg = replace(cfg, threads=args.threads)
    out_dir = args.out_dir or "."
    rows, _reps = run_study(cfg, out_dir=out_dir, cache_dir=args.fisher_cache)
    for r in rows:
        print(f"d={r.d} n={r.n} nR={r.n_risk_mean:.3f} target={r.target:.3f} ratio={r.ratio:.3f} "
              f"loc={r.loc_coverage:.3f} full={r.full_coverage:.3f} relcov={r.rel_cov_err:.3f} "
              f"shell={r.shell_active_frac:.3f} failures={r.failures}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=20240601, help="base random seed")
    common.add_argument("--threads", type=int, default=None, help="worker count")
    common.add_argument("--out-dir", default=None, help="directory for output files")

    p = _Parser(prog="hwnmle", description="Profile MLE for the hyperbolic wrapped normal distribution")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sample", parents=[common], help="draw an HWN sample as CSV")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--mu0", help="location as origin tangent coordinates nu, mu0 = Exp_o(nu), e.g. '3,0'")
    s.add_argument("--sigma", help="covariance: JSON matrix or comma-separated diagonal")
    s.add_argument("--design", type=int, metavar="D", help="use the calibration-study truth for dimension D")
    s.add_argument("--out", help="output CSV (default: OUT_DIR/sample.csv or stdout)")
    s.set_defaults(func=cmd_sample)

    f = sub.add_parser("fit", parents=[common], help="fit a sample CSV, print FitResult JSON")
    f.add_argument("csv")
    f.add_argument("--lambda-minus", type=float, default=0.03)
    f.add_argument("--lambda-plus", type=float, default=20.0)
    f.add_argument("--n-starts", type=int, default=1)
    f.add_argument("--grad-tol", type=float, default=1e-6)
    f.add_argument("--out")
    f.set_defaults(func=cmd_fit)

    fi = sub.add_parser("fisher", parents=[common], help="Monte Carlo Fisher information at the study truth")
    fi.add_argument("--d", type=int, required=True)
    fi.add_argument("--draws", type=int, default=20000)
    fi.add_argument("--config", help="StudyConfig JSON supplying the design")
    fi.add_argument("--out")
    fi.set_defaults(func=cmd_fisher)

    c = sub.add_parser("calibrate", parents=[common], help="run the calibration study")
    c.add_argument("--config", required=True, help="StudyConfig JSON file")
    c.add_argument("--fisher-cache", default=None, help="directory for cached information matrices")
    c.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.threads_given = args.threads is not None
    if args.threads is None:
        args.threads = 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"hwnmle: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FloatingPointError, FitError, ConvergenceError, np.linalg.LinAlgError) as exc:
        print(f"hwnmle: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"hwnmle: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
