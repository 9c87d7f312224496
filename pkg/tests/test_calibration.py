import csv
import json
import math

import numpy as np
import pytest

from hwnmle.calibration import (
    STUDY_ROWS_HEADER,
    ConfigError,
    StudyConfig,
    default_sigma_scale,
    fisher_for_truth,
    load_config,
    make_truth,
    run_replication,
    run_study,
)
from hwnmle.geometry import distance, origin
from hwnmle.spd import Shell

SMALL = dict(d=2, n=120, replications=8, fisher_draws=2000, record_timing=False)


@pytest.fixture(scope="module")
def small_study(tmp_path_factory):
    out = tmp_path_factory.mktemp("study")
    cfg = load_config(SMALL)
    rows, reps = run_study(cfg, out_dir=out)
    return cfg, rows, reps, out


class TestConfig:
    def test_defaults(self):
        cfg = StudyConfig()
        assert (cfg.replications, cfg.cond_number, cfg.rho_origin_mu0) == (500, 10.0, 3.0)
        assert cfg.shell == Shell(0.03, 20.0)
        assert cfg.fisher_draws == 20000 and cfg.level == 0.95

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="bogus"):
            load_config({"d": 2, "bogus": 1})

    def test_unknown_nested_key(self):
        with pytest.raises(ConfigError, match="fit.tolerance"):
            load_config({"fit": {"tolerance": 1}})
        with pytest.raises(ConfigError, match="shell.upper"):
            load_config({"shell": {"upper": 1}})

    def test_bad_values(self):
        for bad in ({"replications": 0}, {"d": 1}, {"level": 1.5}, {"schema": 9}, {"d": 2.5}):
            with pytest.raises(ConfigError):
                load_config(bad)

    def test_json_text_and_file(self, tmp_path):
        text = json.dumps({"d": [2, 5], "n": 100, "shell": {"lambda_minus": 0.01, "lambda_plus": 30}})
        cfg = load_config(text)
        assert cfg.dims == [2, 5] and cfg.sizes == [100]
        assert cfg.fit.shell == Shell(0.01, 30.0)
        path = tmp_path / "c.json"
        path.write_text(text)
        assert load_config(path).to_dict() == cfg.to_dict()

    def test_invalid_json(self):
        with pytest.raises(ConfigError):
            load_config("{not json")

    def test_round_trip(self):
        cfg = load_config({"d": 3, "fit": {"n_starts": 3}})
        assert load_config(cfg.to_dict()).to_dict() == cfg.to_dict()


class TestTruth:
    @pytest.mark.parametrize("d", [2, 5, 10])
    def test_design(self, d):
        params, chart = make_truth(StudyConfig(), d)
        assert distance(origin(d), params.mu) == pytest.approx(3.0, abs=1e-12)
        e = np.linalg.eigvalsh(params.sigma)
        assert e[-1] / e[0] == pytest.approx(10.0, rel=1e-12)
        assert np.trace(params.sigma) == pytest.approx(d, rel=1e-12)
        assert Shell().contains(e)
        assert np.array_equal(chart.mu0.coords, params.mu.coords)

    def test_explicit_scale(self):
        params, _ = make_truth(StudyConfig(sigma_scale=0.1), 2)
        assert np.allclose(np.linalg.eigvalsh(params.sigma), [0.1, 1.0], rtol=1e-12)

    def test_default_scale(self):
        assert default_sigma_scale(2, 10.0) == pytest.approx(2 / 11)

    def test_shared_across_calls(self):
        a, _ = make_truth(StudyConfig(), 3)
        b, _ = make_truth(StudyConfig(), 3)
        assert np.array_equal(a.sigma, b.sigma)


class TestReplication:
    def test_deterministic(self):
        cfg = load_config(SMALL)
        truth, chart = make_truth(cfg, 2)
        info = fisher_for_truth(cfg, chart)
        a = run_replication(truth, chart, info, cfg, 100, 3)
        b = run_replication(truth, chart, info, cfg, 100, 3)
        assert a["risk"] == b["risk"] and a["risk"] > 0
        assert np.array_equal(a["alpha"], b["alpha"])
        assert a["loc_covered"] == b["loc_covered"]


class TestStudy:
    def test_row_identities(self, small_study):
        cfg, rows, reps, _ = small_study
        (row,) = rows
        assert row.ratio * row.target == pytest.approx(row.n_risk_mean, rel=1e-12)
        assert 0 <= row.loc_coverage <= 1 and 0 <= row.full_coverage <= 1
        assert row.failures == 0
        assert math.isnan(row.median_runtime_s)
        assert [r["rep"] for r in reps] == list(range(8))
        assert row.n_risk_mean == pytest.approx(np.mean([r["risk"] for r in reps]), rel=1e-12)

    def test_rel_cov_err(self, small_study):
        cfg, rows, reps, _ = small_study
        truth, chart = make_truth(cfg, 2)
        info = fisher_for_truth(cfg, chart)
        A = np.array([r["alpha"] for r in reps])
        C = (A - A.mean(axis=0)).T @ (A - A.mean(axis=0)) / (len(A) - 1)
        ref = np.linalg.inv(info.efficient_location)
        assert rows[0].rel_cov_err == pytest.approx(np.linalg.norm(C - ref) / np.linalg.norm(ref), rel=1e-10)

    def test_csv_headers(self, small_study):
        _, _, _, out = small_study
        heads = {name: (out / name).read_text().splitlines()[0] for name in
                 ("study_rows.csv", "replications.csv", "risk_target.csv", "coverage.csv")}
        assert heads["study_rows.csv"] == ",".join(STUDY_ROWS_HEADER)
        assert heads["study_rows.csv"].startswith("d,n,n_risk_mean,target,ratio,loc_coverage")
        assert "rep,failed,risk,loc_covered,full_covered,shell_active,runtime_s,iters" in heads["replications.csv"]
        assert heads["replications.csv"].endswith("alpha_hat_scaled_0,alpha_hat_scaled_1")
        assert heads["risk_target.csv"] == "d,n,n_risk_mean,target"
        assert heads["coverage.csv"] == "d,n,loc_coverage,full_coverage,nominal"

    def test_replication_rows(self, small_study):
        _, _, reps, out = small_study
        with open(out / "replications.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 8
        assert float(rows[2]["risk"]) == reps[2]["risk"]

    def test_deterministic_bytes(self, small_study, tmp_path):
        cfg, _, _, out = small_study
        run_study(cfg, out_dir=tmp_path)
        for name in ("study_rows.csv", "replications.csv"):
            assert (tmp_path / name).read_bytes() == (out / name).read_bytes()

    def test_threads_do_not_change_results(self, small_study, tmp_path):
        cfg, _, _, out = small_study
        run_study(load_config(dict(SMALL, threads=2)), out_dir=tmp_path)
        assert (tmp_path / "study_rows.csv").read_bytes() == (out / "study_rows.csv").read_bytes()

    def test_fisher_cache(self, tmp_path):
        cfg = load_config(SMALL)
        _, chart = make_truth(cfg, 2)
        a = fisher_for_truth(cfg, chart, cache_dir=tmp_path)
        files = list(tmp_path.glob("fisher_d2_M2000_seed*.json"))
        assert len(files) == 1
        b = fisher_for_truth(cfg, chart, cache_dir=tmp_path)
        assert np.array_equal(a.full, b.full)

    def test_multiple_cells(self, tmp_path):
        cfg = load_config(dict(SMALL, n=[60, 90], replications=3))
        rows, reps = run_study(cfg, out_dir=tmp_path)
        assert [(r.d, r.n) for r in rows] == [(2, 60), (2, 90)]
        assert len(reps) == 6
        assert rows[0].target == rows[1].target
