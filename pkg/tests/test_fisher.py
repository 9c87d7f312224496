import json

import numpy as np
import pytest
from scipy import stats

from hwnmle.calibration import StudyConfig, make_truth
from hwnmle.fisher import (
    Chart,
    InfoMatrices,
    chi_square_cdf,
    chi_square_quantile,
    efficient_score,
    hessian_information,
    mc_fisher_information,
    params_from_chart,
    schur_complement,
    score,
    score_batch,
    wald_full_covered,
    wald_full_statistic,
    wald_location_covered,
    wald_location_statistic,
)
from hwnmle.geometry import exp_origin, origin, tangent_coords
from hwnmle.model import HwnParams, sample
from hwnmle.rng import make_rng
from hwnmle.spd import make_test_covariance, spd_log, vech

M = 20000


@pytest.fixture(scope="module")
def design2():
    params, chart = make_truth(StudyConfig(), 2)
    return params, chart, mc_fisher_information(chart, M, seed=99)


def five_point_score(chart, theta, x, h=1e-3):
    from hwnmle.fisher import _theta_params
    from hwnmle.model import log_density_batch

    out = np.empty(theta.shape[0])
    for k in range(theta.shape[0]):
        e = np.zeros_like(theta)
        e[k] = h

        def f(t):
            return log_density_batch(_theta_params(chart, t), x[None, :], constant=False)[0]

        out[k] = (-f(theta + 2 * e) + 8 * f(theta + e) - 8 * f(theta - e) + f(theta - 2 * e)) / (12 * h)
    return out


class TestChart:
    def test_centre(self, design2):
        params, chart, _ = design2
        p = params_from_chart(chart, np.zeros(2), chart.beta0)
        assert np.array_equal(p.mu.coords, params.mu.coords)
        assert np.allclose(p.sigma, params.sigma, rtol=1e-12, atol=1e-14)

    def test_beta_zero(self, design2):
        _, chart, _ = design2
        assert np.allclose(params_from_chart(chart, np.zeros(2), np.zeros(3)).sigma, np.eye(2), atol=1e-15)

    def test_round_trip(self, rng):
        for _ in range(200):
            d = int(rng.integers(2, 6))
            chart = Chart(exp_origin(2 * rng.standard_normal(d)), np.zeros(d * (d + 1) // 2))
            alpha = 2 * rng.standard_normal(d)
            mu = params_from_chart(chart, alpha, chart.beta0).mu
            assert np.allclose(tangent_coords(chart.mu0, mu), alpha, atol=1e-9)

    def test_bad_dimensions(self):
        with pytest.raises(ValueError):
            Chart(origin(2), np.zeros(4))
        with pytest.raises(ValueError):
            params_from_chart(Chart(origin(2), np.zeros(3)), np.zeros(3), np.zeros(3))


class TestScore:
    def test_zero_location_score_at_mode(self):
        chart = Chart(exp_origin([0.5, -0.5]), vech(np.zeros((2, 2))))
        s = score(chart, chart.theta0, chart.mu0)
        assert np.allclose(s[:2], 0.0, atol=1e-9)

    def test_five_point_oracle(self, rng):
        for _ in range(10):
            d = int(rng.integers(2, 4))
            sigma = make_test_covariance(d, 10.0, 0.2, rng)
            chart = Chart.at(HwnParams(exp_origin(rng.standard_normal(d)), sigma))
            theta = chart.theta0 + 0.1 * rng.standard_normal(chart.p)
            x = sample(params_from_chart(chart, theta[:d], theta[d:]), 1, rng).points[0]
            s = score(chart, theta, x)
            ref = five_point_score(chart, theta, x)
            assert np.linalg.norm(s - ref) <= 1e-6 * np.linalg.norm(ref)

    def test_mean_zero(self, design2):
        params, chart, _ = design2
        S = score_batch(chart, chart.theta0, sample(params, M, make_rng(5)).points)
        se = S.std(axis=0, ddof=1) / np.sqrt(M)
        assert np.all(np.abs(S.mean(axis=0)) <= 3 * se)

    def test_bad_step(self, design2):
        with pytest.raises(ValueError):
            score(design2[1], design2[1].theta0, design2[1].mu0, fd_step=0.0)


class TestInformation:
    def test_target_d2(self, design2):
        assert design2[2].target == pytest.approx(1.310, abs=0.05)

    def test_target_d5(self):
        _, chart = make_truth(StudyConfig(), 5)
        assert mc_fisher_information(chart, M, seed=3).target == pytest.approx(1.222, abs=0.05)

    def test_schur_consistency(self, design2):
        info = design2[2]
        F = info.full
        d = 2
        direct = F[:d, :d] - F[:d, d:] @ np.linalg.inv(F[d:, d:]) @ F[d:, :d]
        assert np.abs(info.efficient_location - direct).max() <= 1e-10

    def test_positive_definite(self, design2):
        info = design2[2]
        assert np.linalg.eigvalsh(info.full)[0] > 0
        assert np.linalg.eigvalsh(info.efficient_location)[0] > 0
        assert np.array_equal(info.full, info.full.T)

    def test_information_identity(self, design2):
        params, chart, info = design2
        X = sample(params, M, make_rng(11)).points
        H = hessian_information(chart, X)
        assert np.linalg.norm(info.full - H) / np.linalg.norm(info.full) < 0.1

    def test_efficient_score_orthogonal(self, design2):
        params, chart, info = design2
        S = score_batch(chart, chart.theta0, sample(params, M, make_rng(12)).points)
        eff = efficient_score(S, info)
        prods = eff[:, :, None] * S[:, None, 2:]
        cov = prods.mean(axis=0)
        se = np.sqrt((prods.var(axis=0, ddof=1) / M).sum())
        assert np.linalg.norm(cov) < 3 * se

    def test_thread_independent(self, design2):
        chart = design2[1]
        a = mc_fisher_information(chart, 12000, seed=4, threads=1)
        b = mc_fisher_information(chart, 12000, seed=4, threads=3)
        assert np.array_equal(a.full, b.full)

    def test_too_few_draws(self, design2):
        with pytest.raises(ValueError):
            mc_fisher_information(design2[1], 999, seed=1)

    def test_singular_block(self):
        F = np.eye(5)
        F[2:, 2:] = 0.0
        with pytest.raises(FloatingPointError):
            schur_complement(F, 2)

    def test_json_round_trip(self, design2):
        info = design2[2]
        back = InfoMatrices.from_json(info.to_json())
        assert np.array_equal(back.full, info.full)
        assert np.array_equal(back.efficient_location, info.efficient_location)
        assert back.mc_draws == M and back.seed == 99
        assert np.array_equal(back.chart.mu0.coords, info.chart.mu0.coords)
        meta = json.loads(info.to_json())
        assert meta["vech_order"] and meta["method"]


class TestChiSquare:
    def test_examples(self):
        assert chi_square_quantile(2, 0.95) == pytest.approx(5.991464547107979, abs=1e-9)
        assert chi_square_quantile(1, 0.5) == pytest.approx(0.454936423119572, abs=1e-9)

    @pytest.mark.parametrize("df", [1, 2, 3, 5, 12, 65])
    def test_against_scipy(self, df):
        for level in (0.01, 0.5, 0.9, 0.95, 0.999):
            assert chi_square_quantile(df, level) == pytest.approx(stats.chi2.ppf(level, df), abs=1e-8)
        for q in (0.1, 1.0, float(df), 3.0 * df):
            assert chi_square_cdf(q, df) == pytest.approx(stats.chi2.cdf(q, df), abs=1e-13)

    def test_monotone(self):
        qs = [chi_square_quantile(4, lv) for lv in np.linspace(0.01, 0.99, 50)]
        assert np.all(np.diff(qs) > 0)

    @pytest.mark.parametrize("df,level", [(0, 0.5), (2, 0.0), (2, 1.0)])
    def test_invalid(self, df, level):
        with pytest.raises(ValueError):
            chi_square_quantile(df, level)


class TestWald:
    def test_truth_covered(self, design2):
        params, chart, info = design2
        assert wald_location_statistic(chart, info, params.mu, 500) == 0.0
        assert wald_location_covered(chart, info, params.mu, 500, level=0.01)
        assert wald_full_covered(chart, info, params.mu, params.sigma, 500, level=0.01)

    def test_linear_in_n(self, design2):
        _, chart, info = design2
        mu = params_from_chart(chart, np.array([0.05, -0.02]), chart.beta0).mu
        a = wald_location_statistic(chart, info, mu, 100)
        assert wald_location_statistic(chart, info, mu, 300) == pytest.approx(3 * a, rel=1e-12)

    def test_far_not_covered(self, design2):
        _, chart, info = design2
        mu = params_from_chart(chart, np.array([1.0, 1.0]), chart.beta0).mu
        assert not wald_location_covered(chart, info, mu, 500)

    def test_vech_ordering_invariant(self, design2):
        params, chart, info = design2
        mu = params_from_chart(chart, np.array([0.03, 0.01]), chart.beta0).mu
        sigma = params.sigma * 1.05
        stat = wald_full_statistic(chart, info, mu, sigma, 400)
        # reorder beta as (a11, a10, a00) congruently in delta and information
        perm = np.array([0, 1, 4, 3, 2])
        P = np.eye(5)[perm]
        delta = np.concatenate([tangent_coords(chart.mu0, mu), vech(spd_log(sigma)) - chart.beta0])
        assert 400 * (P @ delta) @ (P @ info.full @ P.T) @ (P @ delta) == pytest.approx(stat, rel=1e-12)
