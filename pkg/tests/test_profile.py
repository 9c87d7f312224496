import math

import numpy as np
import pytest

from hwnmle.geometry import exp_origin, origin, tangent_coords
from hwnmle.model import HwnParams, Sample, sample
from hwnmle.profile import (
    covariance_profile,
    objective_at,
    objective_gradient,
    practical_objective,
    profiled_objective,
    tangent_scatter,
)
from hwnmle.rng import make_rng
from hwnmle.spd import Shell, make_test_covariance, random_rotation

SHELL = Shell(0.03, 20.0)


def points_from_tangent(mu, Z):
    from hwnmle._backend import wrap_batch

    return Sample(wrap_batch(mu.coords, np.atleast_2d(Z)))


def shell_criterion(mu, X, sigma):
    """Negative log-likelihood (no constant) at (mu, sigma) written through S_n."""
    n = len(X)
    d = mu.dim
    S = tangent_scatter(mu, X)
    Z = np.array([tangent_coords(mu, X[i]) for i in range(n)])
    from hwnmle.geometry import phi

    jac = sum(phi(float(np.linalg.norm(z))) for z in Z)
    return 0.5 * n * np.linalg.slogdet(sigma)[1] + 0.5 * n * np.trace(np.linalg.solve(sigma, S)) + (d - 1) * jac


@pytest.fixture
def data3():
    rng = make_rng(31)
    params = HwnParams(exp_origin([1.0, -0.5, 0.3]), make_test_covariance(3, 10.0, 0.1, rng))
    return params, sample(params, 400, rng)


class TestScatter:
    def test_all_at_mu(self):
        mu = exp_origin([0.5, 0.2])
        X = Sample(np.tile(mu.coords, (4, 1)))
        assert np.array_equal(tangent_scatter(mu, X), np.zeros((2, 2)))

    def test_rank_one(self):
        mu = exp_origin([0.5, 0.2])
        X = points_from_tangent(mu, [1.0, 0.0])
        assert np.allclose(tangent_scatter(mu, X), [[1, 0], [0, 0]], atol=1e-13)

    def test_symmetric_psd(self, data3):
        params, X = data3
        S = tangent_scatter(exp_origin([0.0, 0.1, 0.0]), X)
        assert np.array_equal(S, S.T)
        assert np.linalg.eigvalsh(S)[0] >= 0

    def test_law_of_large_numbers(self):
        rng = make_rng(5)
        params = HwnParams(exp_origin([0.7, 0.7]), make_test_covariance(2, 10.0, 0.1, rng))
        X = sample(params, 50000, rng)
        S = tangent_scatter(params.mu, X)
        assert np.linalg.norm(S - params.sigma) / np.linalg.norm(params.sigma) < 0.05


class TestProfile:
    def test_interior_returns_scatter(self, data3):
        params, X = data3
        sigma, active = covariance_profile(params.mu, X, SHELL)
        assert not active
        assert np.array_equal(sigma, tangent_scatter(params.mu, X))

    def test_singular_scatter(self):
        mu = origin(2)
        X = points_from_tangent(mu, [[1.0, 0.0], [-1.0, 0.0]])
        sigma, active = covariance_profile(mu, X, SHELL)
        assert active
        assert np.allclose(np.linalg.eigvalsh(sigma), [0.03, 1.0], rtol=1e-12)

    def test_both_ends_clipped(self):
        mu = origin(2)
        a, b = math.sqrt(0.01), math.sqrt(50.0)
        X = points_from_tangent(mu, [[a, b], [a, -b], [-a, b], [-a, -b]])
        pv = profiled_objective(mu, X, SHELL)
        assert pv.shell_active
        assert np.allclose(pv.scatter, np.diag([0.01, 50.0]), rtol=1e-10)
        assert np.allclose(pv.sigma_profile, np.diag([0.03, 20.0]), rtol=1e-10)


class TestObjective:
    def test_single_point_at_mu(self):
        for d in (2, 3, 5):
            mu = exp_origin(np.linspace(-1, 1, d))
            pv = profiled_objective(mu, Sample(mu.coords[None, :]), SHELL)
            assert pv.objective == pytest.approx(0.5 * d * math.log(0.03), rel=1e-15)
            assert np.allclose(pv.sigma_profile, 0.03 * np.eye(d), rtol=1e-15)

    def test_interior_identity(self, data3):
        params, X = data3
        n, d = len(X), 3
        for nu in ([1.0, -0.5, 0.3], [1.1, -0.4, 0.3], [0.8, -0.6, 0.5]):
            pv = profiled_objective(exp_origin(nu), X, SHELL)
            assert not pv.shell_active
            q = practical_objective(exp_origin(nu), X)
            assert pv.objective == pytest.approx(q + 0.5 * n * d, rel=1e-9)

    def test_matches_likelihood_form(self, data3):
        params, X = data3
        mu = exp_origin([0.9, -0.4, 0.2])
        pv = profiled_objective(mu, X, SHELL)
        assert pv.objective == pytest.approx(shell_criterion(mu, X, pv.sigma_profile), rel=1e-10)

    def test_random_search_oracle(self):
        rng = make_rng(11)
        for _ in range(20):
            params = HwnParams(exp_origin(rng.standard_normal(2)), make_test_covariance(2, 10.0, 0.1, rng))
            X = sample(params, 10, rng)
            mu = exp_origin(tangent_coords(origin(2), params.mu) + 0.3 * rng.standard_normal(2))
            best = profiled_objective(mu, X, SHELL).objective
            for _ in range(200):
                Q = random_rotation(2, rng)
                eig = np.exp(rng.uniform(math.log(0.03), math.log(20.0), 2))
                sigma = (Q * eig) @ Q.T
                assert best <= shell_criterion(mu, X, 0.5 * (sigma + sigma.T)) + 1e-9

    def test_permutation_invariant(self, data3):
        params, X = data3
        perm = make_rng(2).permutation(len(X))
        mu = exp_origin([0.9, -0.4, 0.2])
        a = profiled_objective(mu, X, SHELL)
        b = profiled_objective(mu, Sample(X.points[perm]), SHELL)
        # sums are reordered, so agreement is to rounding
        assert b.objective == pytest.approx(a.objective, rel=1e-13)
        assert np.allclose(b.scatter, a.scatter, rtol=1e-13)

    def test_singular_practical_is_inf(self):
        mu = origin(2)
        X = points_from_tangent(mu, [[1.0, 0.0], [-1.0, 0.0]])
        assert practical_objective(mu, X) == math.inf


def five_point(f, x, h):
    g = np.empty_like(x)
    for j in range(x.shape[0]):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (-f(x + 2 * e) + 8 * f(x + e) - 8 * f(x - e) + f(x - 2 * e)) / (12 * h)
    return g


class TestGradient:
    def test_five_point_oracle(self):
        rng = make_rng(19)
        for _ in range(10):
            d = int(rng.integers(2, 5))
            params = HwnParams(exp_origin(rng.standard_normal(d)), make_test_covariance(d, 10.0, 0.1, rng))
            X = sample(params, 200, rng)
            nu = tangent_coords(origin(d), params.mu) + 0.2 * rng.standard_normal(d)
            g = objective_gradient(nu, X, SHELL)
            ref = five_point(lambda v: objective_at(v, X, SHELL), nu, 1e-3)
            assert np.linalg.norm(g - ref) <= 1e-5 * np.linalg.norm(ref)

    def test_symmetric_data(self):
        mu = origin(2)
        X = points_from_tangent(mu, [[0.5, 0.3], [-0.5, 0.3], [0.5, -0.1], [-0.5, -0.1]])
        g = objective_gradient(np.zeros(2), X, SHELL)
        assert abs(g[0]) <= 1e-8
        assert abs(g[1]) > 1e-3

    def test_deterministic(self, data3):
        _, X = data3
        nu = np.array([0.9, -0.4, 0.2])
        assert np.array_equal(objective_gradient(nu, X, SHELL), objective_gradient(nu, X, SHELL))

    def test_bad_step(self, data3):
        with pytest.raises(ValueError):
            objective_gradient(np.zeros(3), data3[1], SHELL, step=0.0)

    def test_non_finite_probe(self):
        X = Sample(exp_origin([1.0, 0.0]).coords[None, :])
        with pytest.raises(FloatingPointError):
            objective_gradient(np.array([1e3, 0.0]), X, SHELL)
