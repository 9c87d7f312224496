import numpy as np

from hwnmle.geometry import exp_origin
from hwnmle.spd import make_test_covariance


def random_point(rng, d, max_radius=5.0):
    u = rng.standard_normal(d)
    u *= rng.uniform(0, max_radius) / np.linalg.norm(u)
    return exp_origin(u)


def random_spd(rng, d, cond=10.0):
    return make_test_covariance(d, cond, 0.2, rng)
