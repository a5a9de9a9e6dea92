import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from robust_halfspace.distributions import (AdmissibilityConfig, Band, DistKind, Distribution,
                                            admissibility_check, angle, band_mass,
                                            band_probability, disagreement_mc,
                                            estimate_band_constants, exact_error_uniform,
                                            random_unit, sample, sample_band,
                                            second_moment_in_band, unit_pair)
from robust_halfspace.errors import RejectionBudgetExceeded, UnsupportedDimension, ZeroVector

SPHERE = DistKind.UNIFORM_SPHERE
GAUSS = DistKind.ISOTROPIC_GAUSSIAN


def test_distribution_validates_dim():
    with pytest.raises(ValueError):
        Distribution(SPHERE, 1)
    assert Distribution("isotropic_gaussian", 3).kind is GAUSS


def test_band_validates():
    with pytest.raises(ValueError):
        Band(np.array([1.0, 1.0]), 0.1)
    with pytest.raises(ValueError):
        Band(np.array([1.0, 0.0]), 0.0)


@given(st.integers(2, 40), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_sphere_samples_unit_norm(d, seed):
    X = sample(Distribution(SPHERE, d), np.random.default_rng(seed), 50)
    assert np.allclose(np.linalg.norm(X, axis=1), 1.0, atol=1e-12)


def test_single_sample_shape(rng):
    x = sample(Distribution(SPHERE, 3), rng)
    assert x.shape == (3,)
    assert abs(np.linalg.norm(x) - 1) < 1e-12


def test_gaussian_covariance(rng):
    X = sample(Distribution(GAUSS, 10), rng, 100_000)
    assert np.abs(np.cov(X.T) - np.eye(10)).max() < 0.05


def test_circle_second_moment(rng):
    X = sample(Distribution(SPHERE, 2), rng, 100_000)
    assert abs(np.mean(X[:, 0] ** 2) - 0.5) < 0.01


def test_same_seed_same_stream():
    dist = Distribution(SPHERE, 7)
    a = sample(dist, np.random.default_rng(3), 20)
    b = sample(dist, np.random.default_rng(3), 20)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("kind,d,gamma", [(SPHERE, 2, 0.5), (SPHERE, 20, 0.05),
                                          (GAUSS, 5, 0.1), (GAUSS, 3, 1.0)])
def test_sample_band_membership(rng, kind, d, gamma):
    band = Band(np.eye(d)[0], gamma)
    X = sample_band(Distribution(kind, d), band, rng, 2000)
    assert X.shape == (2000, d)
    assert np.all(np.abs(X[:, 0]) <= gamma)


def test_circle_acceptance_rate(rng):
    _, trials = sample_band(Distribution(SPHERE, 2), Band(np.eye(2)[0], 0.5), rng, 33_333,
                            return_trials=True)
    rate = 33_333 / trials
    assert abs(rate - 2 * math.asin(0.5) / math.pi) < 0.01


def test_gaussian_acceptance_rate(rng):
    _, trials = sample_band(Distribution(GAUSS, 5), Band(np.eye(5)[0], 0.1), rng, 8000,
                            return_trials=True)
    expected = stats.norm.cdf(0.1) - stats.norm.cdf(-0.1)
    assert abs(8000 / trials - expected) < 0.005


def test_rejection_budget(rng):
    band = Band(np.eye(50)[0], 1e-9)
    with pytest.raises(RejectionBudgetExceeded):
        sample_band(Distribution(SPHERE, 50), band, rng, 1, max_rejections=10_000)


@pytest.mark.parametrize("d", [2, 3, 7, 20])
@pytest.mark.parametrize("gamma", [0.01, 0.1, 0.4, 0.9])
def test_band_mass_sphere_matches_reference(d, gamma):
    # |x_1| on the sphere: density proportional to (1 - t^2)^((d-3)/2)
    from scipy import integrate

    num = integrate.quad(lambda t: (1 - t * t) ** ((d - 3) / 2), 0, gamma)[0]
    den = integrate.quad(lambda t: (1 - t * t) ** ((d - 3) / 2), 0, 1)[0]
    assert band_mass(Distribution(SPHERE, d), gamma) == pytest.approx(num / den, rel=1e-7)


def test_band_mass_edges():
    assert band_mass(Distribution(SPHERE, 5), 1.5) == 1.0
    assert band_mass(Distribution(SPHERE, 5), 0.0) == 0.0
    assert band_mass(Distribution(GAUSS, 5), 1.0) == pytest.approx(0.682689492, abs=1e-8)


def test_band_probability(rng):
    est = band_probability(Distribution(SPHERE, 2), Band(np.eye(2)[0], 0.5), 100_000, rng)
    assert abs(est.value - 1 / 3) <= 3 * est.se
    assert band_probability(Distribution(SPHERE, 4), Band(np.eye(4)[0], 1.0), 1000, rng).value == 1.0
    with pytest.raises(ValueError):
        band_probability(Distribution(SPHERE, 4), Band(np.eye(4)[0], 0.2), 999, rng)


def test_band_probability_bracket_d100(rng):
    # with c = 1: Pr(|x_1| <= 1/sqrt(d)) lies between c2 * 2 and 2 (per unit sqrt(d) width)
    d = 100
    est = band_probability(Distribution(SPHERE, d), Band(np.eye(d)[0], 1 / math.sqrt(d)),
                           100_000, rng)
    width = 2.0
    assert 0.3 * width <= est.value <= width


def test_angle_basics():
    e1, e2 = np.eye(3)[:2]
    assert angle(e1, e1) == 0.0
    assert angle(e1, -e1) == pytest.approx(math.pi)
    assert angle(e1, e2) == pytest.approx(math.pi / 2)
    assert angle(e1, 1e6 * e1) == 0.0
    with pytest.raises(ZeroVector):
        angle(e1, np.zeros(3))


def test_exact_error_simple():
    e1, e2 = np.eye(4)[:2]
    assert exact_error_uniform(e1, e1) == 0.0
    assert exact_error_uniform(e1, e2) == pytest.approx(0.5)
    assert exact_error_uniform(e1, -e1) == pytest.approx(1.0)


@pytest.mark.parametrize("d", [2, 5, 20])
def test_exact_error_matches_mc(d):
    rng = np.random.default_rng(d)
    dist = Distribution(SPHERE, d)
    for _ in range(20):
        w, ws = random_unit(d, rng), random_unit(d, rng)
        est = disagreement_mc(dist, w, ws, 200_000, rng)
        assert abs(est.value - exact_error_uniform(w, ws)) <= 3.5 * est.se


def test_exact_error_gaussian_matches_mc(rng):
    dist = Distribution(GAUSS, 6)
    u, v = unit_pair(6, 0.7, rng)
    est = disagreement_mc(dist, u, v, 200_000, rng)
    assert abs(est.value - 0.7 / math.pi) <= 3.5 * est.se


@given(st.integers(2, 30), st.floats(0.0, math.pi), st.integers(0, 2**31))
@settings(max_examples=50, deadline=None)
def test_unit_pair_angle(d, alpha, seed):
    u, v = unit_pair(d, alpha, np.random.default_rng(seed))
    assert abs(np.linalg.norm(u) - 1) < 1e-12 and abs(np.linalg.norm(v) - 1) < 1e-12
    assert angle(u, v) == pytest.approx(alpha, abs=1e-7)


def test_second_moment_narrow_band(rng):
    d, gamma = 20, 0.05
    u = np.eye(d)[0]
    est = second_moment_in_band(Distribution(SPHERE, d), u, u, gamma, 20_000, rng)
    assert est.value <= gamma**2 + 3 * est.se


def test_second_moment_offset_direction(rng):
    d, gamma = 20, 0.05
    t = 2 * math.asin(0.15)  # unit a with ||a - u|| = 0.3
    u = np.eye(d)[0]
    a = math.cos(t) * u + math.sin(t) * np.eye(d)[1]
    assert np.linalg.norm(a - u) == pytest.approx(0.3)
    est = second_moment_in_band(Distribution(SPHERE, d), u, a, gamma, 20_000, rng)
    assert est.value <= 0.09 / 19 + 0.0025 + 3 * est.se


def test_admissibility_rejects_small_dim():
    with pytest.raises(UnsupportedDimension):
        admissibility_check(Distribution(SPHERE, 3), 1)


def test_admissibility_bad_part():
    with pytest.raises(ValueError):
        admissibility_check(Distribution(SPHERE, 5), 6)


@pytest.mark.parametrize("kind,d", [(SPHERE, 20), (GAUSS, 10)])
@pytest.mark.parametrize("part", [1, 2, 3, 4, 5])
def test_admissibility_parts_pass(kind, d, part):
    cfg = AdmissibilityConfig(n_mc=40_000)
    rep = admissibility_check(Distribution(kind, d), part, cfg, np.random.default_rng(part))
    assert rep.passed, rep.summary()
    assert rep.summary().startswith("[PASS]")


def test_admissibility_explicit_moment_config():
    d = 20
    u = np.eye(d)[0]
    cfg = AdmissibilityConfig(n_mc=100_000, moment_configs=[(u, u, 0.0, 0.05)])
    rep = admissibility_check(Distribution(SPHERE, d), 4, cfg, np.random.default_rng(0))
    assert rep.passed
    assert rep.rows[0]["bound"] == pytest.approx(0.0025)


def test_gaussian_tail_constant():
    cfg = AdmissibilityConfig(n_mc=100_000)
    rep = admissibility_check(Distribution(GAUSS, 10), 5, cfg, np.random.default_rng(1))
    assert rep.estimates["c9_hat"] <= math.e
    for row in rep.rows:
        assert row["exact"] <= row["c9_bound_rhs"]


def test_estimate_band_constants(rng):
    est = estimate_band_constants(20, n_mc=50_000, rng=rng)
    assert est["c2_tilde"] > 0 and est["c4_tilde"] > 0
    assert est["c1"] == est["c4_tilde"]
