import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robust_halfspace import learner as L
from robust_halfspace.distributions import (DistKind, Distribution, band_mass,
                                            exact_error_uniform, sample)
from robust_halfspace.errors import InvalidEpsilon, RoundFailed, ZeroVector
from robust_halfspace.hinge_opt import angular_step_bound
from robust_halfspace.oracles import NoiseOracleConfig, NoisyOracle

SPHERE = DistKind.UNIFORM_SPHERE
GAUSS = DistKind.ISOTROPIC_GAUSSIAN


def oracle(model="malicious", eta=0.0, strategy="random_flip", d=20, kind=SPHERE, seed=0):
    dist = Distribution(kind, d)
    return NoisyOracle(NoiseOracleConfig(model, eta, strategy, np.eye(d)[0], dist, seed))


# -- schedule -------------------------------------------------------------


def test_round_count_uniform():
    assert L.default_schedule(SPHERE, 1 / 32, 0.1, 20).s == 5
    assert L.default_schedule(SPHERE, 0.3, 0.1, 20).s == 2


def test_sigma2_example_d11():
    sch = L.default_schedule(SPHERE, 1 / 32, 0.1, 11)
    expected = 2 * ((math.pi / 4) ** 2 / 10 + (0.5 / math.sqrt(11)) ** 2)
    assert sch.round(2).sigma2 == pytest.approx(expected, rel=1e-12)
    assert sch.round(2).sigma2 == pytest.approx(0.1688, abs=1e-4)


def test_gaussian_band_example():
    sch = L.default_schedule(GAUSS, 1 / 16, 0.1, 10)
    assert sch.round(3).b == pytest.approx(1 / 8)
    assert sch.s == 4


@given(st.integers(2, 200), st.floats(0.001, 0.49), st.floats(0.5, 3.0), st.floats(0.5, 3.0))
@settings(max_examples=100, deadline=None)
def test_uniform_schedule_relations(d, eps, c2, c4):
    c = L.CalibrationConstants(c2_tilde=c2, c4_tilde=c4, xi_floor=0.0)
    sch = L.default_schedule(SPHERE, eps, 0.1, d, c)
    kappa = 1 / (8 * c4)
    assert sch.kappa == pytest.approx(kappa)
    assert sch.s == math.ceil(math.log2(1 / eps) - 1e-12)
    for rp in sch.rounds:
        k = rp.k
        assert rp.b == pytest.approx(2.0**-k / math.sqrt(d))
        assert rp.b_prev == pytest.approx(2.0 ** -(k - 1) / math.sqrt(d))
        assert rp.r == pytest.approx(math.pi * 2.0**-k)
        assert rp.tau == pytest.approx(kappa * c2 * rp.b_prev / 12)
        z2 = rp.r**2 / (d - 1) + rp.b_prev**2
        assert rp.z == pytest.approx(math.sqrt(z2))
        assert rp.xi == pytest.approx(min(kappa / 128, kappa**2 * rp.tau**2 / (2**14 * z2)))
        assert rp.sigma2 == pytest.approx(2 * z2)
        assert rp.n == max(2000, 50 * d) and rp.m == max(200, 10 * d)


@given(st.integers(2, 50), st.floats(0.001, 0.49), st.floats(1.5, 4.0), st.floats(0.5, 2.0))
@settings(max_examples=100, deadline=None)
def test_admissible_schedule_relations(d, eps, M, c_var):
    c = L.CalibrationConstants(M=M, c_var=c_var, xi_floor=0.0)
    sch = L.default_schedule(GAUSS, eps, 0.1, d, c)
    kappa = 1 / (4 * c.c1_prime * c.c3_prime * M)
    assert sch.kappa == pytest.approx(kappa)
    assert sch.s == math.ceil(math.log(1 / eps, M) - 1e-12)
    for rp in sch.rounds:
        k = rp.k
        assert rp.b == pytest.approx(M**-k)
        assert rp.r == pytest.approx(min(M ** -(k - 1) / c.c6, math.pi / 2))
        z2 = rp.r**2 + rp.b_prev**2
        assert rp.z**2 == pytest.approx(z2)
        lg = math.log(1 + 1 / rp.b_prev) ** 2
        assert rp.sigma2 == pytest.approx(c_var * lg * z2)
        assert rp.tau == pytest.approx(c.c2_prime * min(rp.b_prev, 1.0) * kappa / (6 * c.c3_prime))
        assert rp.xi == pytest.approx(min(kappa / 2**7, kappa**2 * rp.tau**2 / (2**10 * z2 * lg)))


def test_xi_floor_applies():
    sch = L.default_schedule(SPHERE, 1 / 32, 0.1, 20, L.CalibrationConstants(xi_floor=0.1))
    for rp in sch.rounds:
        assert rp.xi == 0.1
        assert rp.xi_theory < 1e-6


def test_schedule_counts():
    sch = L.default_schedule(SPHERE, 1 / 8, 0.1, 5, n_k=[100, 200, 300], m_k=lambda k: 10 * k)
    assert [rp.n for rp in sch.rounds] == [100, 200, 300]
    assert sch.total_labels == 60


@pytest.mark.parametrize("eps", [0.0, 0.5, 0.7, -0.1])
def test_invalid_epsilon(eps):
    with pytest.raises(InvalidEpsilon):
        L.default_schedule(SPHERE, eps, 0.1, 10)


def test_invalid_delta():
    with pytest.raises(ValueError):
        L.default_schedule(SPHERE, 0.1, 1.0, 10)


@pytest.mark.parametrize("kwargs", [dict(c1=0), dict(kappa=1.5), dict(M=1.0), dict(lam=-1),
                                    dict(xi_floor=1.0), dict(c2_tilde=-2)])
def test_constants_validation(kwargs):
    with pytest.raises(ValueError):
        L.CalibrationConstants(**kwargs)


# -- runs -----------------------------------------------------------------


def _run(model, eta, strategy, seed, d=20, eps=1 / 32, kind=SPHERE):
    orc = oracle(model, eta, strategy, d, kind, seed)
    sch = L.default_schedule(kind, eps, 0.1, d)
    rng = np.random.default_rng(seed)
    w0 = L.vector_at_angle(orc.config.target, math.pi / 4, rng)
    w, stats = L.run(orc, sch, w0, rng=rng)
    return orc, sch, w0, w, stats


def test_round_invariants_malicious():
    orc, sch, w0, w, stats = _run("malicious", 1 / 256, "band_attack", 3)
    assert len(stats.rounds) == sch.s
    ws = orc.config.target
    for rs, rp in zip(stats.rounds, sch.rounds):
        assert rs.step_norm <= angular_step_bound(rp.r) + 1e-9
        assert 0 <= rs.error <= 1
        if rs.k > 1:
            # in-band dirty fraction vs eta / band mass
            n = rs.working_set
            bound = orc.config.eta / band_mass(orc.config.dist, rp.b_prev)
            se = math.sqrt(bound * (1 - bound) / n)
            assert rs.dirty_fraction <= bound + 3 * se
    assert abs(np.linalg.norm(w) - 1) < 1e-12
    assert exact_error_uniform(w, ws) == pytest.approx(stats.rounds[-1].error)


def test_label_ledger_malicious():
    orc, sch, _, _, stats = _run("malicious", 0.0, "random_flip", 1)
    assert stats.rounds[-1].labels_requested == sch.total_labels
    # repeated weighted draws of the same id are charged once
    assert orc.ledger.label_queries <= sch.total_labels
    assert stats.labels_used == orc.ledger.label_queries
    requested = [r.labels_requested for r in stats.rounds]
    assert requested == [sum(rp.m for rp in sch.rounds[:k]) for k in range(1, sch.s + 1)]


def test_label_ledger_label_noise():
    orc, sch, _, _, stats = _run("label", 1 / 256, "in_band_label_flip", 2)
    # every working-set point is revealed exactly once
    assert orc.ledger.label_queries == sch.total_labels


def test_noise_free_runs_coincide_across_models():
    _, _, _, wa, _ = _run("label", 0.0, "random_flip", 4)
    assert exact_error_uniform(wa, np.eye(20)[0]) <= 1 / 32


def test_round_failure_is_wrapped():
    orc = oracle("malicious", 0.3, "band_attack", 20, SPHERE, 0)
    c = L.CalibrationConstants(xi_floor=0.0)
    sch = L.default_schedule(SPHERE, 1 / 8, 0.1, 20, c)
    w0 = L.vector_at_angle(orc.config.target, math.pi / 4, np.random.default_rng(0))
    with pytest.raises(RoundFailed) as info:
        L.run_malicious(orc, sch, w0, rng=np.random.default_rng(0), outlier_max_iter=20)
    assert info.value.round_index >= 1
    assert info.value.stats.failed
    assert len(info.value.stats.rounds) == info.value.round_index - 1


def test_bad_w0_dimension():
    orc = oracle()
    sch = L.default_schedule(SPHERE, 1 / 4, 0.1, 20)
    with pytest.raises(ValueError):
        L.run(orc, sch, np.ones(3))


def test_deterministic_runs():
    a = _run("malicious", 1 / 256, "band_attack", 9)[3]
    b = _run("malicious", 1 / 256, "band_attack", 9)[3]
    assert np.array_equal(a, b)


def _eta_sweep(seeds=10):
    eps = 1 / 32
    etas = [0, eps / 16, eps / 8, eps / 4]
    return np.array([[_run("malicious", eta, "band_attack", seed)[4].rounds[-1].error
                      for eta in etas] for seed in range(seeds)])


@pytest.fixture(scope="module")
def eta_sweep():
    return _eta_sweep()


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="adjacent seed-paired errors are dominated by trajectory "
                   "divergence at eta <= eps/4; measured 19/30 (30 seeds: 59/90)")
def test_monotone_noise_adjacent_pairs(eta_sweep):
    pairs = eta_sweep[:, 1:] >= eta_sweep[:, :-1]
    assert pairs.mean() >= 0.7


@pytest.mark.slow
def test_noise_hurts_against_clean_run(eta_sweep):
    # same seed, each noisy level against eta = 0
    assert (eta_sweep[:, 1:] >= eta_sweep[:, [0]]).mean() >= 0.7


@pytest.mark.slow
def test_mean_error_increases_with_eta(eta_sweep):
    assert np.all(np.diff(eta_sweep.mean(axis=0)) > 0)


# -- bootstrap ------------------------------------------------------------


def test_cheat_angle():
    orc = oracle(d=12)
    w0 = L.init_w0(orc, 0.1, rng=np.random.default_rng(0), cheat_angle=math.pi / 4)
    assert abs(math.acos(np.clip(w0 @ orc.config.target, -1, 1)) - math.pi / 4) < 1e-9


@pytest.mark.slow
def test_honest_bootstrap_is_acute():
    for seed in range(20):
        orc = oracle(d=5, seed=seed)
        w0 = L.init_w0(orc, 0.1, rng=np.random.default_rng(seed))
        assert exact_error_uniform(w0, orc.config.target) < 0.5


def test_bootstrap_picks_correct_branch():
    orc = oracle(d=5, seed=1)
    w0 = L.init_w0(orc, 0.1, rng=np.random.default_rng(1), u=np.eye(5)[0])
    assert exact_error_uniform(w0, orc.config.target) < 0.1


@given(st.integers(2, 30), st.floats(0.0, math.pi), st.integers(0, 2**31))
@settings(max_examples=50, deadline=None)
def test_vector_at_angle(d, alpha, seed):
    ws = np.eye(d)[0]
    v = L.vector_at_angle(ws, alpha, np.random.default_rng(seed))
    assert abs(np.linalg.norm(v) - 1) < 1e-12
    assert math.acos(np.clip(v @ ws, -1, 1)) == pytest.approx(alpha, abs=1e-7)


# -- wrappers and baselines -------------------------------------------------


def test_agnostic_epsilon():
    assert L.agnostic_epsilon(0.0, 0.02) == pytest.approx(0.04)
    assert L.agnostic_epsilon(0.01, 0.02, c=2) == pytest.approx(0.06)
    vals = [L.agnostic_epsilon(o, 0.02) for o in (0, 0.01, 0.05, 0.1)]
    assert vals == sorted(vals)


def test_agnostic_wrap_opt_zero_matches_plain():
    seen = []

    def runner(eps):
        seen.append(eps)
        return np.eye(3)[0], None

    res = L.agnostic_wrap(runner, 0.05, 0.0)
    assert seen == [pytest.approx(0.1)]
    assert res.certificate_holds is None


@pytest.mark.slow
def test_agnostic_wrap_certificate():
    d, opt, eps = 20, 0.01, 0.02
    ok = 0
    for seed in range(10):
        orc = oracle("label", opt, "in_band_label_flip", d, SPHERE, seed)
        rng = np.random.default_rng(seed)
        w0 = L.vector_at_angle(orc.config.target, math.pi / 4, rng)

        def runner(e):
            return L.run(orc, L.default_schedule(SPHERE, e, 0.1, d), w0, rng=rng)

        def evaluate(w):
            ids, X = orc.draw_batch(50_000)
            y = orc.peek_labels(ids)
            err_h = np.mean(np.where(X @ w >= 0, 1, -1) != y)
            err_f = np.mean(np.where(X @ orc.config.target >= 0, 1, -1) != y)
            return err_h, err_f

        res = L.agnostic_wrap(runner, eps, opt, c=2, evaluate=evaluate)
        assert res.epsilon_prime == pytest.approx(0.06)
        ok += exact_error_uniform(res.w, orc.config.target) <= opt + res.epsilon_prime
        assert res.certificate_holds
    assert ok >= 8


def test_averaging_single_example():
    x = np.array([3.0, 4.0])
    assert np.allclose(L.averaging_baseline(x[None, :], [1]), x / 5)


def test_averaging_zero_sum():
    with pytest.raises(ZeroVector):
        L.averaging_baseline(np.array([[1.0, 0.0], [1.0, 0.0]]), [1, -1])
    with pytest.raises(ValueError):
        L.averaging_baseline(np.zeros((0, 2)), [])


def test_averaging_noise_free_floor():
    rng = np.random.default_rng(0)
    d = 10
    X = sample(Distribution(SPHERE, d), rng, 10_000)
    y = np.where(X[:, 0] >= 0, 1, -1)
    assert exact_error_uniform(L.averaging_baseline(X, y), np.eye(d)[0]) <= 0.05


@pytest.mark.slow
def test_averaging_degrades_under_anti_target():
    d, eta = 10, 0.2
    orc = oracle("malicious", eta, "anti_target", d, SPHERE, 0)
    ids, X = orc.draw_batch(10_000)
    w_avg = L.averaging_baseline(X, orc.peek_labels(ids))
    orc2 = oracle("malicious", eta, "anti_target", d, SPHERE, 0)
    sch = L.default_schedule(SPHERE, 1 / 16, 0.1, d)
    rng = np.random.default_rng(0)
    w0 = L.vector_at_angle(orc2.config.target, math.pi / 4, rng)
    w_loc, _ = L.run(orc2, sch, w0, rng=rng)
    ws = np.eye(d)[0]
    assert exact_error_uniform(w_avg, ws) > exact_error_uniform(w_loc, ws)


def test_mc_error_gaussian():
    dist = Distribution(GAUSS, 5)
    w = L.vector_at_angle(np.eye(5)[0], 0.5, np.random.default_rng(0))
    est = L.mc_error(dist, w, np.eye(5)[0], 100_000, np.random.default_rng(1))
    assert abs(est.value - 0.5 / math.pi) <= 3 * est.se
