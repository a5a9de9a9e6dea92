"""Iterative localization learners for homogeneous halfspaces.

Each round looks only at points near the current decision boundary (the band
``|w_{k-1} . x| < b_{k-1}``), optionally reweights them with soft outlier
removal, and minimizes a rescaled hinge loss over a ball of radius ``r_k``
around ``w_{k-1}``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .distributions import DistKind, Distribution, band_mass, disagreement_mc, exact_error_uniform
from .errors import (InfeasibleOrBudget, InvalidEpsilon, RejectionBudgetExceeded, RoundFailed,
                     ToleranceNotCertified, ZeroVector)
from .hinge_opt import HingeProblem, minimize_hinge, normalize, plain_hinge
from .oracles import NoiseModel, NoisyOracle
from .outlier_removal import (OutlierProblem, normalize_weights, soft_outlier_removal,
                              weighted_sample)

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass
class CalibrationConstants:
    """Constants that the analysis leaves unspecified.

    Uniform sphere: ``b_k = c1 2^-k / sqrt(d)``, ``tau_k = kappa c2_tilde b_{k-1} / 12``
    and ``kappa = 1 / (8 c4_tilde)`` unless given.

    Admissible (Gaussian): ``b_k = c1_prime M^-k``,
    ``r_k = min(M^-(k-1) / c6, pi/2)``, ``kappa = 1 / (4 c1_prime c3_prime M)``,
    ``tau_k = c2_prime min(b_{k-1}, c1_density) kappa / (6 c3_prime)`` and
    ``sigma2_k = c_var ln^lam(1 + 1/b_{k-1}) (r_k^2 + b_{k-1}^2)``.

    ``xi_floor`` lower-bounds the removal rate ``xi_k`` (the analytic value is
    far below what desk-scale sample sizes can use).
    """

    c1: float = 1.0
    c2_tilde: float = 1.0
    c4_tilde: float = 1.0
    kappa: float | None = None
    c1_prime: float = 1.0
    c2_prime: float = math.exp(-0.5) / _SQRT_2PI
    c3_prime: float = 1.0 / _SQRT_2PI
    c1_density: float = 1.0
    c6: float = 1.0 / math.pi
    M: float = 2.0
    lam: float = 2.0
    c_var: float = 1.0
    xi_floor: float = 0.1

    def __post_init__(self):
        for name in ("c1", "c2_tilde", "c4_tilde", "c1_prime", "c2_prime", "c3_prime",
                     "c1_density", "c6", "c_var"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.kappa is not None and not 0 < self.kappa < 1:
            raise ValueError("kappa must lie in (0, 1)")
        if not self.M > 1:
            raise ValueError("M must exceed 1")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if not 0 <= self.xi_floor < 1:
            raise ValueError("xi_floor must lie in [0, 1)")

    def kappa_for(self, kind: DistKind) -> float:
        if self.kappa is not None:
            return self.kappa
        if DistKind(kind) is DistKind.UNIFORM_SPHERE:
            return 1.0 / (8.0 * self.c4_tilde)
        return 1.0 / (4.0 * self.c1_prime * self.c3_prime * self.M)


@dataclass(frozen=True)
class RoundParams:
    k: int
    b_prev: float
    b: float
    r: float
    tau: float
    xi: float
    xi_theory: float
    sigma2: float
    z: float
    n: int
    m: int


@dataclass
class Schedule:
    kind: DistKind
    dim: int
    epsilon: float
    delta: float
    s: int
    kappa: float
    b0: float
    rounds: list
    constants: CalibrationConstants

    def round(self, k: int) -> RoundParams:
        return self.rounds[k - 1]

    @property
    def total_labels(self) -> int:
        return sum(rp.m for rp in self.rounds)


def _count(value, k, default):
    if value is None:
        return default
    if callable(value):
        return int(value(k))
    if isinstance(value, (list, tuple)):
        return int(value[k - 1])
    return int(value)


def default_schedule(kind, epsilon: float, delta: float, d: int,
                     constants: CalibrationConstants | None = None,
                     n_k=None, m_k=None) -> Schedule:
    """Populate every per-round parameter from the calibration constants.

    ``n_k``/``m_k`` may be an int, a per-round list or a callable of ``k``;
    the defaults are ``max(2000, 50 d)`` and ``max(200, 10 d)``.
    """
    kind = DistKind(kind)
    if not 0 < epsilon < 0.5:
        raise InvalidEpsilon(f"epsilon must lie in (0, 1/2), got {epsilon}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    c = constants or CalibrationConstants()
    kappa = c.kappa_for(kind)
    n_default, m_default = max(2000, 50 * d), max(200, 10 * d)
    rounds = []
    if kind is DistKind.UNIFORM_SPHERE:
        s = math.ceil(math.log2(1.0 / epsilon) - 1e-12)
        bands = [c.c1 * 2.0**-k / math.sqrt(d) for k in range(s + 1)]
        for k in range(1, s + 1):
            b_prev = bands[k - 1]
            r = math.pi * 2.0**-k
            tau = kappa * c.c2_tilde * b_prev / 12.0
            z2 = r * r / (d - 1) + b_prev * b_prev
            xi_theory = min(kappa / 128.0, kappa**2 * tau**2 / (2.0**14 * z2))
            rounds.append(RoundParams(
                k, b_prev, bands[k], r, tau, max(xi_theory, c.xi_floor), xi_theory,
                2.0 * z2, math.sqrt(z2),
                _count(n_k, k, n_default), _count(m_k, k, m_default)))
    else:
        M = c.M
        s = math.ceil(math.log(1.0 / epsilon, M) - 1e-12)
        bands = [c.c1_prime * M**-k for k in range(s + 1)]
        for k in range(1, s + 1):
            b_prev = bands[k - 1]
            r = min(M ** -(k - 1) / c.c6, math.pi / 2.0)
            tau = c.c2_prime * min(b_prev, c.c1_density) * kappa / (6.0 * c.c3_prime)
            z2 = r * r + b_prev * b_prev
            logf = math.log(1.0 + 1.0 / b_prev) ** c.lam
            xi_theory = min(kappa / 2.0**7, kappa**2 * tau**2 / (2.0**10 * z2 * logf))
            rounds.append(RoundParams(
                k, b_prev, bands[k], r, tau, max(xi_theory, c.xi_floor), xi_theory,
                c.c_var * logf * z2, math.sqrt(z2),
                _count(n_k, k, n_default), _count(m_k, k, m_default)))
    return Schedule(kind, d, epsilon, delta, s, kappa, bands[0], rounds, c)


# ---------------------------------------------------------------------------
# run bookkeeping


@dataclass
class RoundStats:
    k: int
    error: float
    angle: float
    step_norm: float
    working_set: int
    dirty_in_working_set: int
    dirty_fraction: float
    band_mass: float
    retained_mass: float | None
    worst_variance: float | None
    outlier_iterations: int | None
    hinge_value: float
    hinge_certified: bool
    hinge_iterations: int
    labels_requested: int
    labels_used: int
    unlabeled_draws: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunStats:
    rounds: list = field(default_factory=list)
    failed: bool = False
    failure_round: int | None = None
    failure_reason: str | None = None

    @property
    def labels_used(self) -> int:
        return self.rounds[-1].labels_used if self.rounds else 0


@dataclass
class LearnerState:
    w: np.ndarray
    k: int = 0
    stats: RunStats = field(default_factory=RunStats)


def _fill_band(oracle: NoisyOracle, w, b, n, chunk_min=256, max_rejections=10**6):
    """Draw from the oracle until ``n`` points fall strictly inside the band."""
    mass = band_mass(oracle.config.dist, b) + oracle.config.eta
    ids_out, X_out, got, run = [], [], 0, 0
    while got < n:
        batch = int(min(max(chunk_min, math.ceil(1.15 * (n - got) / max(mass, 1e-6))), 200_000))
        ids, X = oracle.draw_batch(batch)
        keep = np.flatnonzero(np.abs(X @ w) < b)
        if keep.size == 0:
            run += batch
            if run >= max_rejections:
                raise RejectionBudgetExceeded(f"band halfwidth {b:g} rejected {run} draws in a row")
            continue
        run = batch - 1 - int(keep[-1])
        keep = keep[: n - got]
        ids_out.append(ids[keep])
        X_out.append(X[keep])
        got += keep.size
    return np.concatenate(ids_out), np.concatenate(X_out)


def _round_error(oracle, w):
    return exact_error_uniform(w, oracle.config.target)


def _check_w0(w0, d):
    w0 = np.asarray(w0, dtype=np.float64)
    if w0.shape != (d,):
        raise ValueError("w0 has the wrong dimension")
    return normalize(w0)


def run_malicious(oracle: NoisyOracle, schedule: Schedule, w0, rng=None,
                  hinge_max_iter: int = 20_000, outlier_max_iter: int = 5000):
    """Localized learning with soft outlier removal (malicious noise).

    Returns ``(w_s, RunStats)``; a failing round raises :class:`RoundFailed`
    carrying the statistics gathered so far.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    w = _check_w0(w0, oracle.dim)
    stats = RunStats()
    requested = 0
    oracle.publish(w, schedule.b0)
    ids, X = oracle.draw_batch(schedule.round(1).n)
    for k in range(1, schedule.s + 1):
        rp = schedule.round(k)
        dirty = oracle.is_dirty(ids)
        try:
            sw = soft_outlier_removal(OutlierProblem(X, w, rp.r, rp.xi, rp.sigma2), rng,
                                      max_iter=outlier_max_iter)
            p = normalize_weights(sw.q, rp.xi).p
            T = weighted_sample(p, rp.m, rng)
            y = oracle.reveal_labels(ids[T])
            requested += rp.m
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ToleranceNotCertified)
                res = minimize_hinge(HingeProblem(X[T], y, rp.tau, w, rp.r, schedule.kappa / 8.0),
                                     max_iter=hinge_max_iter)
            w_next = normalize(res.v)
        except (InfeasibleOrBudget, ZeroVector) as exc:
            stats.failed, stats.failure_round, stats.failure_reason = True, k, str(exc)
            raise RoundFailed(k, exc, stats) from exc
        stats.rounds.append(RoundStats(
            k=k,
            error=_round_error(oracle, w_next),
            angle=float(np.arccos(np.clip(w_next @ oracle.config.target, -1, 1))),
            step_norm=float(np.linalg.norm(w_next - w)),
            working_set=len(ids),
            dirty_in_working_set=int(dirty.sum()),
            dirty_fraction=float(dirty.mean()),
            band_mass=1.0 if k == 1 else band_mass(oracle.config.dist, rp.b_prev),
            retained_mass=sw.retained_mass / len(ids),
            worst_variance=sw.worst_value,
            outlier_iterations=sw.iterations,
            hinge_value=res.objective,
            hinge_certified=res.certified,
            hinge_iterations=res.iterations,
            labels_requested=requested,
            labels_used=oracle.ledger.label_queries,
            unlabeled_draws=oracle.ledger.unlabeled_draws,
        ))
        w = w_next
        if k < schedule.s:
            oracle.publish(w, rp.b)
            try:
                ids, X = _fill_band(oracle, w, rp.b, schedule.round(k + 1).n)
            except RejectionBudgetExceeded as exc:
                stats.failed, stats.failure_round, stats.failure_reason = True, k + 1, str(exc)
                raise RoundFailed(k + 1, exc, stats) from exc
    return w, stats


def run_label_noise(oracle: NoisyOracle, schedule: Schedule, w0, hinge_max_iter: int = 20_000):
    """Localized hinge minimization without outlier removal (label noise)."""
    w = _check_w0(w0, oracle.dim)
    stats = RunStats()
    requested = 0
    oracle.publish(w, schedule.b0)
    ids, X = oracle.draw_batch(schedule.round(1).m)
    for k in range(1, schedule.s + 1):
        rp = schedule.round(k)
        dirty = oracle.is_dirty(ids)
        y = oracle.reveal_labels(ids)
        requested += len(ids)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ToleranceNotCertified)
                res = minimize_hinge(HingeProblem(X, y, rp.tau, w, rp.r, schedule.kappa / 8.0),
                                     max_iter=hinge_max_iter)
            w_next = normalize(res.v)
        except ZeroVector as exc:
            stats.failed, stats.failure_round, stats.failure_reason = True, k, str(exc)
            raise RoundFailed(k, exc, stats) from exc
        stats.rounds.append(RoundStats(
            k=k,
            error=_round_error(oracle, w_next),
            angle=float(np.arccos(np.clip(w_next @ oracle.config.target, -1, 1))),
            step_norm=float(np.linalg.norm(w_next - w)),
            working_set=len(ids),
            dirty_in_working_set=int(dirty.sum()),
            dirty_fraction=float(dirty.mean()),
            band_mass=1.0 if k == 1 else band_mass(oracle.config.dist, rp.b_prev),
            retained_mass=None,
            worst_variance=None,
            outlier_iterations=None,
            hinge_value=res.objective,
            hinge_certified=res.certified,
            hinge_iterations=res.iterations,
            labels_requested=requested,
            labels_used=oracle.ledger.label_queries,
            unlabeled_draws=oracle.ledger.unlabeled_draws,
        ))
        w = w_next
        if k < schedule.s:
            oracle.publish(w, rp.b)
            try:
                ids, X = _fill_band(oracle, w, rp.b, schedule.round(k + 1).m)
            except RejectionBudgetExceeded as exc:
                stats.failed, stats.failure_round, stats.failure_reason = True, k + 1, str(exc)
                raise RoundFailed(k + 1, exc, stats) from exc
    return w, stats


def run(oracle: NoisyOracle, schedule: Schedule, w0, rng=None, **kwargs):
    """Dispatch on the oracle's noise model."""
    if oracle.config.model is NoiseModel.MALICIOUS:
        return run_malicious(oracle, schedule, w0, rng=rng, **kwargs)
    kwargs.pop("outlier_max_iter", None)  # no outlier removal under label noise
    return run_label_noise(oracle, schedule, w0, **kwargs)


# ---------------------------------------------------------------------------
# bootstrap, agnostic wrapper, baselines


def vector_at_angle(target, angle_rad: float, rng) -> np.ndarray:
    """A unit vector at exactly ``angle_rad`` from ``target`` (random orientation)."""
    target = normalize(target)
    e = rng.standard_normal(target.size)
    e -= (e @ target) * target
    e /= np.linalg.norm(e)
    return math.cos(angle_rad) * target + math.sin(angle_rad) * e


def init_w0(oracle: NoisyOracle, delta: float, rng=None, constants=None,
            cheat_angle: float | None = None, u=None, n_k=None, m_k=None):
    """Find a starting vector at an acute angle to the target.

    Honest mode runs a coarse learner from a random ``u`` and from ``-u``
    and keeps whichever has the lower empirical error on ``O(log 1/delta)``
    fresh labeled draws.  ``cheat_angle`` instead builds a vector at that
    angle from the (simulation-known) target.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    if cheat_angle is not None:
        return vector_at_angle(oracle.config.target, cheat_angle, rng)
    d = oracle.dim
    dist = oracle.config.dist
    c = constants or CalibrationConstants()
    coarse = 0.25 if dist.is_uniform else math.pi * c.c6 / 4.0
    coarse = min(coarse, 0.49)
    schedule = default_schedule(dist.kind, coarse, delta, d, c, n_k=n_k, m_k=m_k)
    u = normalize(rng.standard_normal(d) if u is None else u)
    candidates = []
    for start in (u, -u):
        try:
            w, _ = run(oracle, schedule, start, rng=rng)
        except RoundFailed:
            w = start
        candidates.append(w)
    n_test = max(30, math.ceil(20.0 * math.log(2.0 / delta)))
    ids, X = oracle.draw_batch(n_test)
    y = oracle.reveal_labels(ids)
    errs = [np.mean(np.where(X @ w >= 0, 1, -1) != y) for w in candidates]
    return candidates[int(np.argmin(errs))]


@dataclass
class AgnosticResult:
    w: np.ndarray
    epsilon_prime: float
    stats: object
    err_h: float | None = None
    err_f_star: float | None = None

    @property
    def certificate_holds(self) -> bool | None:
        if self.err_h is None or self.err_f_star is None:
            return None
        return self.err_h <= self.err_f_star + self.epsilon_prime


def agnostic_epsilon(opt_bound: float, epsilon: float, c: float = 2.0) -> float:
    return c * (opt_bound + epsilon)


def agnostic_wrap(learner_runner: Callable, epsilon: float, opt_bound: float, c: float = 2.0,
                  evaluate: Callable | None = None) -> AgnosticResult:
    """Run a label-noise learner at ``eps' = c (OPT + eps)``.

    ``learner_runner(eps')`` must return ``(w, stats)``.  ``evaluate(w)``, if
    given, returns ``(err(h), err(f*))`` against the noisy labels, from which
    the triangle-inequality certificate ``err(h) <= err(f*) + eps'`` is read.
    """
    eps_prime = agnostic_epsilon(opt_bound, epsilon, c)
    w, stats = learner_runner(eps_prime)
    res = AgnosticResult(w, eps_prime, stats)
    if evaluate is not None:
        res.err_h, res.err_f_star = evaluate(w)
    return res


def averaging_baseline(X, y) -> np.ndarray:
    """``normalize(sum_i y_i x_i)``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("averaging needs at least one example")
    return normalize(np.asarray(y, dtype=np.float64) @ X)


def plain_hinge_baseline(X, y, tau: float, w0, tolerance: float, max_iter: int = 20_000):
    """Hinge minimization over the whole unit ball, then normalization."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ToleranceNotCertified)
        res = plain_hinge(X, y, tau, w0, tolerance, max_iter=max_iter)
    return normalize(res.v)


def mc_error(dist: Distribution, w, w_star, n: int = 100_000, rng=None):
    rng = rng if rng is not None else np.random.default_rng(0)
    return disagreement_mc(dist, w, w_star, n, rng)
