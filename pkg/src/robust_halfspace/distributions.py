"""Instance distributions, band conditioning and Monte-Carlo geometry.

Two distributions are supported: the uniform distribution on the unit sphere
``S^{d-1}`` and the standard isotropic Gaussian (the canonical isotropic
log-concave instance).  All randomness comes from an injected
``numpy.random.Generator``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import special, stats

from .errors import RejectionBudgetExceeded, UnsupportedDimension, ZeroVector

MAX_CONSECUTIVE_REJECTIONS = 10**6


class DistKind(str, enum.Enum):
    UNIFORM_SPHERE = "uniform_sphere"
    ISOTROPIC_GAUSSIAN = "isotropic_gaussian"


@dataclass(frozen=True)
class Distribution:
    kind: DistKind
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "kind", DistKind(self.kind))
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError(f"dim must be an integer >= 2, got {self.dim}")
        object.__setattr__(self, "dim", int(self.dim))

    @property
    def is_uniform(self) -> bool:
        return self.kind is DistKind.UNIFORM_SPHERE


@dataclass(frozen=True, eq=False)
class Band:
    """The slab ``{x : |normal . x| <= halfwidth}``."""

    normal: np.ndarray
    halfwidth: float

    def __post_init__(self):
        normal = np.asarray(self.normal, dtype=np.float64)
        if abs(np.linalg.norm(normal) - 1.0) > 1e-12:
            raise ValueError("band normal must have unit length")
        if not self.halfwidth > 0:
            raise ValueError("band halfwidth must be positive")
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "halfwidth", float(self.halfwidth))

    def contains(self, X) -> np.ndarray:
        return np.abs(np.asarray(X) @ self.normal) <= self.halfwidth


class Estimate(NamedTuple):
    value: float
    se: float


def _bernoulli_estimate(hits: int, n: int) -> Estimate:
    p = hits / n
    # floor keeps the standard error informative at p in {0, 1}
    se = math.sqrt(max(p * (1.0 - p), 1.0 / n) / n)
    return Estimate(p, se)


def sample(dist: Distribution, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw one point (``size=None``) or a ``(size, d)`` batch from ``dist``."""
    n = 1 if size is None else int(size)
    X = rng.standard_normal((n, dist.dim))
    if dist.is_uniform:
        X /= np.linalg.norm(X, axis=1, keepdims=True)
    return X[0] if size is None else X


def band_mass(dist: Distribution, halfwidth: float) -> float:
    """Exact ``Pr(|w . x| <= halfwidth)`` for any unit ``w``."""
    if halfwidth <= 0:
        return 0.0
    if dist.is_uniform:
        if halfwidth >= 1.0:
            return 1.0
        # x_1^2 ~ Beta(1/2, (d-1)/2) on the sphere
        return float(special.betainc(0.5, (dist.dim - 1) / 2.0, halfwidth**2))
    return float(special.erf(halfwidth / math.sqrt(2.0)))


def sample_band(
    dist: Distribution,
    band: Band,
    rng: np.random.Generator,
    size: int | None = None,
    max_rejections: int = MAX_CONSECUTIVE_REJECTIONS,
    return_trials: bool = False,
):
    """Rejection-sample from ``dist`` conditioned on ``band``.

    Raises :class:`RejectionBudgetExceeded` after ``max_rejections``
    consecutive rejections.  With ``return_trials`` the number of raw draws
    consumed is returned as well.
    """
    n = 1 if size is None else int(size)
    accepted = []
    got = 0
    trials = 0
    run = 0  # consecutive rejections carried across batches
    p_guess = max(band_mass(dist, band.halfwidth), 1e-6)
    while got < n:
        batch = int(min(max(64, math.ceil(1.2 * (n - got) / p_guess)), 1_000_000))
        X = sample(dist, rng, batch)
        idx = np.flatnonzero(band.contains(X))
        if idx.size == 0:
            run += batch
            trials += batch
            if run >= max_rejections:
                raise RejectionBudgetExceeded(
                    f"{run} consecutive rejections for halfwidth {band.halfwidth:g}"
                )
            continue
        gaps = np.diff(np.concatenate(([-1], idx))) - 1
        gaps[0] += run
        take = idx[: n - got]
        if gaps[: take.size].max() >= max_rejections:
            raise RejectionBudgetExceeded(
                f"{max_rejections} consecutive rejections for halfwidth {band.halfwidth:g}"
            )
        accepted.append(X[take])
        got += take.size
        if got >= n:
            trials += int(take[-1]) + 1
        else:
            trials += batch
            run = batch - 1 - int(idx[-1])
    out = np.concatenate(accepted)[:n]
    result = out[0] if size is None else out
    return (result, trials) if return_trials else result


def band_probability(dist: Distribution, band: Band, n_mc: int, rng: np.random.Generator) -> Estimate:
    """Monte-Carlo estimate of ``Pr(|w . x| <= gamma)`` with its standard error."""
    if n_mc < 1000:
        raise ValueError("n_mc must be at least 1000")
    if dist.is_uniform and band.halfwidth >= 1.0:
        return Estimate(1.0, 0.0)
    X = sample(dist, rng, n_mc)
    return _bernoulli_estimate(int(band.contains(X).sum()), n_mc)


def angle(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ZeroVector("angle of a zero vector is undefined")
    return float(np.arccos(np.clip(u @ v / (nu * nv), -1.0, 1.0)))


def exact_error_uniform(w, w_star) -> float:
    """Disagreement probability of two homogeneous halfspaces: ``theta / pi``.

    Holds for any rotation-invariant distribution, so it is exact for both
    supported kinds.
    """
    return angle(w, w_star) / math.pi


def disagreement_mc(dist: Distribution, w, w_star, n: int, rng: np.random.Generator) -> Estimate:
    X = sample(dist, rng, n)
    hits = int(np.count_nonzero(np.sign(X @ w) != np.sign(X @ w_star)))
    return _bernoulli_estimate(hits, n)


def second_moment_in_band(dist, u, a, gamma, n, rng) -> Estimate:
    """Monte-Carlo ``E[(a . x)^2]`` under ``dist`` conditioned on ``|u . x| <= gamma``."""
    X = sample_band(dist, Band(u, gamma), rng, n)
    v = (X @ a) ** 2
    return Estimate(float(v.mean()), float(v.std(ddof=1) / math.sqrt(n)))


def random_unit(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal(d)
    return g / np.linalg.norm(g)


def unit_pair(d: int, alpha: float, rng: np.random.Generator | None = None):
    """Two unit vectors at angle ``alpha`` (random orientation when ``rng`` is given)."""
    if rng is None:
        Q = np.eye(d)
    else:
        Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    u = Q[:, 0]
    v = math.cos(alpha) * Q[:, 0] + math.sin(alpha) * Q[:, 1]
    return u, v


# ---------------------------------------------------------------------------
# admissibility property checks


@dataclass
class AdmissibilityConfig:
    n_mc: int = 100_000
    z: float = 3.0
    # part 1: intervals live in [-c1 * scale, c1 * scale]
    c1: float = 1.0
    # part 2: margin constant and allowed rate constant
    margin_const: float = 1.3
    rate_const: float = 1.0 / (8.0 * math.pi)
    angles: tuple = (math.pi / 32, math.pi / 16, math.pi / 8, math.pi / 4, math.pi / 2)
    # part 3
    c6: float = 1.0 / math.pi
    # part 4: explicit (a, u, r, gamma) tuples, or random ones
    moment_configs: list = field(default_factory=list)
    n_random_configs: int = 10
    c8: float = 1.0
    # part 5
    tail_multipliers: tuple = (1.5, 2.0, 3.0)
    c9: float = math.e


@dataclass
class AdmissibilityReport:
    part: int
    kind: str
    dim: int
    passed: bool
    estimates: dict
    rows: list = field(default_factory=list)
    notes: str = ""

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        ests = ", ".join(f"{k}={v:.4g}" for k, v in self.estimates.items())
        return f"[{status}] part {self.part} {self.kind} d={self.dim}: {ests}"


def _scale(dist: Distribution) -> float:
    return 1.0 / math.sqrt(dist.dim) if dist.is_uniform else 1.0


def _part1(dist, cfg, rng):
    s = _scale(dist)
    lim = cfg.c1 * s
    intervals = [(-lim, lim), (-lim, 0.0), (0.0, lim / 2), (-lim / 4, lim / 4),
                 (lim / 2, lim), (-lim, -lim / 2), (-lim / 8, lim / 8), (lim / 4, lim / 2)]
    u = random_unit(dist.dim, rng)
    proj = sample(dist, rng, cfg.n_mc) @ u
    rows, lower, upper, ok = [], math.inf, 0.0, True
    for a, b in intervals:
        est = _bernoulli_estimate(int(np.count_nonzero((proj >= a) & (proj <= b))), cfg.n_mc)
        width = (b - a) / s
        ratio, ratio_se = est.value / width, est.se / width
        lower = min(lower, ratio - cfg.z * ratio_se)
        upper = max(upper, ratio)
        if dist.is_uniform and ratio - cfg.z * ratio_se > 1.0:
            ok = False
        rows.append({"a": a, "b": b, "prob": est.value, "se": est.se, "ratio": ratio})
    ok = ok and lower > 0
    key_hi = "upper_ratio_max" if dist.is_uniform else "c3_hat"
    return ok, {"c2_hat": lower, key_hi: upper}, rows


def _part2(dist, cfg, rng):
    s = _scale(dist)
    X = sample(dist, rng, cfg.n_mc)
    rows, worst, ok = [], 0.0, True
    for alpha in cfg.angles:
        u, v = unit_pair(dist.dim, alpha, rng)
        pu, pv = X @ u, X @ v
        hit = (np.sign(pu) != np.sign(pv)) & (np.abs(pv) >= cfg.margin_const * alpha * s)
        est = _bernoulli_estimate(int(np.count_nonzero(hit)), cfg.n_mc)
        worst = max(worst, est.value / alpha)
        if est.value - cfg.z * est.se > cfg.rate_const * alpha:
            ok = False
        rows.append({"alpha": alpha, "prob": est.value, "se": est.se, "ratio": est.value / alpha})
    return ok, {"rate_hat": worst, "rate_const": cfg.rate_const}, rows


def _part3(dist, cfg, rng):
    X = sample(dist, rng, cfg.n_mc)
    rows, lowest, ok = [], math.inf, True
    for alpha in cfg.angles:
        u, v = unit_pair(dist.dim, alpha, rng)
        est = _bernoulli_estimate(int(np.count_nonzero(np.sign(X @ u) != np.sign(X @ v))), cfg.n_mc)
        lowest = min(lowest, est.value / alpha)
        if est.value + cfg.z * est.se < cfg.c6 * alpha:
            ok = False
        rows.append({"alpha": alpha, "prob": est.value, "se": est.se, "ratio": est.value / alpha})
    return ok, {"c6_hat": lowest}, rows


def _random_moment_config(d, rng):
    u = random_unit(d, rng)
    r = float(rng.uniform(0.0, 1.0))
    gamma = float(rng.uniform(0.02, 0.3))
    # a uniform-ish point of B(u, r) ∩ B(0, 1)
    for _ in range(1000):
        a = u + r * random_unit(d, rng) * rng.uniform() ** (1.0 / d)
        if a @ a <= 1.0:
            return a, u, r, gamma
    return u.copy(), u, r, gamma


def _part4(dist, cfg, rng):
    d = dist.dim
    configs = list(cfg.moment_configs) or [
        _random_moment_config(d, rng) for _ in range(cfg.n_random_configs)
    ]
    rows, ok, c8_hat = [], True, 0.0
    n = max(cfg.n_mc // 10, 2000)
    for a, u, r, gamma in configs:
        a = np.asarray(a, dtype=np.float64)
        u = np.asarray(u, dtype=np.float64)
        est = second_moment_in_band(dist, u, a, gamma, n, rng)
        if dist.is_uniform:
            bound = r**2 / (d - 1) + gamma**2
        else:
            shape = math.log(1.0 + 1.0 / gamma) ** 2 * (r**2 + gamma**2)
            bound = cfg.c8 * shape
            c8_hat = max(c8_hat, est.value / shape)
        if est.value - cfg.z * est.se > bound:
            ok = False
        rows.append({"r": r, "gamma": gamma, "moment": est.value, "se": est.se, "bound": bound})
    ests = {"max_moment_over_bound": max(row["moment"] / row["bound"] for row in rows)}
    if not dist.is_uniform:
        ests["c8_hat"] = c8_hat
    return ok, ests, rows


def _part5(dist, cfg, rng):
    d = dist.dim
    norms = np.linalg.norm(sample(dist, rng, cfg.n_mc), axis=1)
    rows, ok, c9_hat = [], True, 0.0
    for mult in cfg.tail_multipliers:
        alpha = mult * math.sqrt(d)
        est = _bernoulli_estimate(int(np.count_nonzero(norms > alpha)), cfg.n_mc)
        factor = math.exp(alpha / math.sqrt(d))
        if dist.is_uniform:
            exact = 0.0 if alpha >= 1.0 else 1.0
        else:
            exact = float(stats.chi2.sf(alpha**2, d))
        c9_hat = max(c9_hat, est.value * factor)
        if (est.value - cfg.z * est.se) * factor > cfg.c9:
            ok = False
        rows.append({"alpha": alpha, "tail": est.value, "se": est.se, "exact": exact,
                     "c9_bound_rhs": cfg.c9 / factor})
    return ok, {"c9_hat": c9_hat}, rows


_PARTS = {1: _part1, 2: _part2, 3: _part3, 4: _part4, 5: _part5}


def admissibility_check(dist: Distribution, part: int, config: AdmissibilityConfig | None = None,
                        rng: np.random.Generator | None = None) -> AdmissibilityReport:
    """Monte-Carlo check of one of the five admissibility conditions."""
    if dist.dim < 4:
        raise UnsupportedDimension(f"admissibility is stated for d >= 4, got d={dist.dim}")
    if part not in _PARTS:
        raise ValueError(f"part must be in 1..5, got {part}")
    cfg = config or AdmissibilityConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    ok, ests, rows = _PARTS[part](dist, cfg, rng)
    return AdmissibilityReport(part, dist.kind.value, dist.dim, bool(ok), ests, rows)


def estimate_band_constants(dim: int, n_mc: int = 200_000, rng=None, c3: float = 1.0 / (8 * math.pi),
                            c1: float | None = None):
    """Fit the uniform-sphere band constants ``(c2_tilde, c4_tilde)``.

    ``c4_tilde`` is the smallest margin constant (in units of ``alpha/sqrt(d)``)
    for which the out-of-margin disagreement rate stays below ``c3 * alpha``
    over a grid of angles; ``c2_tilde`` is the lower band-probability constant
    on ``[-c1/sqrt(d), c1/sqrt(d)]`` with ``c1`` defaulting to ``c4_tilde``.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    dist = Distribution(DistKind.UNIFORM_SPHERE, dim)
    X = sample(dist, rng, n_mc)
    sq = math.sqrt(dim)
    c4 = 0.0
    for alpha in (math.pi / 32, math.pi / 16, math.pi / 8, math.pi / 4, math.pi / 2):
        u, v = unit_pair(dim, alpha)
        pu, pv = X @ u, X @ v
        mis = np.abs(pv[np.sign(pu) != np.sign(pv)]) * sq / alpha
        # smallest c with #{mis >= c} / n <= c3 * alpha
        allowed = int(math.floor(c3 * alpha * n_mc))
        mis.sort()
        need = 0.0 if mis.size <= allowed else float(mis[mis.size - allowed - 1])
        c4 = max(c4, need)
    c1 = c4 if c1 is None else c1
    u = np.eye(dim)[0]
    proj = X @ u * sq
    ratios = []
    for frac in (0.125, 0.25, 0.5, 1.0):
        for lo in (-c1, -c1 * frac / 2, c1 - c1 * frac):
            hi = lo + c1 * frac
            p = np.count_nonzero((proj >= lo) & (proj <= hi)) / n_mc
            ratios.append(p / (hi - lo))
    return {"c2_tilde": float(min(ratios)), "c4_tilde": float(c4), "c1": float(c1)}
