"""Soft localized outlier removal.

Find weights ``q: S -> [0, 1]`` that keep at least ``(1 - xi)|S|`` total mass
while the q-weighted second moment ``(1/|S|) sum q(x) (w . x)^2`` stays below
``sigma2`` for every ``w`` in ``B(u, r) ∩ B(0, 1)``.  The infinite family of
variance constraints is handled through a separation oracle that maximizes
the convex quadratic ``w' M(q) w`` over the localized ball.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import InfeasibleOrBudget, ZeroMass
from .hinge_opt import DYKSTRA_TOL, project_two_balls

DEFAULT_TOL = 0.05
DEFAULT_MAX_ITER = 5000
N_RESTARTS = 32
ASCENT_STEPS = 200


@dataclass
class OutlierProblem:
    X: np.ndarray
    u: np.ndarray
    r: float
    xi: float
    sigma2: float
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        self.u = np.asarray(self.u, dtype=np.float64)
        if abs(np.linalg.norm(self.u) - 1.0) > 1e-9:
            raise ValueError("u must be a unit vector")
        if not 0.0 < self.xi <= 1.0:
            raise ValueError(f"xi must lie in (0, 1], got {self.xi}")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if not self.r > 0:
            raise ValueError("r must be positive")

    @property
    def cap(self) -> float:
        return self.sigma2 * (1.0 + self.tol)


@dataclass
class OracleResult:
    w: np.ndarray
    value: float


@dataclass
class SoftWeights:
    q: np.ndarray
    retained_mass: float
    worst_direction: np.ndarray
    worst_value: float
    iterations: int
    certified: bool

    @property
    def accepted_unchanged(self) -> bool:
        """True when the all-ones weighting passed the first oracle call."""
        return self.iterations == 0


@dataclass
class NormalizedWeights:
    p: np.ndarray
    tv: float


def second_moment_matrix(X, q) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return (X.T * q) @ X / X.shape[0]


def directional_variance(w, X, q) -> float:
    return float(np.mean(q * (np.asarray(X) @ w) ** 2))


def trust_region_max(M, u, r, max_iter: int = 200):
    """Exact maximizer of ``w' M w`` over the single ball ``||w - u|| <= r``.

    Writing ``w = u + p`` gives the trust-region subproblem with gradient
    ``-2 M u`` and Hessian ``-2 M``.  Its boundary solution
    ``p(lam) = (lam I - M)^{-1} M u`` with ``lam >= lambda_max(M)`` is found
    from the secular equation ``1/||p(lam)|| = 1/r`` by safeguarded Newton
    steps (Moré–Sorensen), with the usual hard-case completion along the top
    eigenvector.
    """
    M = 0.5 * (np.asarray(M, dtype=np.float64) + np.asarray(M).T)
    mu, V = np.linalg.eigh(M)
    top = mu[-1]
    if top <= 0:
        return np.asarray(u, dtype=np.float64).copy()
    a = mu * (V.T @ u)  # coefficients of M u in the eigenbasis
    scale = max(abs(top), 1e-300)
    hard_tol = 1e-10 * scale

    gap_top = np.isclose(mu, top, rtol=0.0, atol=1e-12 * scale)
    a_top = np.sqrt(np.sum(a[gap_top] ** 2))

    def pnorm(lam):
        return math.sqrt(float(np.sum((a / (lam - mu)) ** 2)))

    if a_top <= hard_tol:
        # hard case: the secular function stays finite at lam = top
        rest = ~gap_top
        p = np.zeros_like(mu)
        p[rest] = a[rest] / (top - mu[rest])
        pn = math.sqrt(float(p @ p))
        if pn <= r:
            idx = int(np.flatnonzero(gap_top)[0])
            p[idx] += math.sqrt(max(r * r - pn * pn, 0.0))
            return u + V @ p
        lo = top
    else:
        lo = top
    hi = top + math.sqrt(float(a @ a)) / r + scale * 1e-12
    lam = top + a_top / r if a_top > hard_tol else 0.5 * (lo + hi)
    lam = min(max(lam, lo + 1e-15 * scale), hi)
    for _ in range(max_iter):
        diff = lam - mu
        if np.any(diff <= 0):
            lam = 0.5 * (lo + hi)
            continue
        pv = a / diff
        pn = math.sqrt(float(pv @ pv))
        phi = 1.0 / pn - 1.0 / r
        if abs(phi) * r <= 1e-14:
            break
        if phi < 0:
            lo = lam
        else:
            hi = lam
        dphi = float(np.sum(a**2 / diff**3)) / pn**3
        step = phi / dphi if dphi > 0 else math.inf
        cand = lam - step
        lam = cand if lo < cand < hi else 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * max(abs(hi), scale):
            break
    p = a / (lam - mu)
    return u + V @ p


def _random_feasible(u, r, k, rng):
    d = u.size
    G = rng.standard_normal((k, d))
    G /= np.linalg.norm(G, axis=1, keepdims=True)
    radii = r * rng.random(k) ** (1.0 / d)
    starts = u + G * radii[:, None]
    return np.array([project_two_balls(s, u, r) for s in starts])


def separation_oracle(q, X, u, r, rng=None, n_restarts: int = N_RESTARTS,
                      n_steps: int = ASCENT_STEPS) -> OracleResult:
    """Approximately maximize ``(1/|S|) sum q(x) (w . x)^2`` over ``B(u, r) ∩ B(0, 1)``.

    Candidates: the exact single-ball trust-region maximizer, the top
    eigenvector of ``M(q)`` (both signs), ``u`` itself and ``n_restarts``
    random feasible points.  Each is projected to feasibility and polished by
    projected gradient ascent; the best is returned.
    """
    u = np.asarray(u, dtype=np.float64)
    rng = rng if rng is not None else np.random.default_rng(0)
    M = second_moment_matrix(X, q)
    mu, V = np.linalg.eigh(M)
    if mu[-1] <= 0:
        return OracleResult(u.copy(), 0.0)
    cands = [
        project_two_balls(trust_region_max(M, u, r), u, r),
        project_two_balls(V[:, -1], u, r),
        project_two_balls(-V[:, -1], u, r),
        u.copy(),
    ]
    starts = np.vstack([np.array(cands), _random_feasible(u, r, n_restarts, rng)])
    W, vals = kernels.quad_ascent(M, u, float(r), starts, int(n_steps), 1.0 / mu[-1], DYKSTRA_TOL)
    best = int(np.argmax(vals))
    return OracleResult(np.asarray(W[best]).copy(), float(vals[best]))


def project_capped_mass(q, target: float, iters: int = 200) -> np.ndarray:
    """Project onto ``{q in [0, 1]^n : sum q >= target}``.

    The solution is ``clip(q + mu, 0, 1)`` for the smallest ``mu >= 0``
    meeting the mass constraint; ``mu`` is found by bisection.
    """
    q = np.asarray(q, dtype=np.float64)
    clipped = np.clip(q, 0.0, 1.0)
    if clipped.sum() >= target:
        return clipped
    lo, hi = 0.0, max(1.0 - float(q.min()), 0.0) + 1e-12
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.clip(q + mid, 0.0, 1.0).sum() >= target:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-15:
            break
    return np.clip(q + hi, 0.0, 1.0)


def soft_outlier_removal(problem: OutlierProblem, rng=None, max_iter: int = DEFAULT_MAX_ITER,
                         n_restarts: int = N_RESTARTS) -> SoftWeights:
    """Projected subgradient search for feasible soft weights.

    Starting from ``q = 1``, each iteration asks the separation oracle for
    the worst direction ``w``; if its weighted variance is within
    ``sigma2 (1 + tol)`` the weights are returned.  Otherwise every ``q(x)``
    drops by ``alpha_t (w . x)^2`` with
    ``alpha_t = sigma2 / (2 max_x (w . x)^4 sqrt(t))`` and the result is
    projected back onto the box-and-mass polytope.

    Raises :class:`InfeasibleOrBudget` (carrying the last weights) when the
    iteration cap is reached first.
    """
    pr = problem
    rng = rng if rng is not None else np.random.default_rng(0)
    n = pr.X.shape[0]
    target = (1.0 - pr.xi) * n
    if target <= 0:
        # xi = 1: dropping everything is feasible and needs no search
        return SoftWeights(np.zeros(n), 0.0, pr.u.copy(), 0.0, 1, True)
    q = np.ones(n)
    res = None
    for t in range(max_iter + 1):
        res = separation_oracle(q, pr.X, pr.u, pr.r, rng, n_restarts=n_restarts)
        if res.value <= pr.cap:
            return SoftWeights(q, float(q.sum()), res.w, res.value, t, True)
        if t == max_iter:
            break
        proj2 = (pr.X @ res.w) ** 2
        peak = float(proj2.max())
        alpha = pr.sigma2 / (2.0 * peak * peak * math.sqrt(t + 1))
        q = project_capped_mass(q - alpha * proj2, target)
    weights = SoftWeights(q, float(q.sum()), res.w, res.value, max_iter, False)
    raise InfeasibleOrBudget(
        f"variance {res.value:.4g} above cap {pr.cap:.4g} after {max_iter} iterations",
        weights=weights,
    )


def total_variation_to_uniform(p) -> float:
    p = np.asarray(p, dtype=np.float64)
    return 0.5 * float(np.abs(p - 1.0 / p.size).sum())


def normalize_weights(q, xi: float | None = None) -> NormalizedWeights:
    """Turn soft weights into a distribution over ``S``.

    When ``xi`` is given, checks that the total-variation distance to the
    uniform distribution is at most ``xi`` (it always is if ``q`` keeps
    ``(1 - xi)|S|`` mass with ``q <= 1``).
    """
    q = np.asarray(q, dtype=np.float64)
    total = q.sum()
    if not total > 0:
        raise ZeroMass("weights have zero total mass")
    p = q / total
    tv = total_variation_to_uniform(p)
    if xi is not None and tv > xi + 1e-12:
        raise ValueError(f"total variation {tv:.6g} exceeds xi={xi:.6g}")
    return NormalizedWeights(p, tv)


def weighted_sample(p, m: int, rng) -> np.ndarray:
    """``m`` i.i.d. indices drawn from ``p`` by inverse-CDF lookup."""
    p = np.asarray(p, dtype=np.float64)
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(int(m)), side="right")
    return np.minimum(idx, p.size - 1)
