"""Rescaled hinge loss and its minimization over ``B(u, r) ∩ B(0, 1)``."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import EmptySet, NonpositiveTau, ToleranceNotCertified, ZeroVector

DEFAULT_MAX_ITER = 20_000
DYKSTRA_TOL = 1e-10


def _check_tau(tau):
    if not tau > 0:
        raise NonpositiveTau(f"tau must be positive, got {tau}")


def hinge(w, x, y, tau) -> float:
    """``max(0, 1 - y (w . x) / tau)``."""
    _check_tau(tau)
    return max(0.0, 1.0 - y * float(np.dot(w, x)) / tau)


def avg_hinge(w, X, y, tau) -> float:
    _check_tau(tau)
    X = np.atleast_2d(X)
    if X.shape[0] == 0:
        raise EmptySet("hinge average over an empty set")
    return float(np.mean(np.maximum(0.0, 1.0 - np.asarray(y) * (X @ w) / tau)))


def weighted_hinge(w, X, y, p, tau) -> float:
    _check_tau(tau)
    X = np.atleast_2d(X)
    if X.shape[0] == 0:
        raise EmptySet("hinge average over an empty set")
    return float(np.dot(p, np.maximum(0.0, 1.0 - np.asarray(y) * (X @ w) / tau)))


def hinge_subgradient(w, X, y, tau, p=None) -> np.ndarray:
    """A subgradient of the (weighted) average hinge at ``w``."""
    _check_tau(tau)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if p is None:
        p = np.full(X.shape[0], 1.0 / X.shape[0])
    return kernels.hinge_objective_grad(X, np.asarray(y, dtype=np.float64), p, tau, w)[1]


def project_two_balls(z, u, r, tol: float = DYKSTRA_TOL) -> np.ndarray:
    """Euclidean projection of ``z`` onto ``B(u, r) ∩ B(0, 1)``.

    Exact when a single ball constraint is active, Dykstra's alternating
    projections otherwise.
    """
    if not r > 0:
        raise ValueError("radius must be positive")
    return kernels.project_two_balls(np.asarray(z, dtype=np.float64),
                                     np.asarray(u, dtype=np.float64), float(r), tol)


def normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n == 0:
        raise ZeroVector("cannot normalize the zero vector")
    return v / n


@dataclass
class HingeProblem:
    X: np.ndarray
    y: np.ndarray
    tau: float
    center: np.ndarray
    radius: float
    tolerance: float
    weights: np.ndarray | None = None

    def __post_init__(self):
        _check_tau(self.tau)
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        self.X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        self.y = np.asarray(self.y, dtype=np.float64)
        self.center = np.asarray(self.center, dtype=np.float64)
        if self.X.shape[0] == 0:
            raise EmptySet("hinge problem without examples")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64)
            if (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError("weights must be nonnegative and sum to 1")
            self.weights = w

    def probabilities(self) -> np.ndarray:
        if self.weights is None:
            return np.full(self.X.shape[0], 1.0 / self.X.shape[0])
        return self.weights

    def objective(self, w) -> float:
        return weighted_hinge(w, self.X, self.y, self.probabilities(), self.tau)


@dataclass
class HingeResult:
    v: np.ndarray
    objective: float
    iterations: int
    certified: bool


def minimize_hinge(problem: HingeProblem, max_iter: int = DEFAULT_MAX_ITER, start=None,
                   check_every: int = 250, min_iter: int = 1000) -> HingeResult:
    """Approximately minimize the hinge objective over the localized ball.

    Projected subgradient descent with steps ``R / (G sqrt(t))``, ``R`` the
    feasible-set diameter and ``G = max ||x|| / tau``.  Stops once the best
    objective is below the tolerance, or stops improving by more than
    ``tolerance / 4`` over the last quarter of the iterations.  If the cap is
    reached first the best iterate is returned with ``certified=False`` and a
    :class:`ToleranceNotCertified` warning.
    """
    pr = problem
    u = pr.center
    R = 2.0 * min(pr.radius, 1.0)
    G = float(np.max(np.linalg.norm(pr.X, axis=1))) / pr.tau
    w0 = project_two_balls(u if start is None else start, u, pr.radius)
    if G == 0:
        return HingeResult(w0, pr.objective(w0), 0, True)
    v, obj, iters, certified = kernels.hinge_descent(
        pr.X, pr.y, pr.probabilities(), pr.tau, u, float(pr.radius), w0, R / G,
        int(max_iter), float(pr.tolerance), int(check_every), int(min_iter), DYKSTRA_TOL,
    )
    if not certified:
        warnings.warn(
            f"hinge minimizer hit {max_iter} iterations without a plateau "
            f"(best objective {obj:.6g})",
            ToleranceNotCertified,
            stacklevel=2,
        )
    return HingeResult(np.asarray(v), float(obj), int(iters), bool(certified))


def plain_hinge(X, y, tau, start, tolerance, max_iter: int = DEFAULT_MAX_ITER) -> HingeResult:
    """Hinge minimization over the unit ball only (no localization)."""
    d = np.atleast_2d(X).shape[1]
    problem = HingeProblem(X, y, tau, np.zeros(d), 1.0, tolerance)
    return minimize_hinge(problem, max_iter=max_iter, start=start)


def max_angle(r: float) -> float:
    """Largest angle between a unit ``u`` and any nonzero ``v`` in ``B(u, r)``.

    The tangent point gives ``arcsin(r)``, slightly more than ``r``; once
    ``r >= 1`` the ball reaches the origin and every direction is possible.
    """
    return math.asin(r) if r < 1.0 else math.pi


def angular_step_bound(r: float) -> float:
    """Largest ``||w_k - w_{k-1}||`` after normalizing ``v`` from ``B(w_{k-1}, r)``."""
    return 2.0 * math.sin(max_angle(r) / 2.0)
