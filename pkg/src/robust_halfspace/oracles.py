"""Simulated example oracle with malicious or adversarial-label noise.

The oracle keeps only what it must to answer label queries later: each draw's
committed label and its provenance.  Provenance is for the harness and tests;
learners never read it.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .distributions import Distribution, band_mass, sample
from .errors import StrategyModelMismatch, UnknownId


class Provenance(enum.IntEnum):
    CLEAN = 0
    DIRTY = 1


class NoiseModel(str, enum.Enum):
    MALICIOUS = "malicious"
    ADVERSARIAL_LABEL = "label"


class Strategy(str, enum.Enum):
    RANDOM_FLIP = "random_flip"
    ANTI_TARGET = "anti_target"
    BAND_ATTACK = "band_attack"
    IN_BAND_LABEL_FLIP = "in_band_label_flip"


MALICIOUS_ONLY = frozenset({Strategy.ANTI_TARGET, Strategy.BAND_ATTACK})
LABEL_ONLY = frozenset({Strategy.IN_BAND_LABEL_FLIP})


def check_strategy(model, strategy) -> None:
    model, strategy = NoiseModel(model), Strategy(strategy)
    if model is NoiseModel.ADVERSARIAL_LABEL and strategy in MALICIOUS_ONLY:
        raise StrategyModelMismatch(f"{strategy.value} needs the malicious model")
    if model is NoiseModel.MALICIOUS and strategy in LABEL_ONLY:
        raise StrategyModelMismatch(f"{strategy.value} needs the label-noise model")


@dataclass
class LabeledExample:
    x: np.ndarray
    y: int
    provenance: Provenance
    id: int


@dataclass
class NoiseOracleConfig:
    model: NoiseModel
    eta: float
    strategy: Strategy
    target: np.ndarray
    dist: Distribution
    seed: int = 0

    def __post_init__(self):
        self.model = NoiseModel(self.model)
        self.strategy = Strategy(self.strategy)
        self.target = np.asarray(self.target, dtype=np.float64)
        if not 0.0 <= self.eta < 1.0:
            raise ValueError(f"eta must lie in [0, 1), got {self.eta}")
        if abs(np.linalg.norm(self.target) - 1.0) > 1e-9:
            raise ValueError("target must be a unit vector")
        if self.target.shape != (self.dist.dim,):
            raise ValueError("target dimension does not match the distribution")
        check_strategy(self.model, self.strategy)


@dataclass
class QueryLedger:
    unlabeled_draws: int = 0
    label_queries: int = 0


@dataclass
class PublishedState:
    w: np.ndarray
    b: float


class _Store:
    """Growable per-draw label/provenance/revealed arrays."""

    def __init__(self):
        self.y = np.empty(1024, dtype=np.int8)
        self.dirty = np.empty(1024, dtype=bool)
        self.revealed = np.zeros(1024, dtype=bool)
        self.n = 0

    def extend(self, y, dirty):
        k = len(y)
        need = self.n + k
        if need > self.y.size:
            cap = max(need, 2 * self.y.size)
            for name in ("y", "dirty", "revealed"):
                old = getattr(self, name)
                new = np.zeros(cap, dtype=old.dtype)
                new[: self.n] = old[: self.n]
                setattr(self, name, new)
        self.y[self.n:need] = y
        self.dirty[self.n:need] = dirty
        self.n = need


class NoisyOracle:
    """Example oracle ``EX_eta(f, D)`` plus a label-revealing oracle.

    With probability ``1 - eta`` a draw is clean.  Otherwise the configured
    adversary produces it; the adversary may look at the learner's published
    state (see :meth:`publish`) and the oracle's history.
    """

    def __init__(self, config: NoiseOracleConfig):
        self.config = config
        self.ledger = QueryLedger()
        self.published: PublishedState | None = None
        self.history: list[PublishedState] = []
        ss = np.random.SeedSequence(config.seed)
        clean_ss, noise_ss, adv_ss = ss.spawn(3)
        self._clean_rng = np.random.default_rng(clean_ss)
        self._noise_rng = np.random.default_rng(noise_ss)
        self._adv_rng = np.random.default_rng(adv_ss)
        self._store = _Store()

    @property
    def dim(self) -> int:
        return self.config.dist.dim

    def publish(self, w, b: float) -> None:
        """Expose the learner's current hypothesis and band to the adversary."""
        state = PublishedState(np.array(w, dtype=np.float64), float(b))
        self.published = state
        self.history.append(state)

    # -- drawing ---------------------------------------------------------

    def draw_unlabeled(self):
        ids, X = self.draw_batch(1)
        return int(ids[0]), X[0]

    def draw_batch(self, n: int):
        """Draw ``n`` instances; returns ``(ids, X)``.  Labels are committed now."""
        cfg = self.config
        X = sample(cfg.dist, self._clean_rng, n)
        y = np.where(X @ cfg.target >= 0, 1, -1).astype(np.int8)
        noise_u = self._noise_rng.random(n)
        if cfg.model is NoiseModel.MALICIOUS:
            dirty = noise_u < cfg.eta
            if dirty.any():
                Xd, yd = self._malicious(int(dirty.sum()), X[dirty], y[dirty])
                X[dirty] = Xd
                y[dirty] = yd
        else:
            dirty = self._label_flip_mask(X, noise_u)
            y[dirty] = -y[dirty]
        start = self._store.n
        self._store.extend(y, dirty)
        self.ledger.unlabeled_draws += n
        return np.arange(start, start + n), X

    def _label_flip_mask(self, X, noise_u):
        cfg = self.config
        if cfg.strategy is Strategy.RANDOM_FLIP or self.published is None:
            return noise_u < cfg.eta
        # flip only inside the current band, keeping the overall rate at eta
        st = self.published
        mass = band_mass(cfg.dist, st.b)
        rate = min(1.0, cfg.eta / mass) if mass > 0 else 0.0
        return (np.abs(X @ st.w) < st.b) & (noise_u < rate)

    def _malicious(self, k, X_clean, y_clean):
        cfg = self.config
        s = cfg.strategy
        if s is Strategy.RANDOM_FLIP:
            return X_clean, -y_clean
        if s is Strategy.ANTI_TARGET:
            X = np.tile(-cfg.target, (k, 1))
            return self._clip(X), np.ones(k, dtype=np.int8)
        return self._band_attack(k)

    def _band_attack(self, k):
        cfg = self.config
        d = self.dim
        w_star = cfg.target
        if self.published is not None:
            u, b = self.published.w, self.published.b
        else:
            u, b = w_star, 1.0 / math.sqrt(d)
        u = u / np.linalg.norm(u)
        e = w_star - (w_star @ u) * u
        if np.linalg.norm(e) < 1e-12:
            e = self._adv_rng.standard_normal(d)
            e -= (e @ u) * u
        e /= np.linalg.norm(e)
        # jitter each point slightly around e, staying orthogonal to u
        G = self._adv_rng.standard_normal((k, d)) * (0.1 / math.sqrt(d))
        G -= np.outer(G @ u, u)
        E = e + G
        E /= np.linalg.norm(E, axis=1, keepdims=True)
        h = min(b, 1.0) * (1.0 - 1e-6)
        perp = math.sqrt(max(1.0 - h * h, 0.0)) if cfg.dist.is_uniform else math.sqrt(d)
        # the point sits on u's negative side so u "agrees" with the wrong label
        X = -h * u + perp * E
        y = -np.where(X @ w_star >= 0, 1, -1).astype(np.int8)
        return self._clip(X), y

    def _clip(self, X):
        if not self.config.dist.is_uniform:
            return X
        norms = np.linalg.norm(X, axis=1, keepdims=True)
        return X / np.maximum(norms, 1.0)

    # -- labels ----------------------------------------------------------

    def _check_ids(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self._store.n):
            bad = ids[(ids < 0) | (ids >= self._store.n)][0]
            raise UnknownId(int(bad))
        return ids

    def reveal_label(self, id_: int) -> int:
        return int(self.reveal_labels([id_])[0])

    def reveal_labels(self, ids) -> np.ndarray:
        """Committed labels for ``ids``; each id is charged once, on first reveal."""
        ids = self._check_ids(ids)
        uniq = np.unique(ids)
        fresh = uniq[~self._store.revealed[uniq]]
        self._store.revealed[fresh] = True
        self.ledger.label_queries += int(fresh.size)
        return self._store.y[ids].astype(np.int64)

    # -- harness-only views ---------------------------------------------

    def provenance(self, ids) -> np.ndarray:
        ids = self._check_ids(ids)
        return np.where(self._store.dirty[ids], Provenance.DIRTY, Provenance.CLEAN)

    def is_dirty(self, ids) -> np.ndarray:
        return self._store.dirty[self._check_ids(ids)].copy()

    def peek_labels(self, ids) -> np.ndarray:
        """Committed labels without charging the ledger."""
        return self._store.y[self._check_ids(ids)].astype(np.int64)

    def example(self, id_: int, x) -> LabeledExample:
        ids = self._check_ids([id_])
        return LabeledExample(np.asarray(x), int(self._store.y[ids[0]]),
                              Provenance(int(self._store.dirty[ids[0]])), int(id_))
