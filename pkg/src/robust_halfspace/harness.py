"""Batch experiments: config parsing, seeded trials, baselines and plot data.

A config is an INI file::

    [experiment]
    dist = uniform_sphere
    dim = 20
    epsilon = 1/32
    eta = 0, eps/16, eps/8, eps/4
    model = malicious
    strategy = band_attack
    trials = 10

    [constants]
    xi_floor = 0.1

``eta`` and ``epsilon`` accept comma-separated lists; the experiment runs
their cartesian product.  ``eta`` entries may be written relative to the
current epsilon (``eps/8``, ``0.5*eps``).

Each run writes ``records.jsonl`` (one line per trial and learner),
``summary.json`` and ``timings.json``.  The first two depend only on the
config and master seed; wall-clock times live in the third.
"""
from __future__ import annotations

import configparser
import dataclasses
import itertools
import json
import math
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import learner as L
from .distributions import (AdmissibilityConfig, DistKind, Distribution, admissibility_check,
                            estimate_band_constants, exact_error_uniform)
from .errors import ConfigError, MissingResults, RoundFailed, StrategyModelMismatch
from .oracles import NoiseModel, NoiseOracleConfig, NoisyOracle, Strategy, check_strategy

RECORDS = "records.jsonl"
SUMMARY = "summary.json"
TIMINGS = "timings.json"
ERROR_VS_ETA = "error_vs_eta.tsv"
LABELS_VS_EPS = "labels_vs_log_inv_eps.tsv"

BASELINES = ("averaging", "plain_hinge")


@dataclass
class ExperimentConfig:
    dist: DistKind = DistKind.UNIFORM_SPHERE
    dim: int = 20
    epsilon: list = field(default_factory=lambda: [1 / 32])
    eta: list = field(default_factory=lambda: ["0"])
    delta: float = 0.1
    model: NoiseModel = NoiseModel.MALICIOUS
    strategy: Strategy = Strategy.RANDOM_FLIP
    trials: int = 10
    seed: int = 0
    init: str = "cheat"
    init_angle: float = math.pi / 4
    n_k: int | None = None
    m_k: int | None = None
    hinge_max_iter: int = 20_000
    outlier_max_iter: int = 5_000
    mc_samples: int = 100_000
    workers: int = 1
    agnostic: bool = False
    agnostic_c: float = 2.0
    baselines: tuple = BASELINES
    baseline_budget: str = "matched"
    constants: dict = field(default_factory=dict)

    def calibration(self) -> L.CalibrationConstants:
        return L.CalibrationConstants(**self.constants)

    def points(self):
        """Sweep points ``(epsilon, eta)`` in a fixed order."""
        out = []
        for eps, eta in itertools.product(self.epsilon, self.eta):
            out.append((eps, _eta_value(eta, eps)))
        return out

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["dist"] = self.dist.value
        d["model"] = self.model.value
        d["strategy"] = self.strategy.value
        d["baselines"] = list(self.baselines)
        return d


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_CONSTANTS = {f.name for f in dataclasses.fields(L.CalibrationConstants)}
_ETA_RE = re.compile(r"^\s*(?:([0-9.eE+-]+)\s*\*\s*)?eps(?:\s*/\s*([0-9.eE+-]+))?\s*$")


def _number(text: str) -> float:
    text = text.strip()
    if "/" in text:
        return float(Fraction(text))
    return float(text)


def _eta_value(text: str, eps: float) -> float:
    m = _ETA_RE.match(text)
    if m:
        mul = float(m.group(1)) if m.group(1) else 1.0
        div = float(m.group(2)) if m.group(2) else 1.0
        return mul * eps / div
    return _number(text)


def _parse_value(name: str, raw: str):
    raw = raw.strip()
    if name == "dist":
        return DistKind(raw)
    if name == "model":
        return NoiseModel(raw)
    if name == "strategy":
        return Strategy(raw)
    if name == "epsilon":
        vals = [_number(v) for v in raw.split(",") if v.strip()]
        if not vals:
            raise ValueError("empty list")
        return vals
    if name == "eta":
        vals = [v.strip() for v in raw.split(",") if v.strip()]
        if not vals:
            raise ValueError("empty list")
        for v in vals:
            _eta_value(v, 0.1)
        return vals
    if name in ("dim", "trials", "seed", "hinge_max_iter", "outlier_max_iter", "mc_samples",
                "workers"):
        return int(raw)
    if name in ("n_k", "m_k"):
        return None if raw.lower() in ("", "none", "default") else int(raw)
    if name in ("delta", "init_angle", "agnostic_c"):
        return _number(raw)
    if name == "agnostic":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError("expected a boolean")
    if name == "init":
        if raw not in ("cheat", "honest"):
            raise ValueError("expected 'cheat' or 'honest'")
        return raw
    if name == "baselines":
        vals = tuple(v.strip() for v in raw.split(",") if v.strip())
        bad = [v for v in vals if v not in BASELINES]
        if bad:
            raise ValueError(f"unknown baseline {bad[0]!r}")
        return vals
    if name == "baseline_budget":
        if raw != "matched":
            int(raw)
        return raw
    raise KeyError(name)


def _line_of(text: str | None, key: str):
    if not text:
        return None
    pat = re.compile(rf"^\s*{re.escape(key)}\s*[=:]", re.MULTILINE)
    m = pat.search(text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _apply(cfg_values: dict, consts: dict, section: str, key: str, raw: str, text=None):
    line = _line_of(text, key)
    if section == "constants" or (section is None and key in _CONSTANTS and key not in _FIELDS):
        if key not in _CONSTANTS:
            raise ConfigError(f"unknown calibration constant {key!r}", field=key, line=line)
        try:
            consts[key] = None if raw.strip().lower() == "none" else _number(raw)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad value for {key}: {exc}", field=key, line=line) from None
        return
    if key not in _FIELDS or key == "constants":
        raise ConfigError(f"unknown field {key!r}", field=key, line=line)
    try:
        cfg_values[key] = _parse_value(key, raw)
    except (ValueError, KeyError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad value for {key}: {exc}", field=key, line=line) from None


def _validate(cfg: ExperimentConfig, text=None):
    def fail(msg, name):
        raise ConfigError(msg, field=name, line=_line_of(text, name))

    if cfg.trials < 1:
        fail("trials must be at least 1", "trials")
    if cfg.dim < 2:
        fail("dim must be at least 2", "dim")
    for name in ("hinge_max_iter", "outlier_max_iter"):
        if getattr(cfg, name) < 1:
            fail(f"{name} must be at least 1", name)
    if cfg.workers < 1:
        fail("workers must be at least 1", "workers")
    if cfg.mc_samples < 1000:
        fail("mc_samples must be at least 1000", "mc_samples")
    if not 0 < cfg.delta < 1:
        fail("delta must lie in (0, 1)", "delta")
    for eps in cfg.epsilon:
        if not 0 < eps < 0.5:
            fail(f"epsilon must lie in (0, 1/2), got {eps}", "epsilon")
    for eps, eta in cfg.points():
        if not 0 <= eta < 1:
            fail(f"eta must lie in [0, 1), got {eta}", "eta")
    try:
        check_strategy(cfg.model, cfg.strategy)
    except StrategyModelMismatch as exc:
        fail(str(exc), "strategy")
    try:
        cfg.calibration()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid calibration constants: {exc}", field="constants") from None


def load_config(path=None, overrides=(), text: str | None = None) -> ExperimentConfig:
    """Read an INI config, apply ``key=value`` overrides and validate.

    Override keys may be bare (``eta``) or section-qualified
    (``constants.xi_floor``).  Any problem raises :class:`ConfigError`.
    """
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text or "")
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}", line=getattr(exc, "lineno", None)) from None
    values, consts = {}, {}
    for section in parser.sections():
        if section not in ("experiment", "constants", "compare"):
            idx = text.find(f"[{section}]")
            raise ConfigError(f"unknown section [{section}]", field=section,
                              line=text.count("\n", 0, idx) + 1 if idx >= 0 else None)
        for key, raw in parser.items(section):
            _apply(values, consts, "constants" if section == "constants" else "experiment",
                   key, raw, text)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}", field=item)
        key, raw = item.split("=", 1)
        key = key.strip()
        section = None
        if "." in key:
            section, key = key.split(".", 1)
            section = "constants" if section == "constants" else "experiment"
        _apply(values, consts, section, key, raw)
    cfg = ExperimentConfig(**values, constants=consts)
    _validate(cfg, text)
    return cfg


# ---------------------------------------------------------------------------
# trials


def _seeds(master: int, trial: int):
    # streams depend on the trial only, so sweep points share w*, draws and learner coins
    ss = np.random.SeedSequence([master, trial])
    oracle_ss, learner_ss, init_ss, eval_ss = ss.spawn(4)
    return int(oracle_ss.generate_state(1, np.uint64)[0]), learner_ss, init_ss, eval_ss


def _final_error(dist, w, w_star, eval_rng, mc_samples):
    if dist.is_uniform:
        return exact_error_uniform(w, w_star), None
    est = L.mc_error(dist, w, w_star, mc_samples, eval_rng)
    return est.value, est.se


def _success(err, se, eps):
    if err is None:
        return False
    return bool(err <= eps + (3.0 * se if se is not None else 0.0))


def _round(x, nd=12):
    """Round floats so records are stable and readable."""
    if isinstance(x, float):
        return float(f"{x:.{nd}g}") if math.isfinite(x) else None
    if isinstance(x, dict):
        return {k: _round(v, nd) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round(v, nd) for v in x]
    if isinstance(x, (np.floating,)):
        return _round(float(x), nd)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _setup(cfg: ExperimentConfig, point_idx, trial, eps, eta):
    dist = Distribution(cfg.dist, cfg.dim)
    oracle_seed, learner_ss, init_ss, eval_ss = _seeds(cfg.seed, trial)
    init_rng = np.random.default_rng(init_ss)
    w_star = L.normalize(init_rng.standard_normal(cfg.dim))
    ocfg = NoiseOracleConfig(cfg.model, eta, cfg.strategy, w_star, dist, oracle_seed)
    return dist, ocfg, np.random.default_rng(learner_ss), init_rng, np.random.default_rng(eval_ss)


def _schedule(cfg, dist, eps):
    return L.default_schedule(dist.kind, eps, cfg.delta, cfg.dim, cfg.calibration(),
                              n_k=cfg.n_k, m_k=cfg.m_k)


def _w0(cfg, oracle, init_rng, learner_rng):
    if cfg.init == "cheat":
        return L.vector_at_angle(oracle.config.target, cfg.init_angle, init_rng)
    return L.init_w0(oracle, cfg.delta, rng=learner_rng, constants=cfg.calibration(),
                     u=init_rng.standard_normal(cfg.dim), n_k=cfg.n_k, m_k=cfg.m_k)


def _localized(cfg, point_idx, trial, eps, eta):
    """One localized-learner trial; returns ``(record, w0, schedule)``."""
    dist, ocfg, lrng, irng, erng = _setup(cfg, point_idx, trial, eps, eta)
    oracle = NoisyOracle(ocfg)
    rec = {"point": point_idx, "trial": trial, "learner": "localized", "epsilon": eps, "eta": eta,
           "seed": [cfg.seed, trial]}
    schedule = stats = w0 = None
    try:
        w0 = _w0(cfg, oracle, irng, lrng)
        rec["init_error"] = exact_error_uniform(w0, ocfg.target)
        run_eps = eps
        if cfg.agnostic:
            run_eps = min(L.agnostic_epsilon(eta, eps, cfg.agnostic_c), 0.49)
            rec["epsilon_prime"] = run_eps
        schedule = _schedule(cfg, dist, run_eps)
        w, stats = L.run(oracle, schedule, w0, rng=lrng, hinge_max_iter=cfg.hinge_max_iter,
                         outlier_max_iter=cfg.outlier_max_iter)
        err, se = _final_error(dist, w, ocfg.target, erng, cfg.mc_samples)
        rec.update(failed=False, failure_round=None, failure_reason=None)
        target = eps
        if cfg.agnostic:
            target = eta + rec["epsilon_prime"]
        rec.update(final_error=err, final_error_se=se, success=_success(err, se, target))
    except RoundFailed as exc:
        stats = exc.stats
        rec.update(failed=True, failure_round=exc.round_index, failure_reason=str(exc.cause),
                   final_error=None, final_error_se=None, success=False)
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        # anything else is a bug in this trial only; record it and keep going
        rec.update(failed=True, failure_round=None,
                   failure_reason=f"{type(exc).__name__}: {exc}",
                   final_error=None, final_error_se=None, success=False)
    rec["rounds"] = [r.to_dict() for r in (stats.rounds if stats else [])]
    rec["labels_requested"] = rec["rounds"][-1]["labels_requested"] if rec["rounds"] else 0
    rec["labels_used"] = oracle.ledger.label_queries
    rec["unlabeled_draws"] = oracle.ledger.unlabeled_draws
    rec["rounds_planned"] = schedule.s if schedule else None
    return rec, w0, schedule


def _baseline_records(cfg, point_idx, trial, eps, eta, w0, schedule, budget):
    dist, ocfg, _, _, erng = _setup(cfg, point_idx, trial, eps, eta)
    oracle = NoisyOracle(ocfg)
    ids, X = oracle.draw_batch(budget)
    y = oracle.reveal_labels(ids)
    out = []
    for name in cfg.baselines:
        rec = {"point": point_idx, "trial": trial, "learner": name, "epsilon": eps, "eta": eta,
               "seed": [cfg.seed, trial], "labels_used": int(budget)}
        try:
            if name == "averaging":
                w = L.averaging_baseline(X, y)
            else:
                tau = schedule.rounds[-1].tau
                w = L.plain_hinge_baseline(X, y, tau, w0, schedule.kappa / 8.0,
                                           max_iter=cfg.hinge_max_iter)
            err, se = _final_error(dist, w, ocfg.target, erng, cfg.mc_samples)
            rec.update(failed=False, final_error=err, final_error_se=se,
                       success=_success(err, se, eps))
        except ValueError as exc:
            rec.update(failed=True, failure_reason=str(exc), final_error=None,
                       final_error_se=None, success=False)
        out.append(rec)
    return out


def _trial(args):
    cfg, point_idx, trial, eps, eta, compare = args
    t0 = time.perf_counter()
    rec, w0, schedule = _localized(cfg, point_idx, trial, eps, eta)
    recs = [rec]
    if compare:
        if schedule is None or w0 is None:
            dist = Distribution(cfg.dist, cfg.dim)
            schedule = _schedule(cfg, dist, eps)
        if w0 is None:
            w0 = np.eye(cfg.dim)[0]
        budget = (schedule.total_labels if cfg.baseline_budget == "matched"
                  else int(cfg.baseline_budget))
        recs += _baseline_records(cfg, point_idx, trial, eps, eta, w0, schedule, budget)
    return [_round(r) for r in recs], time.perf_counter() - t0


def _run(cfg: ExperimentConfig, out_dir, compare: bool):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, p, t, eps, eta, compare)
            for p, (eps, eta) in enumerate(cfg.points()) for t in range(cfg.trials)]
    t0 = time.perf_counter()
    records, timings = [], []
    # results come back in submission order, so a single writer keeps files stable
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = pool.map(_trial, jobs)
            _write(out, results, records, timings, jobs)
    else:
        _write(out, map(_trial, jobs), records, timings, jobs)
    summary = summarize(records)
    # worker count changes nothing in the results, so it stays out of them
    summary["config"] = _round({k: v for k, v in cfg.to_dict().items() if k != "workers"})
    (out / SUMMARY).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    (out / TIMINGS).write_text(json.dumps({
        "total_seconds": time.perf_counter() - t0,
        "trials": timings,
    }, indent=2) + "\n")
    return summary


def _write(out, results, records, timings, jobs):
    with open(out / RECORDS, "w") as fh:
        for (_, p, t, *_rest), (recs, secs) in zip(jobs, results):
            for rec in recs:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
                records.append(rec)
            fh.flush()
            timings.append({"point": p, "trial": t, "seconds": secs})


def run_experiment(cfg: ExperimentConfig, out_dir) -> dict:
    """Run every (sweep point, trial) with the localized learner and persist results."""
    return _run(cfg, out_dir, compare=False)


def compare_baselines(cfg: ExperimentConfig, out_dir) -> dict:
    """Localized learner against averaging and plain hinge on the same seeds.

    Baselines get a passive sample from an oracle built with the same seed.
    By default its size matches the localized learner's label budget
    (``sum m_k``); ``baseline_budget`` may fix it instead.
    """
    return _run(cfg, out_dir, compare=True)


# ---------------------------------------------------------------------------
# aggregation


def _mean_std(vals):
    if not vals:
        return None, None
    a = np.asarray(vals, dtype=np.float64)
    return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0


def summarize(records) -> dict:
    """Per (learner, epsilon, eta) aggregates; recomputable from the records."""
    groups = {}
    for r in records:
        groups.setdefault((r["learner"], r["epsilon"], r["eta"]), []).append(r)
    rows = []
    for (learner, eps, eta), rs in groups.items():
        done = [r for r in rs if not r["failed"]]
        err_mean, err_std = _mean_std([r["final_error"] for r in done])
        lab_mean, lab_std = _mean_std([r["labels_used"] for r in rs])
        rows.append(_round({
            "learner": learner, "epsilon": eps, "eta": eta,
            "trials": len(rs), "failed": len(rs) - len(done),
            "successes": sum(bool(r["success"]) for r in rs),
            "success_rate": sum(bool(r["success"]) for r in rs) / len(rs),
            "error_mean": err_mean, "error_std": err_std,
            "labels_mean": lab_mean, "labels_std": lab_std,
            "seeds": [r["seed"] for r in rs],
        }))
    n_local = [r for r in records if r["learner"] == "localized"]
    return {
        "groups": rows,
        "total_trials": len(n_local),
        "failed_trials": sum(r["failed"] for r in n_local),
    }


def load_records(path) -> list:
    path = Path(path)
    if path.is_dir():
        path = path / RECORDS
    if not path.exists():
        raise MissingResults(f"no records at {path}")
    with open(path) as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    if not records:
        raise MissingResults(f"{path} holds no records")
    return records


def _fmt(v):
    if v is None:
        return "nan"
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _write_tsv(path, header, rows):
    with open(path, "w") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(_fmt(v) for v in row) + "\n")


def emit_plot_data(results, out_dir=None) -> dict:
    """Write tab-separated curves: error vs eta and labels vs log2(1/epsilon).

    ``results`` is a results directory, a records file or a list of records.
    Returns the paths written.
    """
    if isinstance(results, (str, Path)):
        records = load_records(results)
        if out_dir is None:
            out_dir = Path(results) if Path(results).is_dir() else Path(results).parent
    else:
        records = list(results)
        if not records:
            raise MissingResults("empty result set")
    if out_dir is None:
        raise ValueError("out_dir is required when passing records directly")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    groups = sorted(summarize(records)["groups"],
                    key=lambda g: (g["learner"], -g["epsilon"], g["eta"]))
    err_rows = [(g["learner"], g["epsilon"], g["eta"], g["trials"], g["error_mean"],
                 g["error_std"], g["success_rate"]) for g in groups]
    lab_rows = [(g["learner"], g["eta"], g["epsilon"], math.log2(1.0 / g["epsilon"]),
                 g["trials"], g["labels_mean"], g["labels_std"])
                for g in sorted(groups, key=lambda g: (g["learner"], g["eta"], -g["epsilon"]))]
    p1, p2 = out / ERROR_VS_ETA, out / LABELS_VS_EPS
    _write_tsv(p1, ["learner", "epsilon", "eta", "trials", "error_mean", "error_std",
                    "success_rate"], err_rows)
    _write_tsv(p2, ["learner", "eta", "epsilon", "log2_inv_epsilon", "trials", "labels_mean",
                    "labels_std"], lab_rows)
    return {"error_vs_eta": p1, "labels_vs_log_inv_eps": p2}


# ---------------------------------------------------------------------------
# calibration and admissibility


def calibrate(cfg: ExperimentConfig, out_dir=None, n_mc: int = 200_000) -> dict:
    """Monte-Carlo band constants for the uniform sphere at ``cfg.dim``."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xCA1]))
    est = estimate_band_constants(cfg.dim, n_mc=n_mc, rng=rng)
    est["kappa"] = 1.0 / (8.0 * est["c4_tilde"]) if est["c4_tilde"] > 0 else None
    est["dim"] = cfg.dim
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        lines = ["[constants]"] + [f"{k} = {est[k]!r}" for k in ("c2_tilde", "c4_tilde")]
        (out / "calibration.ini").write_text("\n".join(lines) + "\n")
        (out / "calibration.json").write_text(json.dumps(_round(est), indent=2) + "\n")
    return est


def check_admissible(cfg: ExperimentConfig, out_dir=None, parts=(1, 2, 3, 4, 5),
                     n_mc: int | None = None) -> list:
    """Run the admissibility checks for the configured distribution."""
    dist = Distribution(cfg.dist, cfg.dim)
    acfg = AdmissibilityConfig() if n_mc is None else AdmissibilityConfig(n_mc=n_mc)
    reports = []
    for part in parts:
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xAD, part]))
        reports.append(admissibility_check(dist, part, acfg, rng))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        payload = [_round({"part": r.part, "kind": r.kind, "dim": r.dim, "passed": r.passed,
                           "estimates": r.estimates, "rows": r.rows, "notes": r.notes})
                   for r in reports]
        (out / "admissibility.json").write_text(json.dumps(payload, indent=2, default=str) + "\n")
    return reports
