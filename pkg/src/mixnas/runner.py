"""Search procedures, configuration documents, and result files.

Four procedures are provided:

* ``proposed`` - uniform weight stage, then one mixture-sampled stage that
  updates every component with importance-weighted natural gradients;
* ``method1`` - per regularization strength, re-initialized weights and
  interleaved weight/distribution updates;
* ``method2`` - a single uniform weight stage, then one independent
  distribution stage per regularization strength;
* ``random`` - uniform sampling inside complexity bands.

Every random draw comes from a stream derived from the master seed and a
(stage, component) key, so each stage can be reproduced on its own.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import __version__
from .model import Architecture, Distribution, SearchSpace, most_probable, sample_choices
from .objectives import (
    Coupling,
    SupernetEvaluator,
    SyntheticDataset,
    TableEvaluator,
    TableObjective,
    tradeoff_instance,
)
from .optimizer import Ensemble, default_learning_rate, default_theta_min, sample_mixture_choices, update_is_report, update_single
from .regularizer import CostModel, complexities, complexity, normalize_costs
from .utility import UtilityConfig

log = logging.getLogger(__name__)

METHODS = ("proposed", "method1", "method2", "random")

# stream keys
DATA, WEIGHT_INIT, WEIGHT_STAGE, THETA_STAGE, RETRAIN, RANDOM = range(6)
STAGE_NAMES = {DATA: "data", WEIGHT_INIT: "weight_init", WEIGHT_STAGE: "weight_stage",
               THETA_STAGE: "theta_stage", RETRAIN: "retrain", RANDOM: "random"}


def stream(seed: int, stage: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stage, index)))


@dataclass
class SearchConfig:
    space: dict = field(default_factory=dict)
    evaluator: dict = field(default_factory=lambda: {"kind": "tradeoff"})
    method: str = "proposed"
    lam: int = 2
    eta: float | None = None
    epsilons: tuple[float, ...] = (0.0, 0.1, 0.3, 0.5)
    t_w: int = 500
    t_theta: int = 500
    batch_w: int = 64
    batch_theta: int = 64
    seed: int = 0
    theta_min: float | None = None
    normalize_costs: bool = True
    utility: UtilityConfig = field(default_factory=UtilityConfig)
    random_search: dict = field(default_factory=dict)
    out: str | None = None

    def __post_init__(self):
        self.epsilons = tuple(float(e) for e in self.epsilons)
        self.validate()

    def validate(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.lam < 1:
            raise ValueError("lambda must be >= 1")
        if self.t_w < 0 or self.t_theta < 0:
            raise ValueError("iteration counts must be >= 0")
        if not self.epsilons:
            raise ValueError("at least one epsilon is required")
        if any(e < 0 for e in self.epsilons):
            raise ValueError("epsilons must be nonnegative")
        if len(set(self.epsilons)) != len(self.epsilons):
            raise ValueError("epsilons must be distinct")
        if self.eta is not None and self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.batch_w < 1 or self.batch_theta < 1:
            raise ValueError("mini-batch sizes must be >= 1")

    # the document uses "lambda" as the key; it is a keyword in Python
    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["lambda"] = doc.pop("lam")
        doc["epsilons"] = list(self.epsilons)
        doc["utility"] = dataclasses.asdict(self.utility)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "SearchConfig":
        doc = dict(doc)
        if "lambda" in doc:
            doc["lam"] = doc.pop("lambda")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if isinstance(doc.get("utility"), dict):
            doc["utility"] = UtilityConfig(**doc["utility"])
        for key in ("space", "evaluator", "random_search"):
            if doc.get(key) is None:
                doc.pop(key, None)
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "SearchConfig":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh) or {})

    def replace(self, **changes) -> "SearchConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class Problem:
    space: SearchSpace
    raw_cost: CostModel
    cost: CostModel
    evaluator: Any


def _space_from_doc(dims: list[dict]) -> SearchSpace:
    names = tuple(str(d.get("name", f"d{i}")) for i, d in enumerate(dims))
    labels = tuple(tuple(str(c) for c in d["categories"]) for d in dims)
    return SearchSpace(tuple(len(l) for l in labels), names, labels)


def build_problem(cfg: SearchConfig) -> Problem:
    ev = dict(cfg.evaluator)
    kind = ev.pop("kind", "table")
    if kind == "tradeoff":
        space, raw, obj = tradeoff_instance(**ev)
        evaluator = TableEvaluator(obj)
    elif kind == "table":
        dims = cfg.space["dims"]
        space = _space_from_doc(dims)
        raw = CostModel(space, space.pad([d["costs"] for d in dims]))
        losses = ev.get("losses") or [d["losses"] for d in dims]
        couplings = tuple(Coupling(int(c["dims"][0]), int(c["dims"][1]), np.asarray(c["table"], dtype=float))
                          for c in ev.get("couplings", []))
        obj = TableObjective(space, space.pad(losses), couplings, float(ev.get("noise", 0.0)))
        evaluator = TableEvaluator(obj)
    elif kind == "supernet":
        dims = cfg.space["dims"]
        space = _space_from_doc(dims)
        data_keys = ("n_features", "n_classes", "clusters_per_class", "n_train", "n_val", "spread")
        data = SyntheticDataset.generate(stream(cfg.seed, DATA), **{k: ev.pop(k) for k in data_keys if k in ev})
        evaluator = SupernetEvaluator([d["widths"] for d in dims], data, batch_w=cfg.batch_w,
                                      batch_theta=cfg.batch_theta, **ev)
        raw = evaluator.cost_model()
        raw = CostModel(space, raw.costs)
        for d, entry in enumerate(dims):
            if "costs" in entry and not np.array_equal(np.asarray(entry["costs"], float), raw.rows[d]):
                raise ValueError(f"declared costs of {entry.get('name', d)} differ from the parameter counts")
    else:
        raise ValueError(f"unknown evaluator kind {kind!r}")
    cost = normalize_costs(raw) if cfg.normalize_costs else raw
    return Problem(space, raw, cost, evaluator)


@dataclass
class FinalArchitecture:
    component: int
    epsilon: float | None
    arch: Architecture
    labels: list[str]
    complexity: float
    raw_complexity: float
    metrics: dict
    target: float | None = None


@dataclass
class RunRecord:
    method: str
    config: SearchConfig
    space: SearchSpace
    rows: list[tuple] = field(default_factory=list)
    finals: list[FinalArchitecture] = field(default_factory=list)
    final_probs: list[np.ndarray] = field(default_factory=list)
    loss_calls: int = 0
    grad_calls: int = 0
    theta_updates: int = 0
    weight_updates: int = 0
    projections: int = 0
    timings: dict = field(default_factory=dict)

    @property
    def evaluator_calls(self) -> int:
        return self.loss_calls + self.grad_calls


def expected_calls(method: str, has_weights: bool, lam: int, n: int, t_w: int, t_theta: int) -> dict:
    """Closed-form evaluator-call counts of one search (retraining excluded)."""
    w = 1 if has_weights else 0
    if method == "proposed":
        loss, grad = lam * t_theta, w * lam * t_w
    elif method == "method2":
        loss, grad = n * lam * t_theta, w * lam * t_w
    elif method == "method1":
        loss, grad = n * lam * t_theta, w * n * lam * t_theta
    else:
        raise ValueError(method)
    return {"loss": loss, "grad": grad, "total": loss + grad}


def _log_row(t, n, eps, mean_loss, probs, cost):
    dist_entropy = Distribution(cost.space, probs).entropy()
    return (t, n, eps, float(mean_loss), float((cost.costs * probs).sum()), *map(float, dist_entropy))


def _weight_stage(cfg: SearchConfig, problem: Problem, record: RunRecord, index: int = 0):
    ev = problem.evaluator
    if not ev.has_weights:
        return
    uniform = Distribution.uniform(problem.space).probs
    rng = stream(cfg.seed, WEIGHT_STAGE, index)
    for _ in range(cfg.t_w):
        ev.train_step(sample_choices(uniform, problem.space, rng, cfg.lam), rng)
        record.weight_updates += 1


def _finalize(cfg, problem, record, probs_list):
    ev = problem.evaluator
    t0 = time.perf_counter()
    for n, (eps, probs) in enumerate(zip(cfg.epsilons, probs_list)):
        arch = most_probable(Distribution(problem.space, probs))
        metrics = ev.final_metrics(arch, stream(cfg.seed, RETRAIN, n))
        record.finals.append(FinalArchitecture(
            n, eps, arch, arch.labels(problem.space), complexity(problem.cost, arch),
            complexity(problem.raw_cost, arch), metrics))
        record.final_probs.append(np.array(probs))
    record.timings["retrain"] = time.perf_counter() - t0
    record.loss_calls, record.grad_calls = ev.loss_calls, ev.grad_calls


def _ensemble(cfg: SearchConfig, space: SearchSpace) -> Ensemble:
    return Ensemble.uniform(space, cfg.epsilons, eta=cfg.eta, theta_min=cfg.theta_min)


def run_proposed(cfg: SearchConfig, problem: Problem | None = None) -> RunRecord:
    problem = problem or build_problem(cfg)
    ev = problem.evaluator
    record = RunRecord("proposed", cfg, problem.space)
    t0 = time.perf_counter()
    if ev.has_weights:
        ev.reset(stream(cfg.seed, WEIGHT_INIT, 0))
    _weight_stage(cfg, problem, record)
    t1 = time.perf_counter()
    ens = _ensemble(cfg, problem.space)
    rng = stream(cfg.seed, THETA_STAGE, 0)
    for t in range(1, cfg.t_theta + 1):
        choices = sample_mixture_choices(ens, cfg.lam, rng)
        losses = ev.losses(choices, rng)
        ens, report = update_is_report(ens, choices, losses, problem.cost, cfg.utility)
        record.theta_updates += 1
        record.projections += report.projections
        est = report.ratios @ losses / cfg.lam
        for n, probs in enumerate(ens.stacked()):
            record.rows.append(_log_row(t, n, ens.epsilons[n], est[n], probs, problem.cost))
    record.timings.update(weight_stage=t1 - t0, theta_stage=time.perf_counter() - t1)
    _finalize(cfg, problem, record, list(ens.stacked()))
    return record


def _theta_stage_single(cfg, problem, record, n, rng, dist, weight_rng=None):
    """``t_theta`` single-distribution updates; with ``weight_rng`` weights are interleaved."""
    ev = problem.evaluator
    eta = cfg.eta if cfg.eta is not None else default_learning_rate(problem.space)
    theta_min = cfg.theta_min if cfg.theta_min is not None else default_theta_min(problem.space)
    eps = cfg.epsilons[n]
    for t in range(1, cfg.t_theta + 1):
        if weight_rng is not None and ev.has_weights:
            ev.train_step(sample_choices(dist.probs, problem.space, weight_rng, cfg.lam), weight_rng)
            record.weight_updates += 1
        choices = sample_choices(dist.probs, problem.space, rng, cfg.lam)
        losses = ev.losses(choices, rng)
        dist = update_single(dist, choices, losses, problem.cost, eps, eta, cfg.utility, theta_min)
        record.theta_updates += 1
        record.rows.append(_log_row(t, n, eps, losses.mean(), dist.probs, problem.cost))
    return dist


def run_method1(cfg: SearchConfig, problem: Problem | None = None) -> RunRecord:
    problem = problem or build_problem(cfg)
    ev = problem.evaluator
    record = RunRecord("method1", cfg, problem.space)
    t0 = time.perf_counter()
    finals = []
    for n in range(len(cfg.epsilons)):
        if ev.has_weights:
            ev.reset(stream(cfg.seed, WEIGHT_INIT, n))
        dist = _theta_stage_single(cfg, problem, record, n, stream(cfg.seed, THETA_STAGE, n),
                                   Distribution.uniform(problem.space), stream(cfg.seed, WEIGHT_STAGE, n))
        finals.append(dist.probs)
    record.timings["search"] = time.perf_counter() - t0
    _finalize(cfg, problem, record, finals)
    return record


def run_method2(cfg: SearchConfig, problem: Problem | None = None) -> RunRecord:
    problem = problem or build_problem(cfg)
    ev = problem.evaluator
    record = RunRecord("method2", cfg, problem.space)
    t0 = time.perf_counter()
    if ev.has_weights:
        ev.reset(stream(cfg.seed, WEIGHT_INIT, 0))
    _weight_stage(cfg, problem, record)
    t1 = time.perf_counter()
    finals = []
    for n in range(len(cfg.epsilons)):
        dist = _theta_stage_single(cfg, problem, record, n, stream(cfg.seed, THETA_STAGE, n),
                                   Distribution.uniform(problem.space))
        finals.append(dist.probs)
    record.timings.update(weight_stage=t1 - t0, theta_stage=time.perf_counter() - t1)
    _finalize(cfg, problem, record, finals)
    return record


def run_random_search(cfg: SearchConfig, targets=None, problem: Problem | None = None) -> RunRecord:
    """Best of ``budget`` uniform draws inside each complexity band ``target * (1 +- band)``."""
    problem = problem or build_problem(cfg)
    ev = problem.evaluator
    rs = dict(cfg.random_search)
    targets = list(targets if targets is not None else rs.get("targets", []))
    if not targets:
        raise ValueError("random search needs at least one complexity target")
    band = float(rs.get("band", 0.05))
    budget = int(rs.get("budget", 10))
    max_draws = int(rs.get("max_draws", 1000 * budget))
    record = RunRecord("random", cfg, problem.space)
    uniform = Distribution.uniform(problem.space).probs
    t0 = time.perf_counter()
    for j, target in enumerate(targets):
        rng = stream(cfg.seed, RANDOM, j)
        found = []
        for _ in range(max_draws):
            choice = sample_choices(uniform, problem.space, rng, 1)
            if abs(complexities(problem.cost, choice)[0] - target) <= band * abs(target):
                found.append(choice[0])
                if len(found) == budget:
                    break
        if not found:
            raise ValueError(f"no architecture found within {band:.0%} of complexity {target}")
        best, best_score, best_metrics = None, np.inf, None
        for choice in found:
            arch = Architecture(tuple(choice))
            if ev.has_weights:
                metrics = ev.final_metrics(arch, stream(cfg.seed, RETRAIN, j))
                ev.loss_calls += 1
                score = metrics["val_loss"]
            else:
                score = float(ev.losses(choice[None, :], rng)[0])
                metrics = None
            if score < best_score:
                best, best_score, best_metrics = arch, score, metrics
        if best_metrics is None:
            best_metrics = ev.final_metrics(best, stream(cfg.seed, RETRAIN, j))
        record.finals.append(FinalArchitecture(
            j, None, best, best.labels(problem.space), complexity(problem.cost, best),
            complexity(problem.raw_cost, best), best_metrics, float(target)))
    record.timings["search"] = time.perf_counter() - t0
    record.loss_calls, record.grad_calls = ev.loss_calls, ev.grad_calls
    return record


def run(cfg: SearchConfig) -> RunRecord:
    if cfg.method == "proposed":
        return run_proposed(cfg)
    if cfg.method == "method1":
        return run_method1(cfg)
    if cfg.method == "method2":
        return run_method2(cfg)
    return run_random_search(cfg)


# ---------------------------------------------------------------------------
# result files

TRAJECTORY = "trajectory.csv"
FINALS = "finals.yaml"
MANIFEST = "manifest.yaml"
TIMINGS = "timings.yaml"


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def trajectory_header(space: SearchSpace) -> list[str]:
    return ["iter", "component", "epsilon", "mean_loss", "expected_complexity"] + [
        f"entropy_d{d + 1}" for d in range(space.dims)]


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


def finals_document(record: RunRecord) -> dict:
    out = []
    for f in record.finals:
        out.append({
            "component": f.component,
            "epsilon": f.epsilon,
            "target": f.target,
            "choices": list(f.arch.choices),
            "labels": dict(zip(record.space.names, f.labels)),
            "complexity": f.complexity,
            "raw_complexity": f.raw_complexity,
            "metrics": f.metrics,
        })
    return _plain({"method": record.method, "architectures": out})


def manifest_document(record: RunRecord) -> dict:
    cfg = record.config
    seeds = {name: {"entropy": cfg.seed, "spawn_key": [stage, "component"]} for stage, name in STAGE_NAMES.items()}
    return _plain({
        "version": __version__,
        "method": record.method,
        "config": cfg.to_dict(),
        "seeds": seeds,
        "eta": cfg.eta if cfg.eta is not None else default_learning_rate(record.space),
        "theta_min": cfg.theta_min if cfg.theta_min is not None else default_theta_min(record.space),
        "evaluator_calls": {"loss": record.loss_calls, "grad": record.grad_calls},
    })


def emit_results(record: RunRecord, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"trajectory": out / TRAJECTORY, "finals": out / FINALS,
             "manifest": out / MANIFEST, "timings": out / TIMINGS}
    with open(paths["trajectory"], "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(trajectory_header(record.space))
        for row in record.rows:
            writer.writerow([_fmt(x) for x in row])
    for key, doc in (("finals", finals_document(record)), ("manifest", manifest_document(record)),
                     ("timings", _plain(record.timings))):
        with open(paths[key], "w") as fh:
            yaml.safe_dump(doc, fh, sort_keys=True)
    return paths


def load_finals(path, space: SearchSpace) -> list[Architecture]:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    archs = []
    for entry in doc["architectures"]:
        labels = entry["labels"]
        choices = [space.labels[d].index(str(labels[name])) for d, name in enumerate(space.names)]
        archs.append(Architecture(tuple(choices)).validate(space))
    return archs


def replay(manifest_path, out_dir) -> tuple[bool, RunRecord]:
    """Re-run from a manifest; True when trajectory and finals are byte-identical."""
    manifest_path = Path(manifest_path)
    with open(manifest_path) as fh:
        manifest = yaml.safe_load(fh)
    cfg = SearchConfig.from_dict(manifest["config"])
    record = run(cfg)
    paths = emit_results(record, out_dir)
    same = True
    for name in (TRAJECTORY, FINALS):
        original = manifest_path.parent / name
        if original.exists() and original.read_bytes() != paths[name.split(".")[0]].read_bytes():
            log.warning("%s differs from %s", paths[name.split(".")[0]], original)
            same = False
    return same, record
