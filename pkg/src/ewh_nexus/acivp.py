"""Strategy prediction for fast repeated solves.

A strategy is the optimal binary assignment of an instance plus the set of
inequality rows that must be kept for the restricted continuous program to
reproduce it.  Strategies harvested from solved instances are indexed by a
k-nearest-neighbour lookup over forecast features; at query time each
candidate is tried in rank order, its surrogate solution is checked against
every original constraint, and the full branch-and-bound runs if none passes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .bnb import solve_micp
from .model import Scenario
from .program import ConicProgram, restrict
from .solver import OPTIMAL, Solution, SolverConfig, get_active_set, solve_continuous

STORE_FORMAT = "ewh-nexus-strategy-store"
STORE_VERSION = 1


class StrategyError(ValueError):
    pass


@dataclass(frozen=True)
class Strategy:
    binaries: Mapping[str, int]
    active_set: frozenset[str]

    @cached_property
    def fingerprint(self) -> str:
        doc = json.dumps([sorted(self.binaries.items()), sorted(self.active_set)], separators=(",", ":"))
        return hashlib.sha256(doc.encode()).hexdigest()[:24]

    def to_dict(self) -> dict:
        return {"binaries": dict(sorted(self.binaries.items())), "active_set": sorted(self.active_set)}

    @classmethod
    def from_dict(cls, doc: Mapping) -> Strategy:
        return cls({k: int(v) for k, v in doc["binaries"].items()}, frozenset(doc["active_set"]))


def featurize(scenario: Scenario) -> np.ndarray:
    """Wind, total active load, total water demand and hydrogen demand, concatenated."""
    T = scenario.horizon_steps
    p_total = np.sum([np.asarray(v, float) for v in scenario.p_load.values()], axis=0) if scenario.p_load \
        else np.zeros(T)
    w_total = np.sum([np.asarray(v, float) for v in scenario.water_demand.values()], axis=0) \
        if scenario.water_demand else np.zeros(T)
    return np.concatenate([np.asarray(scenario.wind_speed, float), p_total, w_total,
                           np.asarray(scenario.h2_demand, float)])


def extract_strategy(prog: ConicProgram, sol: Solution, tol: float = 1e-6, int_tol: float = 1e-5) -> Strategy:
    """Read the binary assignment and active inequality set off an optimal solution."""
    if sol.status != OPTIMAL or sol.x is None:
        raise StrategyError(f"cannot extract a strategy from a {sol.status} solution")
    bins = prog.binary_indices
    vals = sol.x[bins]
    rounded = np.round(vals)
    bad = np.abs(vals - rounded) > int_tol
    if np.any(bad):
        name = prog.names[int(bins[np.argmax(bad)])]
        raise StrategyError(f"binary '{name}' is not integral in the solution")
    binaries = {prog.names[i]: int(v) for i, v in zip(bins, rounded)}
    return Strategy(binaries, frozenset(get_active_set(sol, prog, tol)))


@dataclass
class SurrogateResult:
    solution: Solution | None
    x: np.ndarray | None
    active_set: frozenset[str]
    rounds: int
    solves: int
    violations: list[str] = field(default_factory=list)
    size: dict = field(default_factory=dict)


def solve_surrogate(
    prog: ConicProgram, strategy: Strategy, cfg: SolverConfig, repair_rounds: int = 0
) -> SurrogateResult:
    """Solve the restricted program and verify against the full constraint set.

    Each repair round adds the rows the previous surrogate solution violated
    and solves again.  ``x`` is set only when the solution passes the check.
    """
    active = set(strategy.active_set)
    rounds = solves = 0
    size: dict = {}
    while True:
        sur = restrict(prog, strategy.binaries, active)
        size = sur.summary()
        sol = solve_continuous(sur, cfg)
        solves += 1
        if sol.status != OPTIMAL:
            return SurrogateResult(sol, None, frozenset(active), rounds, solves, [], size)
        x = sur.lift(sol.x)
        bad = prog.violations(x, cfg.feasibility_tol)
        if not bad:
            return SurrogateResult(sol, x, frozenset(active), rounds, solves, [], size)
        rows = {t for t in bad if not t.startswith("bound:")}
        if rounds >= repair_rounds or not rows or rows <= active:
            return SurrogateResult(sol, None, frozenset(active), rounds, solves, sorted(bad), size)
        active |= rows
        rounds += 1


def complete_strategy(prog: ConicProgram, strategy: Strategy, cfg: SolverConfig | None = None,
                      max_rounds: int = 25) -> Strategy:
    """Grow the active set until its surrogate solution is feasible for ``prog``.

    Degenerate optima leave many rows with slack that are nevertheless needed;
    without them the surrogate optimum drifts outside the feasible set.
    """
    cfg = cfg or SolverConfig()
    res = solve_surrogate(prog, strategy, cfg, repair_rounds=max_rounds)
    if res.x is None:
        raise StrategyError(f"surrogate for strategy {strategy.fingerprint} could not be verified")
    return Strategy(strategy.binaries, res.active_set)


@dataclass
class TrainingSet:
    features: np.ndarray
    strategy_ids: list[str]
    strategies: dict[str, Strategy]

    def __post_init__(self) -> None:
        self.features = np.atleast_2d(np.asarray(self.features, float))
        if len(self.features) != len(self.strategy_ids):
            raise StrategyError("feature rows and strategy ids differ in length")
        missing = set(self.strategy_ids) - set(self.strategies)
        if missing:
            raise StrategyError(f"unknown strategy id '{sorted(missing)[0]}'")

    @property
    def n_records(self) -> int:
        return len(self.strategy_ids)

    def normalization(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-dimension z-score statistics; constant dimensions pass through unscaled."""
        mean = self.features.mean(axis=0)
        scale = self.features.std(axis=0)
        flat = scale <= 1e-12
        mean[flat] = 0.0
        scale[flat] = 1.0
        return mean, scale


@dataclass(frozen=True)
class Predictor:
    X: np.ndarray
    strategy_ids: tuple[str, ...]
    strategies: Mapping[str, Strategy]
    mean: np.ndarray
    scale: np.ndarray
    k: int = 5

    def __post_init__(self) -> None:
        if self.k < 1:
            raise StrategyError("k must be at least 1")

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def normalize(self, features: np.ndarray) -> np.ndarray:
        f = np.asarray(features, float)
        if f.shape != (self.dim,):
            raise StrategyError(f"feature length {f.size} does not match training dimension {self.dim}")
        return (f - self.mean) / self.scale


def fit(ts: TrainingSet, k: int = 5) -> Predictor:
    if ts.n_records == 0:
        raise StrategyError("empty training set")
    mean, scale = ts.normalization()
    X = (ts.features - mean) / scale
    X.setflags(write=False)
    return Predictor(X, tuple(ts.strategy_ids), dict(ts.strategies), mean, scale, k)


def build_training_set(samples: Iterable, cfg: SolverConfig | None = None, complete: bool = True) -> TrainingSet:
    """Samples are ``(scenario, program, solution)`` triples of solved instances."""
    cfg = cfg or SolverConfig()
    rows, ids, store = [], [], {}
    dim = None
    for scenario, prog, sol in samples:
        phi = featurize(scenario)
        if dim is not None and phi.size != dim:
            raise StrategyError(f"inconsistent feature dimension {phi.size} vs {dim}")
        dim = phi.size
        strat = extract_strategy(prog, sol, cfg.active_tol, cfg.int_tol)
        if complete:
            strat = complete_strategy(prog, strat, cfg)
        store.setdefault(strat.fingerprint, strat)
        rows.append(phi)
        ids.append(strat.fingerprint)
    if not rows:
        raise StrategyError("no samples to train on")
    return TrainingSet(np.array(rows), ids, store)


def merge_by_binaries(ts: TrainingSet) -> TrainingSet:
    """One strategy per binary assignment, keeping the union of its active sets.

    A surrogate with extra original rows is still a relaxation of the program
    with those binaries fixed, so a verified solution stays optimal for them;
    the union only makes verification succeed on more instances.
    """
    union: dict[tuple, frozenset[str]] = {}
    for strat in ts.strategies.values():
        key = tuple(sorted(strat.binaries.items()))
        union[key] = union.get(key, frozenset()) | strat.active_set
    merged = {key: Strategy(dict(key), rows) for key, rows in union.items()}
    remap = {sid: merged[tuple(sorted(s.binaries.items()))] for sid, s in ts.strategies.items()}
    ids = [remap[sid].fingerprint for sid in ts.strategy_ids]
    return TrainingSet(ts.features.copy(), ids, {m.fingerprint: m for m in merged.values()})


def train(samples: Sequence, k: int = 5, cfg: SolverConfig | None = None,
          complete: bool = True, merge: bool = False) -> tuple[Predictor, TrainingSet]:
    ts = build_training_set(samples, cfg, complete)
    if merge:
        ts = merge_by_binaries(ts)
    return fit(ts, k), ts


def predict(predictor: Predictor, features: np.ndarray, k: int | None = None) -> list[Strategy]:
    """Distinct strategies of the ``k`` nearest training points, nearest first."""
    if len(predictor.strategy_ids) == 0:
        raise StrategyError("empty predictor")
    k = predictor.k if k is None else k
    q = predictor.normalize(features)
    dist = np.sqrt(np.sum((predictor.X - q) ** 2, axis=1))
    order = np.argsort(dist, kind="stable")[:k]
    seen: dict[str, Strategy] = {}
    for i in order:
        sid = predictor.strategy_ids[int(i)]
        if sid not in seen:
            seen[sid] = predictor.strategies[sid]
    return list(seen.values())


@dataclass
class AcivpDiagnostics:
    fallback: bool
    candidate: int | None
    candidates_tried: int
    fingerprint: str | None
    repair_rounds: int
    surrogate_solves: int
    surrogate_size: dict
    predict_time: float
    solve_time: float


def solve_with_acivp(
    prog: ConicProgram,
    predictor: Predictor,
    features: np.ndarray,
    cfg: SolverConfig | None = None,
    k: int | None = None,
    repair_rounds: int = 0,
) -> tuple[Solution, AcivpDiagnostics]:
    """Try predicted strategies in rank order; fall back to full branch-and-bound."""
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    candidates = predict(predictor, features, k)
    t_pred = time.perf_counter() - t0
    names = {prog.names[i] for i in prog.binary_indices}
    tags = set(prog.inequality_tags)
    solves = rounds = 0
    for rank, strat in enumerate(candidates):
        if set(strat.binaries) != names or not strat.active_set <= tags:
            continue
        res = solve_surrogate(prog, strat, cfg, repair_rounds)
        solves += res.solves
        rounds += res.rounds
        if res.x is None:
            continue
        x = res.x
        sol = Solution(
            OPTIMAL, x, prog.objective(x),
            row_slack=prog.row_slack(x), cone_slack=prog.cone_slack(x),
            solve_time=time.perf_counter() - t0, iterations=res.solution.iterations,
            binaries=dict(strat.binaries),
        )
        sol.bound = sol.objective
        diag = AcivpDiagnostics(False, rank, rank + 1, strat.fingerprint, rounds, solves, res.size,
                                t_pred, sol.solve_time)
        return sol, diag
    sol = solve_micp(prog, cfg)
    sol.solve_time = time.perf_counter() - t0
    diag = AcivpDiagnostics(True, None, len(candidates), None, rounds, solves, {}, t_pred, sol.solve_time)
    return sol, diag


# ---------------------------------------------------------------- file formats

def save_predictor(predictor: Predictor, path: str | Path) -> None:
    """Strategy store: versioned JSON with normalization statistics and features."""
    used = sorted(set(predictor.strategy_ids))
    doc = {
        "format": STORE_FORMAT,
        "version": STORE_VERSION,
        "k": predictor.k,
        "mean": predictor.mean.tolist(),
        "scale": predictor.scale.tolist(),
        "strategies": {sid: predictor.strategies[sid].to_dict() for sid in used},
        "records": [{"strategy": sid, "features": (row * predictor.scale + predictor.mean).tolist()}
                    for sid, row in zip(predictor.strategy_ids, predictor.X)],
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def load_predictor(path: str | Path) -> Predictor:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != STORE_FORMAT:
        raise StrategyError(f"{path}: not a strategy store")
    if doc.get("version") != STORE_VERSION:
        raise StrategyError(f"{path}: unsupported store version {doc.get('version')}")
    strategies = {sid: Strategy.from_dict(s) for sid, s in doc["strategies"].items()}
    for sid, s in strategies.items():
        if s.fingerprint != sid:
            raise StrategyError(f"{path}: strategy {sid} fails its fingerprint check")
    mean = np.array(doc["mean"], float)
    scale = np.array(doc["scale"], float)
    raw = np.array([r["features"] for r in doc["records"]], float)
    ids = tuple(r["strategy"] for r in doc["records"])
    missing = set(ids) - set(strategies)
    if missing:
        raise StrategyError(f"{path}: unknown strategy id '{sorted(missing)[0]}'")
    X = (raw - mean) / scale
    X.setflags(write=False)
    return Predictor(X, ids, strategies, mean, scale, int(doc["k"]))


def save_training_set(ts: TrainingSet, directory: str | Path) -> None:
    """``training.csv`` (features + strategy column) and ``strategies.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    dim = ts.features.shape[1]
    with open(directory / "training.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"phi_{j}" for j in range(dim)] + ["strategy"])
        for row, sid in zip(ts.features, ts.strategy_ids):
            w.writerow([repr(float(v)) for v in row] + [sid])
    doc = {"format": STORE_FORMAT, "version": STORE_VERSION,
           "strategies": {sid: s.to_dict() for sid, s in sorted(ts.strategies.items())}}
    (directory / "strategies.json").write_text(json.dumps(doc, indent=1, sort_keys=True))


def load_training_set(directory: str | Path) -> TrainingSet:
    directory = Path(directory)
    doc = json.loads((directory / "strategies.json").read_text())
    if doc.get("format") != STORE_FORMAT or doc.get("version") != STORE_VERSION:
        raise StrategyError(f"{directory}: unsupported strategy file")
    strategies = {sid: Strategy.from_dict(s) for sid, s in doc["strategies"].items()}
    rows, ids = [], []
    with open(directory / "training.csv", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != "strategy":
            raise StrategyError(f"{directory}/training.csv: missing strategy column")
        for rec in reader:
            if len(rec) != len(header):
                raise StrategyError(f"{directory}/training.csv: ragged row")
            rows.append([float(v) for v in rec[:-1]])
            ids.append(rec[-1])
    return TrainingSet(np.array(rows).reshape(len(rows), len(header) - 1), ids, strategies)
