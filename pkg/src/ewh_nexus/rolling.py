"""Rolling-horizon operation, training-data harvesting and result reports."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable, Mapping, Sequence

import numpy as np

from .acivp import Predictor, featurize, solve_with_acivp
from .assembly import assemble
from .bnb import solve_micp
from .hydrogen import h2_name
from .model import Network, Scenario, ScenarioError, SystemState, wind_to_power
from .power import soc_exactness
from .power import var_name as pwr
from .program import ConicProgram
from .solver import OPTIMAL, Solution, SolverConfig
from .water import tank_step
from .water import var_name as wat

log = logging.getLogger(__name__)

MODES = ("full", "acivp")


@dataclass(frozen=True)
class RollingConfig:
    step_minutes: int = 5
    horizon_steps: int = 24
    mode: str = "full"
    steps: int | None = None  # rolling steps to execute; default covers the realized series
    wind_noise: float = 0.5  # m/s standard deviation one step ahead, growing with sqrt(lead)
    seed: int = 0
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(node_limit=5000))
    k: int | None = None
    repair_rounds: int = 0

    def __post_init__(self) -> None:
        if self.horizon_steps < 1:
            raise ValueError("horizon_steps must be at least 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.wind_noise < 0:
            raise ValueError("wind_noise must be nonnegative")


@dataclass
class DispatchResult:
    step: int
    time_min: float
    mode: str
    status: str
    objective: float
    solve_time_s: float
    fallback: bool
    infeasible: bool
    nodes: int
    p_dg: float
    p_we: float
    h_fc: float
    p_tr: float
    pump_on: dict[str, int]
    pump_flow: dict[str, float]
    desal_segment: dict[str, int]
    desal_flow: dict[str, float]
    tank_flow: dict[str, float]
    tank_volume: dict[str, float]
    h2_storage: float
    soc_max_gap: float
    soc_mean_gap: float


def forecast(realized: Scenario, start: int, horizon: int, noise: float, rng: np.random.Generator) -> Scenario:
    """Window of the realized series with a persistence-plus-noise wind forecast.

    The first interval carries the realized wind; later intervals repeat it with
    zero-mean noise whose spread grows with the square root of the lead time.
    """
    window = realized.window(start, horizon)
    now = float(window.wind_speed[0])
    lead = np.arange(horizon, dtype=float)
    eps = rng.standard_normal(horizon) * noise * np.sqrt(lead)
    wind = np.maximum(now + eps, 0.0)
    wind[0] = now
    return window.with_wind(wind)


def _applied(net: Network, prog: ConicProgram, sol: Solution, state: SystemState, window: Scenario,
             step: int, time_min: float, mode: str, fallback: bool) -> tuple[DispatchResult, SystemState]:
    x = sol.x
    dt = window.dt_hours
    val = lambda name: prog.value(x, name)  # noqa: E731
    pumps = {p.id: int(round(val(wat("bp", p.id, 0)))) for p in net.pumps}
    segs = {}
    for d in net.desalination:
        on = [mu for mu in range(1, 5) if round(val(wat("bdes", f"{d.id}:{mu}", 0))) == 1]
        segs[d.id] = on[0] if on else 0
    tank_flow = {tk.node: val(wat("fwt", tk.node, 0)) for tk in net.tanks}
    volumes = {}
    for tk in net.tanks:
        v0 = state.tank_volume.get(tk.node, tk.v_init)
        # clamp solver-tolerance drift so the next window sees a valid state
        volumes[tk.node] = min(max(tank_step(v0, tank_flow[tk.node], dt), tk.v_min), tk.v_max)
    h2 = math.nan
    p_we = h_fc = 0.0
    if net.hydrogen is not None:
        p_we, h_fc = val(h2_name("pwe", 0)), val(h2_name("hfc", 0))
        draw = val(h2_name("hchi", 0)) if net.carbon is not None else 0.0
        s0 = state.h2_storage if state.h2_storage is not None else net.hydrogen.storage_init
        h2 = s0 + dt * (val(h2_name("hwe", 0)) - h_fc - draw - float(window.h2_demand[0]))
        h2 = min(max(h2, net.hydrogen.storage_min), net.hydrogen.storage_max)
    gap = soc_exactness(sol, net, prog)
    rec = DispatchResult(
        step=step, time_min=time_min, mode=mode, status=sol.status, objective=sol.objective,
        solve_time_s=sol.solve_time, fallback=fallback, infeasible=False, nodes=sol.nodes,
        p_dg=sum(val(pwr("pdg", g.id, 0)) for g in net.diesel),
        p_we=p_we, h_fc=h_fc, p_tr=val("pwr/ptr/sys/0"),
        pump_on=pumps, pump_flow={p.id: val(wat("f", p.id, 0)) for p in net.pumps},
        desal_segment=segs, desal_flow={d.id: val(wat("fdes", d.id, 0)) for d in net.desalination},
        tank_flow=tank_flow, tank_volume=volumes, h2_storage=h2,
        soc_max_gap=float(gap.gaps[:, 0].max(initial=0.0)),
        soc_mean_gap=float(gap.gaps[:, 0].mean()) if gap.gaps.size else 0.0,
    )
    return rec, SystemState(volumes, None if net.hydrogen is None else h2)


def fallback_dispatch(net: Network, scenario: Scenario, state: SystemState, step: int, time_min: float,
                      mode: str) -> tuple[DispatchResult, SystemState]:
    """Diesel covers the net load at maximum capture with the hydrogen plant idle."""
    dt = scenario.dt_hours
    load = sum(float(v[0]) for v in scenario.p_load.values())
    wind = sum(float(wind_to_power(scenario.wind_speed[0], w)) for w in net.wind)
    need = max(load - wind, 0.0)
    p_dg = 0.0
    for g in net.diesel:
        share = min(max(need, g.p_min), g.p_max)
        p_dg += share
        need -= share
    a1, a2, a3, a4 = net.weights.as_tuple()
    obj = a2 * p_dg + a1 * max(wind - load, 0.0)
    if net.carbon is not None:
        emitted = sum(g.carbon_factor for g in net.diesel) / max(len(net.diesel), 1) * p_dg
        stored = min(net.carbon.capture_ratio_max * emitted, net.carbon.storage_cap)
        obj += a3 * (emitted - stored) + a4 * stored
    h2 = state.h2_storage
    if net.hydrogen is not None:
        s0 = h2 if h2 is not None else net.hydrogen.storage_init
        h2 = max(s0 - dt * float(scenario.h2_demand[0]), net.hydrogen.storage_min)
    rec = DispatchResult(
        step=step, time_min=time_min, mode=mode, status="infeasible", objective=dt * obj, solve_time_s=0.0,
        fallback=True, infeasible=True, nodes=0, p_dg=p_dg, p_we=0.0, h_fc=0.0, p_tr=max(wind - load, 0.0),
        pump_on={p.id: 0 for p in net.pumps}, pump_flow={p.id: 0.0 for p in net.pumps},
        desal_segment={d.id: 0 for d in net.desalination}, desal_flow={d.id: 0.0 for d in net.desalination},
        tank_flow={tk.node: 0.0 for tk in net.tanks}, tank_volume=dict(state.tank_volume),
        h2_storage=math.nan if h2 is None else h2, soc_max_gap=0.0, soc_mean_gap=0.0,
    )
    return rec, SystemState(dict(state.tank_volume), h2)


def run_rolling(net: Network, realized: Scenario, cfg: RollingConfig,
                predictor: Predictor | None = None, state: SystemState | None = None) -> list[DispatchResult]:
    """Re-solve every step over a fixed lookahead, apply the first interval, advance storage."""
    if (cfg.mode == "acivp") != (predictor is not None):
        raise ValueError("a predictor is required exactly when mode is 'acivp'")
    if realized.step_minutes != cfg.step_minutes:
        raise ScenarioError(f"scenario step {realized.step_minutes} min differs from config {cfg.step_minutes} min")
    rng = np.random.default_rng(cfg.seed)
    state = state or SystemState.initial(net)
    steps = realized.horizon_steps if cfg.steps is None else cfg.steps
    out: list[DispatchResult] = []
    for s in range(steps):
        window = forecast(realized, s, cfg.horizon_steps, cfg.wind_noise, rng)
        prog = assemble(net, window, state=state)
        if cfg.mode == "full":
            sol = solve_micp(prog, cfg.solver)
            fell_back = False
        else:
            sol, diag = solve_with_acivp(prog, predictor, featurize(window), cfg.solver, cfg.k, cfg.repair_rounds)
            fell_back = diag.fallback
        t_min = float(s * cfg.step_minutes)
        if sol.x is None:
            log.warning("step %d: %s, applying diesel fallback dispatch", s, sol.status)
            rec, state = fallback_dispatch(net, window, state, s, t_min, cfg.mode)
        else:
            rec, state = _applied(net, prog, sol, state, window, s, t_min, cfg.mode, fell_back)
        out.append(rec)
    return out


# ------------------------------------------------------------ training data

@dataclass(frozen=True)
class Perturbation:
    sigma: float = 0.1  # lognormal multiplier spread per series
    warp: int = 1  # maximal time shift per series, in steps

    @classmethod
    def of(cls, value: Perturbation | float) -> Perturbation:
        if isinstance(value, Perturbation):
            return value
        return cls(float(value), 1 if value > 0 else 0)


@dataclass
class TrainingSample:
    scenario: Scenario
    program: ConicProgram
    solution: Solution

    def __iter__(self):
        return iter((self.scenario, self.program, self.solution))


@dataclass
class TrainingData:
    samples: list[TrainingSample]
    dropped: int


def draw_scenario(history: Sequence[Scenario], horizon: int, pert: Perturbation,
                  rng: np.random.Generator) -> Scenario:
    """One perturbed window from the historical curves."""
    day = history[int(rng.integers(len(history)))]
    start = int(rng.integers(day.horizon_steps)) if day.horizon_steps > horizon else 0

    def series(values: np.ndarray) -> np.ndarray:
        shift = int(rng.integers(-pert.warp, pert.warp + 1)) if pert.warp else 0
        idx = (start + shift + np.arange(horizon)) % day.horizon_steps
        mult = float(np.exp(pert.sigma * rng.standard_normal())) if pert.sigma else 1.0
        return np.asarray(values, float)[idx] * mult

    wind = series(day.wind_speed)
    p_load, q_load = {}, {}
    for k in day.p_load:
        p_load[k] = series(day.p_load[k])
    for k in day.q_load:
        q_load[k] = series(day.q_load[k])
    wdem = {k: series(v) for k, v in day.water_demand.items()}
    h2 = series(day.h2_demand)
    return Scenario(day.step_minutes, horizon, wind, p_load, q_load, wdem, h2)


def generate_training_data(
    net: Network,
    history: Sequence[Scenario],
    n_samples: int,
    perturbation: Perturbation | float = 0.1,
    seed: int = 0,
    horizon: int = 24,
    cfg: SolverConfig | None = None,
    progress=None,
) -> TrainingData:
    """Draw perturbed scenarios, solve each with full branch-and-bound, keep the optimal ones."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    if not history:
        raise ValueError("no historical curves given")
    cfg = cfg or SolverConfig()
    pert = Perturbation.of(perturbation)
    rng = np.random.default_rng(seed)
    samples, dropped = [], 0
    for i in range(n_samples):
        scen = draw_scenario(history, horizon, pert, rng)
        prog = assemble(net, scen)
        sol = solve_micp(prog, cfg)
        if sol.status == OPTIMAL:
            samples.append(TrainingSample(scen, prog, sol))
        else:
            dropped += 1
            log.info("sample %d dropped: %s", i, sol.status)
        if progress is not None:
            progress(i, sol)
    return TrainingData(samples, dropped)


# ------------------------------------------------------------------ reports

_TIMING_FIELDS = ("solve_time_s",)


def _flatten(rec: DispatchResult, timing: bool) -> dict[str, object]:
    row: dict[str, object] = {}
    for f in fields(rec):
        if f.name in _TIMING_FIELDS and not timing:
            continue
        v = getattr(rec, f.name)
        if isinstance(v, dict):
            for k in sorted(v):
                row[f"{f.name}_{k}"] = v[k]
        else:
            row[f.name] = v
    return row


def _fmt(v: object) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return format(v, ".10g")
    return str(v)


def report(results: Sequence[DispatchResult], fmt: str = "csv", timing: bool = True) -> str:
    """Render results as CSV (one row per step) or as a solve-time summary."""
    if not results:
        raise ValueError("no results to report")
    if fmt == "csv":
        rows = [_flatten(r, timing) for r in results]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(v) for k, v in row.items()})
        return buf.getvalue()
    if fmt == "summary":
        return summarize({m: [r.solve_time_s for r in results if r.mode == m] for m in MODES},
                         {m: sum(r.fallback for r in results if r.mode == m) for m in MODES},
                         {m: sum(r.objective for r in results if r.mode == m) for m in MODES})
    raise ValueError(f"unknown report format '{fmt}'")


def summarize(times: Mapping[str, Sequence[float]], fallbacks: Mapping[str, int] | None = None,
              objectives: Mapping[str, float] | None = None) -> str:
    lines = []
    med = {}
    for mode, ts in times.items():
        if not len(ts):
            continue
        a = np.asarray(ts, float)
        med[mode] = float(np.median(a))
        line = (f"{mode}: steps={a.size} median={med[mode]:.4f}s p90={np.percentile(a, 90):.4f}s "
                f"p99={np.percentile(a, 99):.4f}s max={a.max():.4f}s")
        if fallbacks is not None:
            line += f" fallbacks={fallbacks.get(mode, 0)}"
        if objectives is not None:
            line += f" total_objective={objectives.get(mode, 0.0):.6g}"
        lines.append(line)
    if "full" in med and "acivp" in med and med["acivp"] > 0:
        lines.append(f"speedup={med['full'] / med['acivp']:.2f}")
    return "\n".join(lines) + "\n"


def read_results_csv(text: str) -> list[dict[str, str]]:
    return list(csv.DictReader(io.StringIO(text)))


def results_from_rows(rows: Iterable[Mapping[str, str]]) -> tuple[dict[str, list[float]], dict[str, int],
                                                                   dict[str, float]]:
    """Timing, fallback and objective aggregates from report rows."""
    times: dict[str, list[float]] = {}
    falls: dict[str, int] = {}
    objs: dict[str, float] = {}
    for row in rows:
        m = row["mode"]
        if "solve_time_s" in row:
            times.setdefault(m, []).append(float(row["solve_time_s"]))
        falls[m] = falls.get(m, 0) + int(row["fallback"])
        objs[m] = objs.get(m, 0.0) + float(row["objective"])
    return times, falls, objs


def to_dict(rec: DispatchResult) -> dict:
    return asdict(rec)
