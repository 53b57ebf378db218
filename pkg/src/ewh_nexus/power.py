"""DistFlow branch-flow block with the rotated-cone relaxation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Network, Scenario, ScenarioError, wind_to_power
from .program import ProgramBuilder, esum
from .solver import Solution

W_PER_MVA = 1e6


def var_name(kind: str, asset: str, t: int) -> str:
    return f"pwr/{kind}/{asset}/{t}"


def declare_power_variables(b: ProgramBuilder, net: Network, scenario: Scenario) -> None:
    for t in range(scenario.horizon_steps):
        for br in net.branches:
            b.var(var_name("p", br.id, t), -br.s_max, br.s_max)
            b.var(var_name("q", br.id, t), -br.s_max, br.s_max)
            b.var(var_name("i", br.id, t), br.i_min, br.i_max)
        for bus in net.buses:
            b.var(var_name("v", bus.id, t), bus.v_min, bus.v_max)
        for g in net.diesel:
            b.var(var_name("pdg", g.id, t), g.p_min, g.p_max)
            b.var(var_name("qdg", g.id, t), g.q_min, g.q_max)
        for w in net.wind:
            avail = float(wind_to_power(scenario.wind_speed[t], w))
            b.var(var_name("pwind", w.id, t), avail, avail)
            b.var(var_name("psw", w.id, t), 0.0, math.inf)
            b.var(var_name("qsw", w.id, t), -w.q_max, w.q_max)
        b.var(var_name("ptr", "sys", t), 0.0, math.inf)


def _injections(b: ProgramBuilder, net: Network, bus_id: str, t: int):
    """Controllable active/reactive injections and device loads at one bus."""
    p, q = [], []
    for g in net.diesel:
        if g.bus == bus_id:
            p.append(b[var_name("pdg", g.id, t)])
            q.append(b[var_name("qdg", g.id, t)])
    for w in net.wind:
        if w.bus == bus_id:
            p.append(b[var_name("psw", w.id, t)])
            q.append(b[var_name("qsw", w.id, t)])
    h = net.hydrogen
    if h is not None and h.bus == bus_id:
        p.append(b[f"h2/phs/sys/{t}"])
        q.append(b[f"h2/qhs/sys/{t}"])
    for pipe in net.pumps:
        if pipe.pump.power_bus == bus_id:
            p.append(-1.0 / (net.base_mva * W_PER_MVA) * b[f"wat/ppump/{pipe.id}/{t}"])
    for d in net.desalination:
        if d.power_bus == bus_id:
            p.append(-1.0 * b[f"wat/pdes/{d.id}/{t}"])
    return esum(p), esum(q)


def build_power_constraints(b: ProgramBuilder, net: Network, scenario: Scenario) -> list[str]:
    """Balance, voltage drop, branch cones, V-I coupling, thermal limits and wind split.

    Returns the emitted constraint tags.
    """
    tags: list[str] = []
    for bus in net.buses:
        if bus.p_key not in scenario.p_load or bus.q_key not in scenario.q_load:
            raise ScenarioError(f"missing load series for bus {bus.id}")
    children = {bus.id: [br for br in net.branches if br.from_bus == bus.id] for bus in net.buses}
    parent = {br.to_bus: br for br in net.branches}
    for t in range(scenario.horizon_steps):
        for bus in net.buses:
            p_inj, q_inj = _injections(b, net, bus.id, t)
            p_load = float(scenario.p_load[bus.p_key][t])
            q_load = float(scenario.q_load[bus.q_key][t])
            out_p = esum(b[var_name("p", br.id, t)] for br in children[bus.id])
            out_q = esum(b[var_name("q", br.id, t)] for br in children[bus.id])
            br = parent.get(bus.id)
            if br is not None:
                i_sq = b[var_name("i", br.id, t)]
                in_p = b[var_name("p", br.id, t)] - br.r * i_sq
                in_q = b[var_name("q", br.id, t)] - br.x * i_sq
            else:
                in_p = in_q = 0.0
            tags.append(b.eq(out_p - in_p - p_inj, -p_load, var_name("pbal", bus.id, t)))
            tags.append(b.eq(out_q - in_q - q_inj, -q_load, var_name("qbal", bus.id, t)))
        for br in net.branches:
            p = b[var_name("p", br.id, t)]
            q = b[var_name("q", br.id, t)]
            i_sq = b[var_name("i", br.id, t)]
            vi = b[var_name("v", br.from_bus, t)]
            vj = b[var_name("v", br.to_bus, t)]
            tags.append(b.eq(vi - vj - 2.0 * (br.r * p + br.x * q) + (br.r**2 + br.x**2) * i_sq, 0.0,
                             var_name("vdrop", br.id, t)))
            tags.append(b.rsoc([p, q], vi, i_sq, var_name("flowcone", br.id, t)))
            src = net.bus(br.from_bus)
            s2 = br.s_max**2
            tags.append(b.le(src.v_min * src.v_max * i_sq + s2 * vi, s2 * (src.v_min + src.v_max),
                             var_name("vicap", br.id, t)))
            tags.append(b.soc(br.s_max, [p, q], var_name("thermal", br.id, t)))
        wind = esum(b[var_name("pwind", w.id, t)] for w in net.wind)
        surplus = esum(b[var_name("psw", w.id, t)] for w in net.wind)
        p_we = b[f"h2/pwe/sys/{t}"] if net.hydrogen is not None else 0.0
        tags.append(b.eq(b[var_name("ptr", "sys", t)] - wind + p_we + surplus, 0.0,
                         var_name("windsplit", "sys", t)))
    return tags


@dataclass(frozen=True)
class ExactnessReport:
    gaps: np.ndarray  # (branch, t)
    max_gap: float
    mean_gap: float


def soc_exactness(sol: Solution, net: Network, prog) -> ExactnessReport:
    """Gap ``V_i * I_ij - (p^2 + q^2)`` per branch and step at a solution."""
    T = 1 + max(int(name.rsplit("/", 1)[1]) for name in prog.names if name.startswith("pwr/v/"))
    gaps = np.zeros((len(net.branches), T))
    for k, br in enumerate(net.branches):
        for t in range(T):
            p = prog.value(sol.x, var_name("p", br.id, t))
            q = prog.value(sol.x, var_name("q", br.id, t))
            i_sq = prog.value(sol.x, var_name("i", br.id, t))
            v = prog.value(sol.x, var_name("v", br.from_bus, t))
            gaps[k, t] = v * i_sq - (p * p + q * q)
    return ExactnessReport(gaps, float(gaps.max(initial=0.0)), float(gaps.mean()) if gaps.size else 0.0)


def branch_gap(p: float, q: float, v: float, i_sq: float) -> float:
    return v * i_sq - (p * p + q * q)
