"""Water network block: nodal balance, head-loss hulls, desalination, pumps, tanks, PRVs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .model import Desalination, Network, Pipe, Scenario, ScenarioError, SystemState, Tank
from .program import Expr, ProgramBuilder, esum

SQRT2 = math.sqrt(2.0)
HullMode = Literal["strict-paper", "validated"]


def var_name(kind: str, asset: str, t: int) -> str:
    return f"wat/{kind}/{asset}/{t}"


@dataclass(frozen=True)
class Plane:
    """``Y <= slope*f + intercept`` (sense "le") or ``Y >= ...`` (sense "ge")."""

    slope: float
    intercept: float
    sense: str

    def __call__(self, f):
        return self.slope * f + self.intercept


def _tangent(r: float, t: float, sense: str) -> Plane:
    # tangent of g(f) = r*f*|f| at t
    slope = 2.0 * r * abs(t)
    return Plane(slope, r * t * abs(t) - slope * t, sense)


def _through(r: float, f0: float, f1: float, sense: str) -> Plane:
    g0, g1 = r * f0 * abs(f0), r * f1 * abs(f1)
    slope = (g1 - g0) / (f1 - f0)
    return Plane(slope, g0 - slope * f0, sense)


def headloss_hull_planes(r_w: float, f_min: float, f_max: float, mode: HullMode = "validated") -> list[Plane]:
    """Affine planes enclosing the signed head-loss curve ``r_w * f * |f|`` on ``[f_min, f_max]``.

    ``strict-paper`` keeps the classic four-plane formula with the signed lower
    flow limit substituted literally; it can cut off parts of the curve.
    ``validated`` builds the convex-hull
    envelope: tangents at the endpoints, and for bidirectional pipes the lines
    from each endpoint tangent to the opposite branch of the curve.
    """
    if not f_min < f_max:
        raise ValueError(f"degenerate flow interval [{f_min}, {f_max}]")
    if r_w < 0:
        raise ValueError("r_w must be nonnegative")
    r, lo, hi = r_w, f_min, f_max
    if mode == "strict-paper":
        k1, k0 = 2 * SQRT2 - 2, 3 - 2 * SQRT2
        return [
            Plane(k1 * r * hi, k0 * r * hi**2, "le"),
            Plane(k1 * r * lo, -k0 * r * lo**2, "ge"),
            Plane(2 * r * hi, -r * hi**2, "ge"),
            Plane(2 * r * lo, r * lo**2, "le"),
        ]
    if mode != "validated":
        raise ValueError(f"unknown hull mode '{mode}'")

    if lo >= 0:
        return [_tangent(r, lo, "ge"), _tangent(r, hi, "ge"), _through(r, lo, hi, "le")]
    if hi <= 0:
        return [_tangent(r, lo, "le"), _tangent(r, hi, "le"), _through(r, lo, hi, "ge")]
    planes = []
    # lower envelope: from (lo, g(lo)) tangent to the convex branch at (sqrt2-1)|lo|
    touch = (SQRT2 - 1) * -lo
    if touch < hi:
        planes += [_through(r, lo, touch, "ge"), _tangent(r, hi, "ge")]
    else:
        planes.append(_through(r, lo, hi, "ge"))
    touch = -(SQRT2 - 1) * hi
    if touch > lo:
        planes += [_through(r, touch, hi, "le"), _tangent(r, lo, "le")]
    else:
        planes.append(_through(r, lo, hi, "le"))
    return planes


def hull_violations(
    planes: list[Plane], r_w: float, f_min: float, f_max: float, samples: int = 1000,
    rng: np.random.Generator | None = None, tol: float = 1e-9,
) -> int:
    """Count sampled flows where the planes fail to bracket ``r_w * f * |f|``.

    Test-support oracle: draws ``samples`` uniform flows (endpoints included).
    """
    rng = rng or np.random.default_rng(0)
    f = np.concatenate([[f_min, f_max], rng.uniform(f_min, f_max, samples - 2)])
    g = r_w * f * np.abs(f)
    lower = [p(f) for p in planes if p.sense == "ge"]
    upper = [p(f) for p in planes if p.sense == "le"]
    lo = np.max(lower, axis=0) if lower else np.full_like(f, -np.inf)
    hi = np.min(upper, axis=0) if upper else np.full_like(f, np.inf)
    scale = np.maximum(1.0, np.abs(g))
    return int(np.sum((lo - g > tol * scale) | (g - hi > tol * scale)))


def desal_segment_bounds(f_max: float, mu: int) -> tuple[float, float]:
    """Flow interval of desalination segment ``mu`` in 1..4."""
    if mu not in (1, 2, 3, 4):
        raise ValueError("segment index must be 1..4")
    return 0.25 * (mu - 1) * f_max, 0.25 * mu * f_max


def tank_step(volume: float, discharge_flow: float, dt_h: float, tank: Tank | None = None) -> float:
    """Volume after discharging ``discharge_flow`` m³/h into the network for ``dt_h`` hours."""
    return volume - discharge_flow * dt_h


def pump_big_m(net: Network, pipe: Pipe) -> float:
    nodes = {n.id: n for n in net.nodes}
    a, b = nodes[pipe.from_node], nodes[pipe.to_node]
    y_span = max(abs(a.head_max - b.head_min + pipe.h_offset), abs(a.head_min - b.head_max + pipe.h_offset))
    return y_span + pipe.pump.head_gain_max + pipe.r_w * max(pipe.f_min**2, pipe.f_max**2)


def declare_water_variables(b: ProgramBuilder, net: Network, scenario: Scenario) -> None:
    for t in range(scenario.horizon_steps):
        for n in net.nodes:
            b.var(var_name("y", n.id, t), n.head_min, n.head_max)
        for p in net.pipes:
            lo = max(0.0, p.f_min) if p.kind == "pump" else p.f_min
            b.var(var_name("f", p.id, t), lo, p.f_max)
        for tk in net.tanks:
            b.var(var_name("fwt", tk.node, t), tk.flow_min, tk.flow_max)
            b.var(var_name("vol", tk.node, t + 1), tk.v_min, tk.v_max)
        for d in net.desalination:
            b.var(var_name("fdes", d.id, t), 0.0, d.f_max)
            for mu in range(1, 5):
                b.var(var_name("fseg", f"{d.id}:{mu}", t), 0.0, desal_segment_bounds(d.f_max, mu)[1])
                b.var(var_name("bdes", f"{d.id}:{mu}", t), binary=True)
            b.var(var_name("pdes", d.id, t), 0.0, math.inf)
        for p in net.pumps:
            b.var(var_name("bp", p.id, t), binary=True)
            b.var(var_name("yg", p.id, t), 0.0, p.pump.head_gain_max)
            b.var(var_name("ppump", p.id, t), 0.0, math.inf)


def _head_diff(b: ProgramBuilder, pipe: Pipe, t: int) -> Expr:
    return b[var_name("y", pipe.from_node, t)] - b[var_name("y", pipe.to_node, t)] + pipe.h_offset


def build_water_constraints(
    b: ProgramBuilder,
    net: Network,
    scenario: Scenario,
    state: SystemState | None = None,
    mode: HullMode = "validated",
) -> list[str]:
    state = state or SystemState.initial(net)
    dt = scenario.dt_hours
    tags: list[str] = []
    h2 = net.hydrogen
    for n in net.nodes:
        if n.demand_key not in scenario.water_demand:
            raise ScenarioError(f"missing water demand series for node {n.id}")
    for tk in net.tanks:
        v0 = state.tank_volume.get(tk.node, tk.v_init)
        if not tk.v_min - 1e-9 <= v0 <= tk.v_max + 1e-9:
            raise ScenarioError(f"tank {tk.node}: initial volume {v0} outside [{tk.v_min}, {tk.v_max}]")
    node_elev = {n.id: n.elevation for n in net.nodes}

    for t in range(scenario.horizon_steps):
        # (nodal balance) net outflow = desalination + tank discharge - demand
        for n in net.nodes:
            out = esum(b[var_name("f", p.id, t)] for p in net.pipes if p.from_node == n.id)
            inflow = esum(b[var_name("f", p.id, t)] for p in net.pipes if p.to_node == n.id)
            supply = esum(b[var_name("fdes", d.id, t)] for d in net.desalination if d.node == n.id)
            if net.tank_at(n.id) is not None:
                supply = supply + b[var_name("fwt", n.id, t)]
            draw = b[f"h2/dwe/sys/{t}"] if h2 is not None and h2.water_node == n.id else 0.0
            demand = float(scenario.water_demand[n.demand_key][t])
            tags.append(b.eq(out - inflow - supply + draw, -demand, var_name("bal", n.id, t)))

        for p in net.pipes:
            f = b[var_name("f", p.id, t)]
            dy = _head_diff(b, p, t)
            if p.kind == "regular":
                for k, pl in enumerate(headloss_hull_planes(p.r_w, p.f_min, p.f_max, mode)):
                    tag = var_name(f"hull{k}", p.id, t)
                    rhs = pl.slope * f + pl.intercept
                    tags.append(b.le(dy, rhs, tag) if pl.sense == "le" else b.ge(dy, rhs, tag))
            elif p.kind == "prv":
                tags.append(b.le(dy, p.prv_limit, var_name("prvhi", p.id, t)))
                tags.append(b.ge(dy, -p.prv_limit, var_name("prvlo", p.id, t)))
            else:
                tags += _pump_pipe(b, net, p, t)

        for d in net.desalination:
            tags += _desalination(b, d, t)

        for tk in net.tanks:
            fwt = b[var_name("fwt", tk.node, t)]
            prev = b[var_name("vol", tk.node, t)] if t > 0 else state.tank_volume.get(tk.node, tk.v_init)
            nxt = b[var_name("vol", tk.node, t + 1)]
            tags.append(b.eq(nxt - prev + dt * fwt, 0.0, var_name("tankvol", tk.node, t)))
            # water level follows the stored volume at the start of the step
            tags.append(b.eq(tk.area * b[var_name("y", tk.node, t)] - prev, tk.area * node_elev[tk.node],
                             var_name("tankhead", tk.node, t)))
    return tags


def _pump_pipe(b: ProgramBuilder, net: Network, p: Pipe, t: int) -> list[str]:
    pp = p.pump
    f = b[var_name("f", p.id, t)]
    on = b[var_name("bp", p.id, t)]
    gain = b[var_name("yg", p.id, t)]
    power = b[var_name("ppump", p.id, t)]
    dy = _head_diff(b, p, t)
    big_m = pump_big_m(net, p)
    tags = []
    # head relation relaxed to [r f^2, r fmax f] while the pump runs
    slack = dy + gain + big_m - big_m * on
    if p.r_w > 0:
        tags.append(b.rsoc([math.sqrt(p.r_w) * f], slack, 1.0, var_name("pumploss", p.id, t)))
    else:
        tags.append(b.ge(slack, 0.0, var_name("pumploss", p.id, t)))
    tags.append(b.le(dy + gain - p.r_w * p.f_max * f + big_m * on, big_m, var_name("pumpgain", p.id, t)))
    tags.append(b.le(f - p.f_max * on, 0.0, var_name("pumpflow", p.id, t)))
    tags.append(b.le(gain - pp.head_gain_max * on, 0.0, var_name("pumphead", p.id, t)))
    # electrical envelope
    k = pp.unit_const
    lin = pp.efficiency * power - k * pp.a0 * f
    if pp.a1 > 0:
        tags.append(b.rsoc([math.sqrt(k * pp.a1) * f], lin, 1.0, var_name("pumppow", p.id, t)))
    else:
        tags.append(b.ge(lin, 0.0, var_name("pumppow", p.id, t)))
    tags.append(b.le(pp.efficiency * power - k * (pp.a1 * p.f_max + pp.a0) * f, 0.0,
                     var_name("pumppowcap", p.id, t)))
    return tags


def _desalination(b: ProgramBuilder, d: Desalination, t: int) -> list[str]:
    tags = []
    segs = [(mu, b[var_name("fseg", f"{d.id}:{mu}", t)], b[var_name("bdes", f"{d.id}:{mu}", t)])
            for mu in range(1, 5)]
    tags.append(b.eq(esum(s[2] for s in segs), 1.0, var_name("desalone", d.id, t)))
    tags.append(b.eq(b[var_name("fdes", d.id, t)] - esum(s[1] for s in segs), 0.0,
                     var_name("desalflow", d.id, t)))
    tags.append(b.eq(b[var_name("pdes", d.id, t)] - esum(e * s[1] for e, s in zip(d.seg_energy, segs)), 0.0,
                     var_name("desalpow", d.id, t)))
    for mu, fseg, on in segs:
        lo, hi = desal_segment_bounds(d.f_max, mu)
        tags.append(b.le(fseg - hi * on, 0.0, var_name("seghi", f"{d.id}:{mu}", t)))
        if lo > 0:
            tags.append(b.ge(fseg - lo * on, 0.0, var_name("seglo", f"{d.id}:{mu}", t)))
    return tags
