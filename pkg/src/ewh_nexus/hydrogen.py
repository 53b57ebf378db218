"""Electrolysis / fuel-cell block and the carbon capture and methanation chain."""

from __future__ import annotations

import math

from .model import Network, Scenario, ScenarioError, SystemState
from .program import ProgramBuilder, esum


def h2_name(kind: str, t: int) -> str:
    return f"h2/{kind}/sys/{t}"


def co2_name(kind: str, t: int) -> str:
    return f"co2/{kind}/sys/{t}"


def declare_hydrogen_variables(b: ProgramBuilder, net: Network, scenario: Scenario) -> None:
    h = net.hydrogen
    if h is None:
        return
    for t in range(scenario.horizon_steps):
        b.var(h2_name("pwe", t), 0.0, h.p_we_max)
        b.var(h2_name("hwe", t), 0.0, math.inf)
        b.var(h2_name("dwe", t), 0.0, math.inf)
        b.var(h2_name("hfc", t), 0.0, h.h_fc_max)
        b.var(h2_name("pfc", t), 0.0, math.inf)
        b.var(h2_name("phs", t), -math.inf, math.inf)
        b.var(h2_name("qhs", t), -h.s_hs_max, h.s_hs_max)
        b.var(h2_name("bwe", t), binary=True)
        b.var(h2_name("bfc", t), binary=True)
        b.var(h2_name("level", t + 1), h.storage_min, h.storage_max)


def declare_carbon_variables(b: ProgramBuilder, net: Network, scenario: Scenario) -> None:
    c = net.carbon
    if c is None:
        return
    for t in range(scenario.horizon_steps):
        b.var(co2_name("cdg", t), 0.0, math.inf)
        b.var(co2_name("ce", t), 0.0, math.inf)
        b.var(co2_name("cs", t), 0.0, c.storage_cap)
        b.var(co2_name("cchi", t), 0.0, math.inf if net.hydrogen is not None else 0.0)
        b.var(co2_name("ichi", t), -math.inf, math.inf)
        if net.hydrogen is not None:
            b.var(h2_name("hchi", t), 0.0, math.inf)


def build_hydrogen_constraints(
    b: ProgramBuilder, net: Network, scenario: Scenario, state: SystemState | None = None
) -> list[str]:
    """Conversion, inverter cone, on/off limits, exclusivity and storage balance."""
    h = net.hydrogen
    if h is None:
        return []
    if h.water_node not in {n.id for n in net.nodes}:
        raise ScenarioError(f"hydrogen water node '{h.water_node}' missing from the water network")
    state = state or SystemState.initial(net)
    level0 = h.storage_init if state.h2_storage is None else state.h2_storage
    dt = scenario.dt_hours
    tags: list[str] = []
    for t in range(scenario.horizon_steps):
        pwe, hwe, dwe = b[h2_name("pwe", t)], b[h2_name("hwe", t)], b[h2_name("dwe", t)]
        hfc, pfc = b[h2_name("hfc", t)], b[h2_name("pfc", t)]
        bwe, bfc = b[h2_name("bwe", t)], b[h2_name("bfc", t)]
        tags.append(b.eq(hwe - h.xi_we_p * pwe, 0.0, h2_name("produce", t)))
        tags.append(b.eq(dwe - h.xi_we_w * hwe, 0.0, h2_name("water", t)))
        tags.append(b.eq(pfc - h.xi_fc_h * hfc, 0.0, h2_name("fcpower", t)))
        tags.append(b.soc(h.s_hs_max, [pwe - pfc, b[h2_name("qhs", t)]], h2_name("inverter", t)))
        tags.append(b.le(h.h_fc_min * bfc - hfc, 0.0, h2_name("fcmin", t)))
        tags.append(b.le(hfc - h.h_fc_max * bfc, 0.0, h2_name("fcmax", t)))
        tags.append(b.le(h.p_we_min * bwe - pwe, 0.0, h2_name("wemin", t)))
        tags.append(b.le(pwe - h.p_we_max * bwe, 0.0, h2_name("wemax", t)))
        tags.append(b.le(bwe + bfc, 1.0, h2_name("exclusive", t)))
        # the electrolyser is fed from the wind split; only the fuel cell injects at its bus
        tags.append(b.eq(b[h2_name("phs", t)] - pfc, 0.0, h2_name("busp", t)))
        prev = b[h2_name("level", t)] if t > 0 else level0
        draw = b[h2_name("hchi", t)] if net.carbon is not None else 0.0
        tags.append(b.eq(
            b[h2_name("level", t + 1)] - prev - dt * (hwe - hfc - draw),
            -dt * float(scenario.h2_demand[t]),
            h2_name("storage", t),
        ))
    return tags


def build_carbon_constraints(b: ProgramBuilder, net: Network, scenario: Scenario) -> list[str]:
    c = net.carbon
    if c is None:
        return []
    tags: list[str] = []
    for t in range(scenario.horizon_steps):
        cdg, ce, cs = b[co2_name("cdg", t)], b[co2_name("ce", t)], b[co2_name("cs", t)]
        cchi, ichi = b[co2_name("cchi", t)], b[co2_name("ichi", t)]
        emitted = esum(g.carbon_factor * b[f"pwr/pdg/{g.id}/{t}"] for g in net.diesel)
        tags.append(b.eq(cdg - emitted, 0.0, co2_name("diesel", t)))
        tags.append(b.eq(ce - cdg + cs + cchi, 0.0, co2_name("split", t)))
        tags.append(b.eq(ichi - c.rho_chi * c.xi_chi_c * cchi, 0.0, co2_name("revenue", t)))
        tags.append(b.le(cs + cchi - c.capture_ratio_max * cdg, 0.0, co2_name("capture", t)))
        if net.hydrogen is not None:
            tags.append(b.eq(b[h2_name("hchi", t)] - c.xi_chi_h * cchi, 0.0, co2_name("methanation", t)))
    return tags
