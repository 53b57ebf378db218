"""Objective and full mixed-integer program assembly."""

from __future__ import annotations

import numpy as np

from .hydrogen import (
    build_carbon_constraints,
    build_hydrogen_constraints,
    co2_name,
    declare_carbon_variables,
    declare_hydrogen_variables,
)
from .model import Network, ObjectiveWeights, Scenario, SystemState, check_scenario
from .power import build_power_constraints, declare_power_variables
from .program import ConicProgram, Expr, ProgramBuilder, esum
from .water import HullMode, build_water_constraints, declare_water_variables


def build_objective(b: ProgramBuilder, net: Network, scenario: Scenario, weights: ObjectiveWeights) -> Expr:
    """Weighted transfer, diesel, emission and storage penalties minus chemical revenue."""
    dt = scenario.dt_hours
    a1, a2, a3, a4 = weights.as_tuple()
    terms = []
    for t in range(scenario.horizon_steps):
        step = a1 * b[f"pwr/ptr/sys/{t}"] + a2 * esum(b[f"pwr/pdg/{g.id}/{t}"] for g in net.diesel)
        if net.carbon is not None:
            step = step + a3 * b[co2_name("ce", t)] + a4 * b[co2_name("cs", t)] - b[co2_name("ichi", t)]
        terms.append(dt * step)
    return esum(terms)


def objective_value(prog: ConicProgram, net: Network, scenario: Scenario, weights: ObjectiveWeights,
                    x: np.ndarray) -> float:
    """Recompute the dispatch objective from primal values by name."""
    a1, a2, a3, a4 = weights.as_tuple()
    total = 0.0
    for t in range(scenario.horizon_steps):
        step = a1 * prog.value(x, f"pwr/ptr/sys/{t}")
        step += a2 * sum(prog.value(x, f"pwr/pdg/{g.id}/{t}") for g in net.diesel)
        if net.carbon is not None:
            step += a3 * prog.value(x, co2_name("ce", t)) + a4 * prog.value(x, co2_name("cs", t))
            step -= prog.value(x, co2_name("ichi", t))
        total += scenario.dt_hours * step
    return total


def assemble(
    net: Network,
    scenario: Scenario,
    weights: ObjectiveWeights | None = None,
    state: SystemState | None = None,
    hull_mode: HullMode = "validated",
) -> ConicProgram:
    """Build the complete dispatch program over the scenario horizon."""
    check_scenario(net, scenario)
    weights = weights if weights is not None else net.weights
    state = state or SystemState.initial(net)
    b = ProgramBuilder()
    declare_power_variables(b, net, scenario)
    declare_water_variables(b, net, scenario)
    declare_hydrogen_variables(b, net, scenario)
    declare_carbon_variables(b, net, scenario)
    build_power_constraints(b, net, scenario)
    build_water_constraints(b, net, scenario, state, hull_mode)
    build_hydrogen_constraints(b, net, scenario, state)
    build_carbon_constraints(b, net, scenario)
    b.minimize(build_objective(b, net, scenario, weights))
    return b.build()
