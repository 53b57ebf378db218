"""Network and scenario data model for the micro energy-water-hydrogen nexus.

Electrical quantities are per-unit on ``Network.base_mva``; water flows are in
m³/h, heads and elevations in m, hydrogen in kg and kg/h, carbon in kg and kg/h.
Every rate parameter is hourly; builders scale by the step length.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

PUMP_UNIT_CONST = 2.725
NETWORK_KEYS = (
    "base_mva",
    "buses",
    "branches",
    "diesel",
    "wind",
    "nodes",
    "pipes",
    "tanks",
    "desalination",
    "hydrogen",
    "carbon",
    "weights",
)


class NetworkError(ValueError):
    """Raised when a network document fails validation.

    ``violations`` holds one human-readable message per problem found.
    """

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Bus:
    id: str
    v_min: float
    v_max: float
    has_diesel: bool = False
    has_wind: bool = False
    has_hydrogen_system: bool = False
    p_load_profile_ref: str | None = None
    q_load_profile_ref: str | None = None

    @property
    def p_key(self) -> str:
        """Key of the active-load series in :attr:`Scenario.p_load`."""
        return (self.p_load_profile_ref or self.id).removeprefix("p_load_")

    @property
    def q_key(self) -> str:
        return (self.q_load_profile_ref or self.id).removeprefix("q_load_")


@dataclass(frozen=True)
class Branch:
    from_bus: str
    to_bus: str
    r: float
    x: float
    s_max: float
    i_min: float = 0.0
    i_max: float = math.inf

    @property
    def id(self) -> str:
        return f"{self.from_bus}-{self.to_bus}"


@dataclass(frozen=True)
class DieselGenerator:
    id: str
    bus: str
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    carbon_factor: float


@dataclass(frozen=True)
class WindPark:
    id: str
    bus: str
    rated_power: float
    cut_in: float
    rated_speed: float
    cut_out: float
    q_max: float = 0.0


@dataclass(frozen=True)
class WaterNode:
    id: str
    head_min: float
    head_max: float
    elevation: float = 0.0
    demand_profile_ref: str | None = None

    @property
    def demand_key(self) -> str:
        return (self.demand_profile_ref or self.id).removeprefix("wdem_")


@dataclass(frozen=True)
class PumpParams:
    head_gain_max: float
    a1: float
    a0: float
    efficiency: float
    power_bus: str
    unit_const: float = PUMP_UNIT_CONST


@dataclass(frozen=True)
class Pipe:
    id: str
    from_node: str
    to_node: str
    kind: str
    f_min: float
    f_max: float
    r_w: float = 0.0
    h_offset: float = 0.0
    prv_limit: float | None = None
    pump: PumpParams | None = None


@dataclass(frozen=True)
class Tank:
    node: str
    area: float
    v_min: float
    v_max: float
    v_init: float
    flow_min: float
    flow_max: float


@dataclass(frozen=True)
class Desalination:
    id: str
    node: str
    power_bus: str
    f_max: float
    seg_energy: tuple[float, float, float, float]


@dataclass(frozen=True)
class HydrogenSystem:
    bus: str
    water_node: str
    xi_we_p: float
    xi_we_w: float
    xi_fc_h: float
    p_we_min: float
    p_we_max: float
    h_fc_min: float
    h_fc_max: float
    s_hs_max: float
    storage_min: float
    storage_max: float
    storage_init: float


@dataclass(frozen=True)
class CarbonChain:
    capture_ratio_max: float
    xi_chi_c: float
    rho_chi: float
    xi_chi_h: float = 8.0 / 44.0
    storage_cap: float = math.inf


@dataclass(frozen=True)
class ObjectiveWeights:
    alpha1: float = 0.0
    alpha2: float = 0.0
    alpha3: float = 0.0
    alpha4: float = 0.0

    def scaled(self, factor: float) -> "ObjectiveWeights":
        return ObjectiveWeights(*(factor * a for a in self.as_tuple()))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.alpha1, self.alpha2, self.alpha3, self.alpha4)


@dataclass(frozen=True)
class Network:
    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    diesel: tuple[DieselGenerator, ...] = ()
    wind: tuple[WindPark, ...] = ()
    nodes: tuple[WaterNode, ...] = ()
    pipes: tuple[Pipe, ...] = ()
    tanks: tuple[Tank, ...] = ()
    desalination: tuple[Desalination, ...] = ()
    hydrogen: HydrogenSystem | None = None
    carbon: CarbonChain | None = None
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)

    def bus(self, bus_id: str) -> Bus:
        return self._bus_index()[bus_id]

    def _bus_index(self) -> dict[str, Bus]:
        return {b.id: b for b in self.buses}

    @property
    def root_bus(self) -> str:
        targets = {br.to_bus for br in self.branches}
        roots = [b.id for b in self.buses if b.id not in targets]
        return roots[0]

    def parent_branch(self, bus_id: str) -> Branch | None:
        for br in self.branches:
            if br.to_bus == bus_id:
                return br
        return None

    def tank_at(self, node_id: str) -> Tank | None:
        for tk in self.tanks:
            if tk.node == node_id:
                return tk
        return None

    @property
    def pumps(self) -> tuple[Pipe, ...]:
        return tuple(p for p in self.pipes if p.kind == "pump")


# ---------------------------------------------------------------------------
# loading / serialization


def _opt_float(value: Any) -> float:
    if value is None:
        return math.inf
    return float(value)


def _check_keys(obj: Mapping, cls: type, where: str, errors: list[str], renames: Mapping[str, str] = {}) -> dict:
    allowed = {renames.get(f.name, f.name) for f in fields(cls)}
    unknown = sorted(set(obj) - allowed)
    if unknown:
        errors.append(f"{where}: unknown keys {unknown}")
    inverse = {v: k for k, v in renames.items()}
    return {inverse.get(k, k): v for k, v in obj.items() if k in allowed}


_BRANCH_RENAMES = {"from_bus": "from", "to_bus": "to"}
_PIPE_RENAMES = {"from_node": "from", "to_node": "to"}


def _build(cls: type, obj: Any, where: str, errors: list[str], renames: Mapping[str, str] = {}):
    if not isinstance(obj, Mapping):
        errors.append(f"{where}: expected an object")
        return None
    kwargs = _check_keys(obj, cls, where, errors, renames)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        errors.append(f"{where}: {exc}")
        return None


def load_network(document: str | Path | Mapping[str, Any]) -> Network:
    """Parse and validate a network document.

    ``document`` may be a mapping, a JSON string, or a path to a JSON file.
    Raises :class:`NetworkError` listing every violation found.
    """
    if isinstance(document, Path) or (isinstance(document, str) and not document.lstrip().startswith("{")):
        document = json.loads(Path(document).read_text())
    elif isinstance(document, str):
        document = json.loads(document)
    errors: list[str] = []
    unknown = sorted(set(document) - set(NETWORK_KEYS))
    if unknown:
        errors.append(f"network: unknown keys {unknown}")
    for key in ("base_mva", "buses", "branches"):
        if key not in document:
            errors.append(f"network: missing key '{key}'")
    if errors:
        raise NetworkError(errors)

    buses = [_build(Bus, b, f"buses[{i}]", errors) for i, b in enumerate(document["buses"])]
    branches = []
    for i, b in enumerate(document["branches"]):
        if isinstance(b, Mapping) and "i_max" in b:
            b = {**b, "i_max": _opt_float(b["i_max"])}
        branches.append(_build(Branch, b, f"branches[{i}]", errors, _BRANCH_RENAMES))
    diesel = [_build(DieselGenerator, d, f"diesel[{i}]", errors) for i, d in enumerate(document.get("diesel", []))]
    wind = [_build(WindPark, w, f"wind[{i}]", errors) for i, w in enumerate(document.get("wind", []))]
    nodes = [_build(WaterNode, n, f"nodes[{i}]", errors) for i, n in enumerate(document.get("nodes", []))]
    pipes = []
    for i, p in enumerate(document.get("pipes", [])):
        if isinstance(p, Mapping) and isinstance(p.get("pump"), Mapping):
            pump = _build(PumpParams, p["pump"], f"pipes[{i}].pump", errors)
            p = {**p, "pump": pump}
        pipes.append(_build(Pipe, p, f"pipes[{i}]", errors, _PIPE_RENAMES))
    tanks = [_build(Tank, t, f"tanks[{i}]", errors) for i, t in enumerate(document.get("tanks", []))]
    desal = []
    for i, d in enumerate(document.get("desalination", [])):
        if isinstance(d, Mapping) and "seg_energy" in d:
            d = {**d, "seg_energy": tuple(float(e) for e in d["seg_energy"])}
        desal.append(_build(Desalination, d, f"desalination[{i}]", errors))
    hydrogen = None
    if document.get("hydrogen") is not None:
        hydrogen = _build(HydrogenSystem, document["hydrogen"], "hydrogen", errors)
    carbon = None
    if document.get("carbon") is not None:
        c = document["carbon"]
        if isinstance(c, Mapping) and "storage_cap" in c:
            c = {**c, "storage_cap": _opt_float(c["storage_cap"])}
        carbon = _build(CarbonChain, c, "carbon", errors)
    weights = ObjectiveWeights()
    if document.get("weights") is not None:
        weights = _build(ObjectiveWeights, document["weights"], "weights", errors)
    if errors:
        raise NetworkError(errors)

    net = Network(
        base_mva=float(document["base_mva"]),
        buses=tuple(buses),
        branches=tuple(branches),
        diesel=tuple(diesel),
        wind=tuple(wind),
        nodes=tuple(nodes),
        pipes=tuple(pipes),
        tanks=tuple(tanks),
        desalination=tuple(desal),
        hydrogen=hydrogen,
        carbon=carbon,
        weights=weights,
    )
    validate_network(net)
    return net


def validate_network(net: Network) -> None:
    errors: list[str] = []

    def dup(kind: str, ids: Iterable[str]) -> None:
        seen: set[str] = set()
        for i in ids:
            if i in seen:
                errors.append(f"duplicate {kind} id '{i}'")
            seen.add(i)

    def bounds(where: str, lo: float, hi: float) -> None:
        if lo > hi:
            errors.append(f"{where}: bound inversion (min {lo} > max {hi})")

    if net.base_mva <= 0:
        errors.append("base_mva must be positive")
    bus_ids = {b.id for b in net.buses}
    node_ids = {n.id for n in net.nodes}
    dup("bus", (b.id for b in net.buses))
    dup("branch", (b.id for b in net.branches))
    dup("diesel", (d.id for d in net.diesel))
    dup("wind", (w.id for w in net.wind))
    dup("water node", (n.id for n in net.nodes))
    dup("pipe", (p.id for p in net.pipes))
    dup("tank", (t.node for t in net.tanks))
    dup("desalination", (d.id for d in net.desalination))

    def ref(where: str, target: str, pool: set[str], kind: str) -> None:
        if target not in pool:
            errors.append(f"{where}: dangling reference to {kind} '{target}'")

    for b in net.buses:
        bounds(f"bus {b.id} v", b.v_min, b.v_max)
        if not b.v_min > 0:
            errors.append(f"bus {b.id}: v_min must be positive")
    for br in net.branches:
        ref(f"branch {br.id}", br.from_bus, bus_ids, "bus")
        ref(f"branch {br.id}", br.to_bus, bus_ids, "bus")
        if br.r < 0 or br.x < 0:
            errors.append(f"branch {br.id}: negative impedance")
        if br.s_max <= 0:
            errors.append(f"branch {br.id}: s_max must be positive")
        bounds(f"branch {br.id} i", br.i_min, br.i_max)
    for d in net.diesel:
        ref(f"diesel {d.id}", d.bus, bus_ids, "bus")
        bounds(f"diesel {d.id} p", d.p_min, d.p_max)
        bounds(f"diesel {d.id} q", d.q_min, d.q_max)
        if d.carbon_factor < 0:
            errors.append(f"diesel {d.id}: negative carbon_factor")
    for w in net.wind:
        ref(f"wind {w.id}", w.bus, bus_ids, "bus")
        if not 0 < w.cut_in < w.rated_speed < w.cut_out:
            errors.append(f"wind {w.id}: need 0 < cut_in < rated_speed < cut_out")
    for n in net.nodes:
        bounds(f"node {n.id} head", n.head_min, n.head_max)
    for p in net.pipes:
        ref(f"pipe {p.id}", p.from_node, node_ids, "water node")
        ref(f"pipe {p.id}", p.to_node, node_ids, "water node")
        bounds(f"pipe {p.id} flow", p.f_min, p.f_max)
        if p.kind not in ("regular", "pump", "prv"):
            errors.append(f"pipe {p.id}: unknown kind '{p.kind}'")
        if p.r_w < 0:
            errors.append(f"pipe {p.id}: negative r_w")
        if p.kind == "prv" and (p.prv_limit is None or p.prv_limit < 0):
            errors.append(f"pipe {p.id}: prv requires prv_limit >= 0")
        if p.kind == "pump":
            if p.pump is None:
                errors.append(f"pipe {p.id}: pump pipe without pump parameters")
            else:
                pp = p.pump
                ref(f"pipe {p.id}.pump", pp.power_bus, bus_ids, "bus")
                if pp.a1 < 0 or pp.a0 < 0 or not 0 < pp.efficiency <= 1:
                    errors.append(f"pipe {p.id}.pump: need a1, a0 >= 0 and 0 < efficiency <= 1")
                if pp.unit_const != PUMP_UNIT_CONST:
                    errors.append(f"pipe {p.id}.pump: unit_const must equal {PUMP_UNIT_CONST}")
    for t in net.tanks:
        ref(f"tank {t.node}", t.node, node_ids, "water node")
        bounds(f"tank {t.node} volume", t.v_min, t.v_max)
        bounds(f"tank {t.node} flow", t.flow_min, t.flow_max)
        if not t.v_min <= t.v_init <= t.v_max:
            errors.append(f"tank {t.node}: initial volume out of bounds")
        if t.area <= 0:
            errors.append(f"tank {t.node}: area must be positive")
    for d in net.desalination:
        ref(f"desalination {d.id}", d.node, node_ids, "water node")
        ref(f"desalination {d.id}", d.power_bus, bus_ids, "bus")
        if len(d.seg_energy) != 4 or any(e <= 0 for e in d.seg_energy):
            errors.append(f"desalination {d.id}: need exactly 4 positive seg_energy values")
    h = net.hydrogen
    if h is not None:
        ref("hydrogen", h.bus, bus_ids, "bus")
        ref("hydrogen", h.water_node, node_ids, "water node")
        if min(h.xi_we_p, h.xi_we_w, h.xi_fc_h) <= 0:
            errors.append("hydrogen: conversion factors must be positive")
        bounds("hydrogen p_we", h.p_we_min, h.p_we_max)
        bounds("hydrogen h_fc", h.h_fc_min, h.h_fc_max)
        bounds("hydrogen storage", h.storage_min, h.storage_max)
        if not h.storage_min <= h.storage_init <= h.storage_max:
            errors.append("hydrogen: initial storage out of bounds")
    c = net.carbon
    if c is not None:
        if not 0 <= c.capture_ratio_max <= 1:
            errors.append("carbon: capture_ratio_max must lie in [0, 1]")
        if c.rho_chi < 0:
            errors.append("carbon: rho_chi must be nonnegative")
    w = net.weights
    if any(a < 0 for a in w.as_tuple()):
        errors.append("weights: all alphas must be nonnegative")

    # flags must agree with the device lists
    for b in net.buses:
        if b.has_diesel != any(d.bus == b.id for d in net.diesel):
            errors.append(f"bus {b.id}: has_diesel flag disagrees with diesel list")
        if b.has_wind != any(wp.bus == b.id for wp in net.wind):
            errors.append(f"bus {b.id}: has_wind flag disagrees with wind list")
        if b.has_hydrogen_system != (h is not None and h.bus == b.id):
            errors.append(f"bus {b.id}: has_hydrogen_system flag disagrees with hydrogen section")

    if not errors:
        errors.extend(_tree_errors(net))
    if errors:
        raise NetworkError(errors)


def _tree_errors(net: Network) -> list[str]:
    if len(net.branches) != len(net.buses) - 1:
        return [f"non-tree power graph: {len(net.branches)} branches for {len(net.buses)} buses"]
    incoming: dict[str, int] = {}
    for br in net.branches:
        incoming[br.to_bus] = incoming.get(br.to_bus, 0) + 1
    roots = [b.id for b in net.buses if b.id not in incoming]
    if len(roots) != 1 or any(n > 1 for n in incoming.values()):
        return ["non-tree power graph: every bus except the root needs exactly one incoming branch"]
    children: dict[str, list[str]] = {}
    for br in net.branches:
        children.setdefault(br.from_bus, []).append(br.to_bus)
    seen, stack = set(), [roots[0]]
    while stack:
        b = stack.pop()
        seen.add(b)
        stack.extend(c for c in children.get(b, []) if c not in seen)
    if len(seen) != len(net.buses):
        return ["non-tree power graph: buses unreachable from the root"]
    if net.diesel and roots[0] not in {d.bus for d in net.diesel}:
        return ["non-tree power graph: tree must be rooted at a diesel bus"]
    return []


def _clean(value: Any) -> Any:
    if isinstance(value, float) and math.isinf(value):
        return None
    if isinstance(value, tuple):
        return [_clean(v) for v in value]
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    return value


def network_to_dict(net: Network) -> dict[str, Any]:
    def rename(d: dict, renames: Mapping[str, str]) -> dict:
        return {renames.get(k, k): v for k, v in d.items()}

    def drop_none(d: dict) -> dict:
        return {k: v for k, v in d.items() if v is not None}

    doc: dict[str, Any] = {"base_mva": net.base_mva}
    doc["buses"] = [drop_none(asdict(b)) for b in net.buses]
    doc["branches"] = [_clean(rename(asdict(b), _BRANCH_RENAMES)) for b in net.branches]
    doc["diesel"] = [asdict(d) for d in net.diesel]
    doc["wind"] = [asdict(w) for w in net.wind]
    doc["nodes"] = [drop_none(asdict(n)) for n in net.nodes]
    doc["pipes"] = [drop_none(rename(asdict(p), _PIPE_RENAMES)) for p in net.pipes]
    doc["tanks"] = [asdict(t) for t in net.tanks]
    doc["desalination"] = [_clean(asdict(d)) for d in net.desalination]
    doc["hydrogen"] = asdict(net.hydrogen) if net.hydrogen else None
    doc["carbon"] = _clean(asdict(net.carbon)) if net.carbon else None
    doc["weights"] = asdict(net.weights)
    return doc


def serialize_network(net: Network) -> str:
    return json.dumps(network_to_dict(net), indent=2)


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class SystemState:
    """Storage levels carried between rolling-window solves."""

    tank_volume: Mapping[str, float] = field(default_factory=dict)
    h2_storage: float | None = None

    @classmethod
    def initial(cls, net: Network) -> "SystemState":
        return cls(
            tank_volume={t.node: t.v_init for t in net.tanks},
            h2_storage=net.hydrogen.storage_init if net.hydrogen else None,
        )


@dataclass(frozen=True, eq=False)
class Scenario:
    step_minutes: int
    horizon_steps: int
    wind_speed: np.ndarray
    p_load: Mapping[str, np.ndarray]
    q_load: Mapping[str, np.ndarray]
    water_demand: Mapping[str, np.ndarray]
    h2_demand: np.ndarray

    def __post_init__(self) -> None:
        if self.step_minutes <= 0 or self.horizon_steps <= 0:
            raise ScenarioError("step_minutes and horizon_steps must be positive")
        series = [("wind_mps", self.wind_speed), ("h2_dem", self.h2_demand)]
        series += [(f"p_load {k}", v) for k, v in self.p_load.items()]
        series += [(f"q_load {k}", v) for k, v in self.q_load.items()]
        series += [(f"wdem {k}", v) for k, v in self.water_demand.items()]
        for name, s in series:
            if len(s) != self.horizon_steps:
                raise ScenarioError(f"series {name} has length {len(s)}, expected {self.horizon_steps}")
        for name, s in series:
            if name != "wind_mps" and not name.startswith("q_load") and np.any(np.asarray(s) < 0):
                raise ScenarioError(f"series {name} has negative demand")
        if np.any(np.asarray(self.wind_speed) < 0):
            raise ScenarioError("wind speed must be nonnegative")

    @property
    def dt_hours(self) -> float:
        return self.step_minutes / 60.0

    def window(self, start: int, steps: int) -> "Scenario":
        """Sub-horizon ``[start, start + steps)``; wraps around cyclically."""
        idx = (start + np.arange(steps)) % self.horizon_steps

        def take(m: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
            return {k: np.asarray(v)[idx] for k, v in m.items()}

        return Scenario(
            step_minutes=self.step_minutes,
            horizon_steps=steps,
            wind_speed=np.asarray(self.wind_speed)[idx],
            p_load=take(self.p_load),
            q_load=take(self.q_load),
            water_demand=take(self.water_demand),
            h2_demand=np.asarray(self.h2_demand)[idx],
        )

    def with_wind(self, wind: np.ndarray) -> "Scenario":
        return replace(self, wind_speed=np.asarray(wind, dtype=float))

    def columns(self) -> dict[str, np.ndarray]:
        cols = {"t_min": np.arange(self.horizon_steps) * float(self.step_minutes), "wind_mps": self.wind_speed}
        for k, v in self.p_load.items():
            cols[f"p_load_{k}"] = v
        for k, v in self.q_load.items():
            cols[f"q_load_{k}"] = v
        for k, v in self.water_demand.items():
            cols[f"wdem_{k}"] = v
        cols["h2_dem"] = self.h2_demand
        return cols

    def equals(self, other: "Scenario") -> bool:
        a, b = self.columns(), other.columns()
        return a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)


def scenario_from_columns(columns: Mapping[str, Sequence[float]], step_minutes: int | None = None) -> Scenario:
    if "t_min" not in columns or "wind_mps" not in columns:
        raise ScenarioError("scenario needs t_min and wind_mps columns")
    t = np.asarray(columns["t_min"], dtype=float)
    if len(t) == 0:
        raise ScenarioError("scenario has no rows")
    if step_minutes is None:
        if len(t) < 2:
            raise ScenarioError("cannot infer step from a single row; pass step_minutes")
        steps = np.diff(t)
        if not np.allclose(steps, steps[0]) or steps[0] <= 0:
            raise ScenarioError("t_min must be strictly increasing with a uniform step")
        step_minutes = int(round(steps[0]))
    p_load, q_load, wdem = {}, {}, {}
    h2 = np.zeros(len(t))
    for name, values in columns.items():
        arr = np.asarray(values, dtype=float)
        if name.startswith("p_load_"):
            p_load[name[len("p_load_"):]] = arr
        elif name.startswith("q_load_"):
            q_load[name[len("q_load_"):]] = arr
        elif name.startswith("wdem_"):
            wdem[name[len("wdem_"):]] = arr
        elif name == "h2_dem":
            h2 = arr
        elif name not in ("t_min", "wind_mps"):
            raise ScenarioError(f"unknown scenario column '{name}'")
    return Scenario(
        step_minutes=step_minutes,
        horizon_steps=len(t),
        wind_speed=np.asarray(columns["wind_mps"], dtype=float),
        p_load=p_load,
        q_load=q_load,
        water_demand=wdem,
        h2_demand=h2,
    )


def read_scenario_csv(source: str | Path | io.TextIOBase, step_minutes: int | None = None) -> Scenario:
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return read_scenario_csv(fh, step_minutes)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise ScenarioError("scenario file is empty") from None
    header = [h.strip() for h in header]
    if "t_min" not in header:
        raise ScenarioError("scenario header row must contain t_min")
    rows = [r for r in reader if r]
    cols = {h: [float(r[i]) for r in rows] for i, h in enumerate(header)}
    return scenario_from_columns(cols, step_minutes)


def write_scenario_csv(scenario: Scenario, target: str | Path | io.TextIOBase) -> None:
    if isinstance(target, (str, Path)):
        with open(target, "w", newline="") as fh:
            write_scenario_csv(scenario, fh)
        return
    cols = scenario.columns()
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(cols.keys())
    for i in range(scenario.horizon_steps):
        writer.writerow([repr(float(v[i])) for v in cols.values()])


def check_scenario(net: Network, scenario: Scenario) -> None:
    """Raise :class:`ScenarioError` if a series the network refers to is missing."""
    missing = []
    for b in net.buses:
        if b.p_key not in scenario.p_load:
            missing.append(f"p_load_{b.p_key}")
        if b.q_key not in scenario.q_load:
            missing.append(f"q_load_{b.q_key}")
    for n in net.nodes:
        if n.demand_key not in scenario.water_demand:
            missing.append(f"wdem_{n.demand_key}")
    if missing:
        raise ScenarioError(f"scenario lacks series {missing}")


def interpolate_series(
    raw: Sequence[tuple[float, float]], step_minutes: int, horizon_steps: int
) -> np.ndarray:
    """Sample a piecewise-linear curve through ``raw`` (minutes, value) at step boundaries.

    >>> interpolate_series([(0, 0.0), (60, 12.0)], 30, 2)
    array([0., 6.])
    """
    if len(raw) < 2:
        raise ScenarioError("need at least two points to interpolate")
    t = np.array([p[0] for p in raw], dtype=float)
    v = np.array([p[1] for p in raw], dtype=float)
    if np.any(np.diff(t) <= 0):
        raise ScenarioError("timestamps must be strictly increasing")
    if step_minutes * horizon_steps > t[-1] - t[0] + 1e-9:
        span_steps = int((t[-1] - t[0]) // step_minutes)
        raise ScenarioError(
            f"horizon of {horizon_steps} steps exceeds the data span ({span_steps} steps of {step_minutes} min)"
        )
    samples = t[0] + step_minutes * np.arange(horizon_steps)
    return np.interp(samples, t, v)


def wind_to_power(speed: float | np.ndarray, park: WindPark) -> float | np.ndarray:
    """Turbine power curve: cubic ramp from cut-in to rated speed, flat to cut-out."""
    v = np.asarray(speed, dtype=float)
    ramp = park.rated_power * (v**3 - park.cut_in**3) / (park.rated_speed**3 - park.cut_in**3)
    out = np.where(
        (v < park.cut_in) | (v > park.cut_out),
        0.0,
        np.where(v >= park.rated_speed, park.rated_power, ramp),
    )
    return float(out) if out.ndim == 0 else out


def resample_scenario(scenario: Scenario, step_minutes: int) -> Scenario:
    """Re-sample every series at a new step by linear interpolation over the recorded span."""
    if step_minutes == scenario.step_minutes:
        return scenario
    cols = scenario.columns()
    t = cols.pop("t_min")
    n = int((t[-1] - t[0]) // step_minutes)
    if n < 1:
        raise ScenarioError(f"scenario span of {t[-1] - t[0]:g} min is shorter than one {step_minutes}-min step")
    out = {"t_min": t[0] + step_minutes * np.arange(n)}
    for name, v in cols.items():
        out[name] = interpolate_series(list(zip(t, v)), step_minutes, n)
    return scenario_from_columns(out, step_minutes)
