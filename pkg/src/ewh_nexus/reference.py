"""Reference case: IEEE 13-bus feeder coupled to an 8-node coastal water system.

Buses follow the IEEE 13-node test feeder naming with three-phase loads
lumped per bus on a 5 MVA base.  The water side is a desalination plant
pumping into an elevated tank that feeds five demand nodes, one of them
supplying the electrolyser.  Synthetic daily curves stand in for measured
wind and load history.
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

from .model import Network, Scenario, load_network

# (bus, P kW, Q kvar) lumped from the feeder's spot and distributed loads
_LOADS_KW = {
    "650": (0, 0), "632": (200, 116), "633": (0, 0), "634": (400, 290), "645": (170, 125),
    "646": (230, 132), "671": (1155, 660), "680": (0, 0), "684": (0, 0), "611": (170, 80),
    "652": (128, 86), "692": (170, 151), "675": (843, 462),
}
_BRANCHES = [
    # from, to, r, x, s_max  (p.u. on 5 MVA)
    ("650", "632", 0.012, 0.035, 1.6),
    ("632", "633", 0.010, 0.016, 0.5),
    ("633", "634", 0.004, 0.020, 0.5),
    ("632", "645", 0.018, 0.020, 0.4),
    ("645", "646", 0.011, 0.012, 0.3),
    ("632", "671", 0.012, 0.035, 1.4),
    ("671", "684", 0.011, 0.012, 0.4),
    ("684", "611", 0.011, 0.011, 0.3),
    ("684", "652", 0.014, 0.010, 0.3),
    ("671", "680", 0.006, 0.018, 1.2),
    ("671", "692", 0.001, 0.001, 0.8),
    ("692", "675", 0.009, 0.009, 0.8),
]
BASE_MVA = 5.0
WATER_DEMAND = {"W4": 40.0, "W5": 30.0, "W6": 30.0, "W7": 25.0, "W8": 25.0}


def reference_network_dict() -> dict:
    buses = []
    for bus in _LOADS_KW:
        buses.append({
            "id": bus,
            "v_min": 0.95**2 if bus == "650" else 0.9**2,
            "v_max": 1.05**2 if bus == "650" else 1.1**2,
            "has_diesel": bus == "650",
            "has_wind": bus == "680",
            "has_hydrogen_system": bus == "680",
        })
    return {
        "base_mva": BASE_MVA,
        "buses": buses,
        "branches": [
            {"from": f, "to": t, "r": r, "x": x, "s_max": s, "i_min": 0.0, "i_max": 4.0}
            for f, t, r, x, s in _BRANCHES
        ],
        "diesel": [{"id": "DG1", "bus": "650", "p_min": 0.1, "p_max": 1.2, "q_min": -0.6, "q_max": 0.8,
                    "carbon_factor": 3500.0}],
        "wind": [{"id": "WF1", "bus": "680", "rated_power": 0.6, "cut_in": 3.0, "rated_speed": 12.0,
                  "cut_out": 25.0, "q_max": 0.0}],
        "nodes": [
            {"id": "W1", "head_min": 0.0, "head_max": 10.0, "elevation": 0.0},
            {"id": "W2", "head_min": 40.0, "head_max": 90.0, "elevation": 20.0},
            {"id": "W3", "head_min": 50.0, "head_max": 62.0, "elevation": 50.0},
            {"id": "W4", "head_min": 30.0, "head_max": 62.0, "elevation": 15.0},
            {"id": "W5", "head_min": 25.0, "head_max": 62.0, "elevation": 10.0},
            {"id": "W6", "head_min": 25.0, "head_max": 62.0, "elevation": 12.0},
            {"id": "W7", "head_min": 20.0, "head_max": 62.0, "elevation": 5.0},
            {"id": "W8", "head_min": 20.0, "head_max": 62.0, "elevation": 3.0},
        ],
        "pipes": [
            {"id": "P12", "from": "W1", "to": "W2", "kind": "pump", "r_w": 2.0e-5, "f_min": 0.0, "f_max": 400.0,
             "pump": {"head_gain_max": 90.0, "a1": 0.13, "a0": 30.0, "efficiency": 0.8, "power_bus": "611"}},
            {"id": "P23", "from": "W2", "to": "W3", "kind": "regular", "r_w": 1.0e-4, "f_min": -300.0,
             "f_max": 400.0},
            {"id": "P34", "from": "W3", "to": "W4", "kind": "regular", "r_w": 1.2e-4, "f_min": -100.0,
             "f_max": 300.0},
            {"id": "P45", "from": "W4", "to": "W5", "kind": "regular", "r_w": 2.0e-4, "f_min": -50.0,
             "f_max": 150.0},
            {"id": "P46", "from": "W4", "to": "W6", "kind": "regular", "r_w": 2.0e-4, "f_min": -50.0,
             "f_max": 150.0},
            {"id": "P67", "from": "W6", "to": "W7", "kind": "prv", "f_min": 0.0, "f_max": 100.0,
             "prv_limit": 30.0},
            {"id": "P58", "from": "W5", "to": "W8", "kind": "regular", "r_w": 3.0e-4, "f_min": -40.0,
             "f_max": 100.0},
        ],
        "tanks": [{"node": "W3", "area": 100.0, "v_min": 100.0, "v_max": 1000.0, "v_init": 500.0,
                   "flow_min": -300.0, "flow_max": 300.0}],
        "desalination": [{"id": "D1", "node": "W1", "power_bus": "652", "f_max": 400.0,
                          "seg_energy": [0.00070, 0.00072, 0.00078, 0.00090]}],
        "hydrogen": {"bus": "680", "water_node": "W8", "xi_we_p": 90.9, "xi_we_w": 0.01, "xi_fc_h": 0.0036,
                     "p_we_min": 0.03, "p_we_max": 0.3, "h_fc_min": 2.0, "h_fc_max": 30.0, "s_hs_max": 0.35,
                     "storage_min": 20.0, "storage_max": 500.0, "storage_init": 200.0},
        "carbon": {"capture_ratio_max": 0.9, "xi_chi_c": 16.0 / 44.0, "rho_chi": 0.001, "xi_chi_h": 8.0 / 44.0,
                   "storage_cap": 300.0},
        "weights": {"alpha1": 0.1, "alpha2": 1.25, "alpha3": 0.0001, "alpha4": 0.00004},
    }


def reference_network() -> Network:
    return load_network(reference_network_dict())


def load_shape(hours: np.ndarray) -> np.ndarray:
    """Normalized daily electric load shape (night trough, evening peak)."""
    h = np.mod(hours, 24.0)
    return 0.62 + 0.22 * np.exp(-((h - 11.0) / 3.5) ** 2) + 0.38 * np.exp(-((h - 19.0) / 2.5) ** 2)


def water_shape(hours: np.ndarray) -> np.ndarray:
    h = np.mod(hours, 24.0)
    return 0.45 + 0.9 * np.exp(-((h - 7.5) / 1.8) ** 2) + 0.7 * np.exp(-((h - 19.5) / 2.2) ** 2)


def synthetic_day(rng: np.random.Generator, step_minutes: int = 5, mean_wind: float | None = None) -> Scenario:
    """One day of wind, load and demand curves on the reference case."""
    n = 24 * 60 // step_minutes
    hours = np.arange(n) * step_minutes / 60.0
    mean_wind = rng.uniform(6.0, 11.0) if mean_wind is None else mean_wind
    # hourly wind anchors with AR(1) variation, interpolated to the step
    anchors = np.empty(26)
    anchors[0] = mean_wind + rng.normal(0, 2.0)
    for k in range(1, 26):
        anchors[k] = mean_wind + 0.8 * (anchors[k - 1] - mean_wind) + rng.normal(0, 1.4)
    wind = np.clip(np.interp(hours, np.arange(26), anchors), 0.0, 24.0)
    scale = rng.uniform(0.9, 1.1)
    shape = load_shape(hours) * scale
    p_load = {b: shape * kw / 1000.0 / BASE_MVA for b, (kw, _) in _LOADS_KW.items()}
    q_load = {b: shape * kvar / 1000.0 / BASE_MVA for b, (_, kvar) in _LOADS_KW.items()}
    wshape = water_shape(hours) * rng.uniform(0.9, 1.1)
    wdem = {n_: wshape * (WATER_DEMAND.get(n_, 0.0)) for n_ in ("W1", "W2", "W3", "W4", "W5", "W6", "W7", "W8")}
    h2 = np.full(n, rng.uniform(3.0, 7.0))
    return Scenario(step_minutes, n, wind, p_load, q_load, wdem, h2)


def reference_history(days: int = 15, seed: int = 2008, step_minutes: int = 5) -> list[Scenario]:
    rng = np.random.default_rng(seed)
    return [synthetic_day(rng, step_minutes) for _ in range(days)]


def packaged_network_path():
    return resources.files("ewh_nexus") / "data" / "reference_network.json"


def write_reference_files(directory) -> None:
    """Regenerate the packaged network and curve files."""
    from pathlib import Path

    from .model import write_scenario_csv

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "reference_network.json").write_text(json.dumps(reference_network_dict(), indent=2))
    hist = reference_history()
    write_scenario_csv(hist[0], directory / "reference_day.csv")
    curves = directory / "history"
    curves.mkdir(exist_ok=True)
    for k, day in enumerate(hist):
        write_scenario_csv(day, curves / f"day_{k:02d}.csv")
