import copy

import numpy as np
import pytest

from ewh_nexus.model import Scenario, load_network
from ewh_nexus.reference import reference_network, reference_network_dict

TWO_BUS = {
    "base_mva": 1.0,
    "buses": [
        {"id": "1", "v_min": 0.81, "v_max": 1.21, "has_diesel": True},
        {"id": "2", "v_min": 0.81, "v_max": 1.21, "has_wind": True},
    ],
    "branches": [{"from": "1", "to": "2", "r": 0.01, "x": 0.02, "s_max": 2.0}],
    "diesel": [{"id": "G", "bus": "1", "p_min": 0.0, "p_max": 2.0, "q_min": -1.0, "q_max": 1.0,
                "carbon_factor": 700.0}],
    "wind": [{"id": "W", "bus": "2", "rated_power": 1.0, "cut_in": 3.0, "rated_speed": 12.0, "cut_out": 25.0}],
    "weights": {"alpha1": 0.1, "alpha2": 1.0, "alpha3": 0.0, "alpha4": 0.0},
}

# three nodes: desalination + pump feeding a tank node feeding a demand node with the electrolyser
SMALL_NEXUS = {
    "base_mva": 1.0,
    "buses": [
        {"id": "1", "v_min": 0.81, "v_max": 1.21, "has_diesel": True},
        {"id": "2", "v_min": 0.81, "v_max": 1.21, "has_wind": True, "has_hydrogen_system": True},
        {"id": "3", "v_min": 0.81, "v_max": 1.21},
    ],
    "branches": [
        {"from": "1", "to": "2", "r": 0.01, "x": 0.02, "s_max": 3.0},
        {"from": "1", "to": "3", "r": 0.02, "x": 0.02, "s_max": 3.0},
    ],
    "diesel": [{"id": "G", "bus": "1", "p_min": 0.05, "p_max": 2.0, "q_min": -1.0, "q_max": 1.0,
                "carbon_factor": 700.0}],
    "wind": [{"id": "W", "bus": "2", "rated_power": 1.0, "cut_in": 3.0, "rated_speed": 12.0, "cut_out": 25.0}],
    "nodes": [
        {"id": "A", "head_min": 0.0, "head_max": 10.0},
        {"id": "B", "head_min": 20.0, "head_max": 40.0, "elevation": 20.0},
        {"id": "C", "head_min": 5.0, "head_max": 40.0, "elevation": 5.0},
    ],
    "pipes": [
        {"id": "AB", "from": "A", "to": "B", "kind": "pump", "r_w": 1e-4, "f_min": 0.0, "f_max": 100.0,
         "pump": {"head_gain_max": 60.0, "a1": 0.01, "a0": 20.0, "efficiency": 0.8, "power_bus": "3"}},
        {"id": "BC", "from": "B", "to": "C", "kind": "regular", "r_w": 1e-3, "f_min": -50.0, "f_max": 100.0},
    ],
    "tanks": [{"node": "B", "area": 20.0, "v_min": 20.0, "v_max": 400.0, "v_init": 200.0,
               "flow_min": -100.0, "flow_max": 100.0}],
    "desalination": [{"id": "D", "node": "A", "power_bus": "3", "f_max": 100.0,
                      "seg_energy": [0.005, 0.004, 0.0035, 0.0034]}],
    "hydrogen": {"bus": "2", "water_node": "C", "xi_we_p": 18.0, "xi_we_w": 0.01, "xi_fc_h": 0.018,
                 "p_we_min": 0.05, "p_we_max": 0.5, "h_fc_min": 1.0, "h_fc_max": 10.0, "s_hs_max": 0.6,
                 "storage_min": 0.0, "storage_max": 100.0, "storage_init": 30.0},
    "carbon": {"capture_ratio_max": 0.9, "xi_chi_c": 0.36, "rho_chi": 0.0005, "storage_cap": 50.0},
    "weights": {"alpha1": 0.1, "alpha2": 1.0, "alpha3": 0.0001, "alpha4": 0.00005},
}


def make_scenario(net_dict, T, wind=8.0, load=0.3, wdem=20.0, h2=1.0, step=5, seed=None):
    rng = np.random.default_rng(seed)
    jitter = (lambda: rng.uniform(0.7, 1.3, T)) if seed is not None else (lambda: np.ones(T))
    buses = [b["id"] for b in net_dict["buses"]]
    nodes = [n["id"] for n in net_dict.get("nodes", [])]
    p = {b: (load * jitter() if i else np.zeros(T)) for i, b in enumerate(buses)}
    q = {b: 0.4 * v for b, v in p.items()}
    w = {n: (wdem * jitter() if i == len(nodes) - 1 else np.zeros(T)) for i, n in enumerate(nodes)}
    wind_s = np.full(T, float(wind)) * (jitter() if seed is not None else 1.0)
    return Scenario(step, T, wind_s, p, q, w, np.full(T, float(h2)))


@pytest.fixture
def two_bus_dict():
    return copy.deepcopy(TWO_BUS)


@pytest.fixture
def two_bus():
    return load_network(copy.deepcopy(TWO_BUS))


@pytest.fixture
def small_dict():
    return copy.deepcopy(SMALL_NEXUS)


@pytest.fixture
def small_net():
    return load_network(copy.deepcopy(SMALL_NEXUS))


@pytest.fixture(scope="session")
def ref_net():
    return reference_network()


@pytest.fixture
def ref_dict():
    return reference_network_dict()


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
