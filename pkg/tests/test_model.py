import copy
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ewh_nexus.model import (
    NetworkError,
    Scenario,
    ScenarioError,
    SystemState,
    WindPark,
    check_scenario,
    interpolate_series,
    load_network,
    read_scenario_csv,
    resample_scenario,
    serialize_network,
    wind_to_power,
    write_scenario_csv,
)

from conftest import make_scenario


def _errors(doc):
    with pytest.raises(NetworkError) as exc:
        load_network(doc)
    return exc.value.violations


def test_reference_network_sizes(ref_net):
    assert len(ref_net.buses) == 13
    assert len(ref_net.branches) == 12
    assert len(ref_net.nodes) == 8
    assert sum(b.has_hydrogen_system for b in ref_net.buses) == 1


def test_reference_file_loads_from_package_data():
    from ewh_nexus.reference import packaged_network_path

    net = load_network(packaged_network_path().read_text())
    assert (len(net.buses), len(net.branches), len(net.nodes)) == (13, 12, 8)


def test_dangling_branch_reference(two_bus_dict):
    two_bus_dict["branches"].append({"from": "1", "to": "99", "r": 0.01, "x": 0.01, "s_max": 1.0})
    errs = _errors(two_bus_dict)
    assert any("99" in e and "dangling" in e for e in errs)


def test_bound_inversion(two_bus_dict):
    two_bus_dict["buses"][1].update(v_min=1.1, v_max=0.9)
    errs = _errors(two_bus_dict)
    assert any("bound inversion" in e for e in errs)


def test_duplicate_id(two_bus_dict):
    two_bus_dict["buses"].append(dict(two_bus_dict["buses"][1]))
    assert any("duplicate" in e for e in _errors(two_bus_dict))


def test_cycle_is_not_a_tree(two_bus_dict):
    two_bus_dict["buses"].append({"id": "3", "v_min": 0.81, "v_max": 1.21})
    two_bus_dict["branches"] += [
        {"from": "2", "to": "3", "r": 0.01, "x": 0.01, "s_max": 1.0},
        {"from": "1", "to": "3", "r": 0.01, "x": 0.01, "s_max": 1.0},
    ]
    assert any("tree" in e for e in _errors(two_bus_dict))


def test_unknown_key_rejected(two_bus_dict):
    two_bus_dict["buses"][0]["vmin"] = 0.9
    assert any("vmin" in e for e in _errors(two_bus_dict))
    doc = copy.deepcopy(two_bus_dict)
    doc["buses"][0].pop("vmin")
    doc["extras"] = {}
    assert any("extras" in e for e in _errors(doc))


def test_pump_unit_constant_is_fixed(small_dict):
    small_dict["pipes"][0]["pump"]["unit_const"] = 2.7
    assert any("2.725" in e for e in _errors(small_dict))


def test_network_round_trip(ref_net, small_net, two_bus):
    for net in (ref_net, small_net, two_bus):
        again = load_network(serialize_network(net))
        assert again == net
        assert serialize_network(again) == serialize_network(net)


def test_infinite_bounds_survive_json(small_dict):
    small_dict["carbon"]["storage_cap"] = None
    net = load_network(small_dict)
    assert math.isinf(net.carbon.storage_cap)
    assert math.isinf(load_network(json.loads(serialize_network(net))).carbon.storage_cap)


# -- time series -------------------------------------------------------

def test_interpolate_midpoint():
    np.testing.assert_allclose(interpolate_series([(0, 0.0), (60, 12.0)], 30, 2), [0.0, 6.0])


def test_interpolate_constant():
    np.testing.assert_allclose(interpolate_series([(0, 5.0), (120, 5.0)], 5, 24), np.full(24, 5.0))


def test_interpolate_span_error():
    with pytest.raises(ScenarioError, match="12 steps"):
        interpolate_series([(0, 0.0), (60, 6.0)], 5, 20)


def test_interpolate_non_monotone():
    with pytest.raises(ScenarioError):
        interpolate_series([(0, 0.0), (30, 1.0), (20, 2.0)], 5, 2)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=3, max_size=12), st.sampled_from([5, 10, 15]))
def test_interpolate_reproduces_knots(values, step):
    t = [i * 2 * step for i in range(len(values))]
    out = interpolate_series(list(zip(t, values)), step, 2 * (len(values) - 1))
    np.testing.assert_allclose(out[::2], values[:-1], atol=1e-12)


PARK = WindPark("W", "1", rated_power=1.0, cut_in=3.0, rated_speed=12.0, cut_out=25.0)


def test_wind_curve_examples():
    assert wind_to_power(2.9, PARK) == 0.0
    assert wind_to_power(12.0, PARK) == 1.0
    assert wind_to_power(7.0, PARK) == pytest.approx((343 - 27) / (1728 - 27), abs=1e-12)
    assert wind_to_power(7.0, PARK) == pytest.approx(0.1858, abs=1e-4)
    assert wind_to_power(25.0, PARK) == 1.0
    assert wind_to_power(25.01, PARK) == 0.0


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 40), st.floats(0, 40))
def test_wind_curve_monotone_and_zero_outside(a, b):
    lo, hi = sorted((a, b))
    if PARK.cut_in <= lo and hi <= PARK.rated_speed:
        assert wind_to_power(lo, PARK) <= wind_to_power(hi, PARK) + 1e-15
    for v in (a, b):
        if v < PARK.cut_in or v > PARK.cut_out:
            assert wind_to_power(v, PARK) == 0.0


# -- scenarios ---------------------------------------------------------

def test_scenario_length_mismatch():
    with pytest.raises(ScenarioError, match="length"):
        Scenario(5, 3, np.ones(3), {"1": np.ones(2)}, {}, {}, np.zeros(3))


def test_scenario_negative_demand():
    with pytest.raises(ScenarioError, match="negative"):
        Scenario(5, 2, np.ones(2), {}, {}, {"A": np.array([1.0, -1.0])}, np.zeros(2))


def test_scenario_csv_round_trip(small_dict):
    sc = make_scenario(small_dict, 6, seed=3)
    buf = io.StringIO()
    write_scenario_csv(sc, buf)
    again = read_scenario_csv(io.StringIO(buf.getvalue()))
    assert again.equals(sc)
    assert buf.getvalue().splitlines()[0].startswith("t_min,wind_mps")


def test_scenario_csv_unknown_column():
    with pytest.raises(ScenarioError, match="unknown"):
        read_scenario_csv(io.StringIO("t_min,wind_mps,bogus\n0,1,2\n5,1,2\n"))


def test_window_wraps(small_dict):
    sc = make_scenario(small_dict, 4, seed=1)
    w = sc.window(3, 3)
    assert w.horizon_steps == 3
    np.testing.assert_array_equal(w.wind_speed, sc.wind_speed[[3, 0, 1]])


def test_resample_halves_step(small_dict):
    sc = make_scenario(small_dict, 7, seed=2)
    fine = resample_scenario(sc, 5)
    assert fine is sc
    coarse = resample_scenario(sc, 10)
    assert coarse.step_minutes == 10 and coarse.horizon_steps == 3
    np.testing.assert_allclose(coarse.wind_speed, sc.wind_speed[[0, 2, 4]])


def test_check_scenario_reports_missing_series(small_net, small_dict):
    sc = make_scenario(small_dict, 2)
    check_scenario(small_net, sc)
    bad = Scenario(5, 2, sc.wind_speed, {}, sc.q_load, sc.water_demand, sc.h2_demand)
    with pytest.raises(ScenarioError, match="p_load_1"):
        check_scenario(small_net, bad)


def test_initial_state(small_net):
    s = SystemState.initial(small_net)
    assert s.tank_volume == {"B": 200.0}
    assert s.h2_storage == 30.0
