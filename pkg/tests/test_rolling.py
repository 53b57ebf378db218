import math

import numpy as np
import pytest

from ewh_nexus.acivp import train
from ewh_nexus.assembly import assemble
from ewh_nexus.bnb import solve_micp
from ewh_nexus.model import Scenario, SystemState, load_network
from ewh_nexus.rolling import (
    Perturbation,
    RollingConfig,
    draw_scenario,
    fallback_dispatch,
    forecast,
    generate_training_data,
    read_results_csv,
    report,
    results_from_rows,
    run_rolling,
    summarize,
)

from conftest import make_scenario


def test_config_validation():
    with pytest.raises(ValueError):
        RollingConfig(horizon_steps=0)
    with pytest.raises(ValueError):
        RollingConfig(mode="fast")
    with pytest.raises(ValueError):
        RollingConfig(wind_noise=-1.0)


def test_predictor_required_exactly_in_acivp_mode(two_bus, two_bus_dict):
    sc = make_scenario(two_bus_dict, 2)
    with pytest.raises(ValueError, match="predictor"):
        run_rolling(two_bus, sc, RollingConfig(mode="acivp"))


def test_step_mismatch_rejected(two_bus, two_bus_dict):
    from ewh_nexus.model import ScenarioError

    with pytest.raises(ScenarioError):
        run_rolling(two_bus, make_scenario(two_bus_dict, 2, step=15), RollingConfig())


def test_forecast_keeps_realized_first_interval():
    sc = Scenario(5, 6, np.arange(6.0), {}, {}, {}, np.zeros(6))
    rng = np.random.default_rng(0)
    f = forecast(sc, 2, 4, 0.0, rng)
    np.testing.assert_array_equal(f.wind_speed, [2.0, 2.0, 2.0, 2.0])
    g = forecast(sc, 2, 4, 1.0, np.random.default_rng(0))
    assert g.wind_speed[0] == 2.0 and np.all(g.wind_speed >= 0)


def test_day_at_five_minutes_gives_288_records(two_bus, two_bus_dict):
    sc = make_scenario(two_bus_dict, 288, seed=1)
    out = run_rolling(two_bus, sc, RollingConfig(horizon_steps=1))
    assert len(out) == 288
    assert [r.step for r in out] == list(range(288))
    assert out[-1].time_min == 287 * 5


def test_constant_inputs_modes_agree(small_net, small_dict):
    sc = make_scenario(small_dict, 6)
    cfg = RollingConfig(horizon_steps=3, steps=3, wind_noise=0.0)
    full = run_rolling(small_net, sc, cfg)
    # strategies harvested from the same windows the full run solved
    samples = []
    state = SystemState.initial(small_net)
    for s, rec in enumerate(full):
        win = sc.window(s, 3)
        prog = assemble(small_net, win, state=state)
        samples.append((win, prog, solve_micp(prog)))
        state = SystemState(rec.tank_volume, rec.h2_storage)
    pred, _ = train(samples, k=3)
    fast = run_rolling(small_net, sc, RollingConfig(horizon_steps=3, steps=3, wind_noise=0.0, mode="acivp"), pred)
    for a, b in zip(full, fast):
        assert not b.fallback
        assert b.objective == pytest.approx(a.objective, rel=1e-5, abs=1e-7)
        assert b.p_dg == pytest.approx(a.p_dg, abs=1e-5)
        assert b.h2_storage == pytest.approx(a.h2_storage, abs=1e-5)
        assert b.tank_volume["B"] == pytest.approx(a.tank_volume["B"], abs=1e-5)


def test_fixed_seed_is_reproducible(small_net, small_dict):
    sc = make_scenario(small_dict, 4, seed=3)
    cfg = RollingConfig(horizon_steps=2, seed=7)
    a = report(run_rolling(small_net, sc, cfg), timing=False)
    b = report(run_rolling(small_net, sc, cfg), timing=False)
    assert a == b
    assert "solve_time_s" not in a.splitlines()[0]


def test_storage_carried_between_steps(small_net, small_dict):
    sc = make_scenario(small_dict, 3, seed=4)
    out = run_rolling(small_net, sc, RollingConfig(horizon_steps=2, wind_noise=0.0))
    vol = small_dict["tanks"][0]["v_init"]
    for r in out:
        vol -= (5 / 60) * r.tank_flow["B"]
        assert r.tank_volume["B"] == pytest.approx(vol, abs=1e-6)


def test_infeasible_step_uses_fallback(small_dict):
    small_dict["hydrogen"]["storage_init"] = 0.0
    small_dict["hydrogen"]["p_we_max"] = 0.06
    net = load_network(small_dict)
    sc = make_scenario(small_dict, 2, h2=500.0)
    (rec,) = run_rolling(net, sc, RollingConfig(horizon_steps=1, steps=1))
    assert rec.fallback and rec.infeasible and rec.status == "infeasible"
    assert rec.tank_volume == {"B": small_dict["tanks"][0]["v_init"]}
    assert rec.h2_storage == 0.0
    assert rec.pump_on == {"AB": 0} and rec.desal_segment == {"D": 0}


def test_fallback_dispatch_covers_net_load(two_bus, two_bus_dict):
    sc = make_scenario(two_bus_dict, 1, wind=0.0, load=0.7)
    rec, state = fallback_dispatch(two_bus, sc, SystemState({}, None), 0, 0.0, "full")
    assert rec.p_dg == pytest.approx(0.7)
    assert rec.objective == pytest.approx(sc.dt_hours * 0.7)
    assert math.isnan(rec.h2_storage)


def test_zero_perturbation_single_curve_single_strategy(small_net, small_dict):
    day = make_scenario(small_dict, 3, seed=9)
    data = generate_training_data(small_net, [day], 3, perturbation=0.0, seed=1, horizon=3)
    assert len(data.samples) == 3 and data.dropped == 0
    for s in data.samples:
        np.testing.assert_array_equal(s.scenario.wind_speed, day.wind_speed)
    _, ts = train(data.samples)
    assert len(ts.strategies) == 1


def test_same_seed_same_samples(small_dict):
    day = make_scenario(small_dict, 6, seed=9)
    a = [draw_scenario([day], 4, Perturbation(0.2, 2), np.random.default_rng(5)) for _ in range(1)]
    b = [draw_scenario([day], 4, Perturbation(0.2, 2), np.random.default_rng(5)) for _ in range(1)]
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.wind_speed, y.wind_speed)
        for k in x.p_load:
            np.testing.assert_array_equal(x.p_load[k], y.p_load[k])


def test_training_data_argument_checks(small_net, small_dict):
    with pytest.raises(ValueError):
        generate_training_data(small_net, [make_scenario(small_dict, 2)], 0)
    with pytest.raises(ValueError):
        generate_training_data(small_net, [], 1)


def test_report_csv_and_summary(two_bus, two_bus_dict):
    out = run_rolling(two_bus, make_scenario(two_bus_dict, 3), RollingConfig(horizon_steps=1))
    text = report(out)
    lines = text.splitlines()
    assert len(lines) == 4
    rows = read_results_csv(text)
    times, falls, objs = results_from_rows(rows)
    assert len(times["full"]) == 3 and falls["full"] == 0
    assert objs["full"] == pytest.approx(sum(r.objective for r in out), rel=1e-9)
    assert report(out, "summary").startswith("full: steps=3")


def test_summary_speedup_line():
    text = summarize({"full": [1.0, 2.0, 3.0], "acivp": [0.1, 0.2, 0.3]})
    assert text.splitlines()[-1] == "speedup=10.00"


def test_report_rejects_empty_and_unknown_format(two_bus, two_bus_dict):
    with pytest.raises(ValueError):
        report([])
    out = run_rolling(two_bus, make_scenario(two_bus_dict, 1), RollingConfig(horizon_steps=1))
    with pytest.raises(ValueError):
        report(out, "xml")
