import json

import numpy as np
import pytest

from ewh_nexus.acivp import (
    Predictor,
    Strategy,
    StrategyError,
    TrainingSet,
    build_training_set,
    complete_strategy,
    extract_strategy,
    featurize,
    fit,
    load_predictor,
    load_training_set,
    merge_by_binaries,
    predict,
    save_predictor,
    save_training_set,
    solve_surrogate,
    solve_with_acivp,
    train,
)
from ewh_nexus.assembly import assemble
from ewh_nexus.bnb import solve_micp
from ewh_nexus.hydrogen import h2_name
from ewh_nexus.model import Scenario
from ewh_nexus.program import ProgramBuilder, restrict
from ewh_nexus.solver import SolverConfig, solve_continuous

from conftest import make_scenario


def _toy(c: float, cap_l: float):
    """min -x + c z  s.t. x <= 5 + 5 z ("cap"), x <= L ("lim"): three strategy regimes."""
    b = ProgramBuilder()
    x = b.var("x", 0.0, 100.0)
    z = b.var("z", binary=True)
    b.le(x - 5.0 * z, 5.0, "cap")
    b.le(x, cap_l, "lim")
    b.minimize(-1.0 * x + c * z)
    prog = b.build()
    sc = Scenario(5, 1, np.array([c]), {}, {}, {}, np.array([cap_l]))
    return sc, prog, solve_micp(prog)


REGIMES = [(2.0, 20.0), (8.0, 20.0), (8.0, 3.0)]


def test_featurize_length_and_determinism():
    sc = Scenario(5, 2, np.array([5.0, 6.0]), {"1": np.ones(2)}, {"1": np.zeros(2)}, {"A": np.full(2, 0.3)},
                  np.zeros(2))
    phi = featurize(sc)
    assert phi.shape == (8,)
    np.testing.assert_array_equal(phi, [5, 6, 1, 1, 0.3, 0.3, 0, 0])
    np.testing.assert_array_equal(featurize(sc), phi)


def test_featurize_locality(small_dict):
    a = make_scenario(small_dict, 4)
    b = make_scenario(small_dict, 4)
    b.wind_speed[2] += 1.0
    diff = np.flatnonzero(featurize(a) != featurize(b))
    assert diff.tolist() == [2]


def test_extract_strategy_readout():
    b = ProgramBuilder()
    x = b.var("x", 0.0, 10.0)
    z = b.var("b", binary=True)
    b.le(x - 4.0 * z, 0.0, "cap")
    b.le(x, 9.0, "loose")
    b.minimize(-1.0 * x + 0.5 * z)
    prog = b.build()
    strat = extract_strategy(prog, solve_micp(prog))
    assert dict(strat.binaries) == {"b": 1}
    assert strat.active_set == {"cap"}


def test_extract_rejects_non_optimal():
    from ewh_nexus.solver import Solution

    with pytest.raises(StrategyError):
        extract_strategy(_toy(2, 20)[1], Solution("infeasible", None, np.inf))


def test_fingerprint_stable():
    a = Strategy({"b": 1, "c": 0}, frozenset({"x", "y"}))
    b = Strategy({"c": 0, "b": 1}, frozenset({"y", "x"}))
    assert a.fingerprint == b.fingerprint
    assert a.fingerprint != Strategy({"b": 0, "c": 0}, frozenset({"x", "y"})).fingerprint
    assert Strategy.from_dict(json.loads(json.dumps(a.to_dict()))).fingerprint == a.fingerprint


def test_dedup_three_regimes():
    samples = [_toy(*REGIMES[i % 3]) for i in range(10)]
    ts = build_training_set(samples)
    assert ts.n_records == 10
    assert len(ts.strategies) == 3


def test_merge_by_binaries_pools_active_sets():
    ts = build_training_set([_toy(*r) for r in REGIMES])
    merged = merge_by_binaries(ts)
    assert len(ts.strategies) == 3 and len(merged.strategies) == 2
    zero = next(s for s in merged.strategies.values() if s.binaries["z"] == 0)
    parts = [s.active_set for s in ts.strategies.values() if s.binaries["z"] == 0]
    assert zero.active_set == parts[0] | parts[1]
    assert merged.strategy_ids[1] == merged.strategy_ids[2] == zero.fingerprint
    np.testing.assert_array_equal(merged.features, ts.features)


def test_merged_strategy_still_optimal(small_fleet):
    _, samples = small_fleet
    pred, _ = train(samples, k=3, merge=True)
    for sc, prog, sol in samples[:3]:
        got, diag = solve_with_acivp(prog, pred, featurize(sc))
        if not diag.fallback:
            assert got.objective == pytest.approx(sol.objective, rel=1e-5, abs=1e-7)
            assert prog.violations(got.x, 1e-6) == []


def test_duplicate_samples_single_strategy():
    ts = build_training_set([_toy(2.0, 20.0) for _ in range(4)])
    assert len(ts.strategies) == 1


def test_single_sample_predicts_everywhere():
    pred, ts = train([_toy(2.0, 20.0)], k=3)
    (only,) = ts.strategies.values()
    for q in ([0.0, 0, 0, 0], [100.0, 0, 0, -5]):
        assert predict(pred, np.array(q)) == [only]


def _manual_predictor(points, ids, k):
    strategies = {i: Strategy({"z": n}, frozenset({i})) for n, i in enumerate(sorted(set(ids)))}
    # tag the strategies by id so the fingerprint is not the key used here
    ts = TrainingSet(np.array(points, float), list(ids), strategies)
    return fit(ts, k), strategies


def test_predict_nearest_first_and_saturation():
    pred, strat = _manual_predictor([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], ["a", "b", "c"], 1)
    pred = Predictor(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]), ("a", "b", "c"), strat,
                     np.zeros(2), np.ones(2), 1)
    assert predict(pred, np.array([0.0, 0.0])) == [strat["a"]]
    # distances 1 and 2 from the query: k=1 keeps the nearer one only
    pred2 = Predictor(np.array([[1.0, 0.0], [2.0, 0.0]]), ("b", "c"), strat, np.zeros(2), np.ones(2), 1)
    assert predict(pred2, np.array([0.0, 0.0])) == [strat["b"]]
    assert predict(pred, np.array([2.0, 0.0]), k=10) == [strat["c"], strat["b"], strat["a"]]


def test_predict_deduplicates_neighbours():
    pts = [[0.0], [0.1], [0.2], [5.0]]
    strat = {"a": Strategy({"z": 0}, frozenset()), "b": Strategy({"z": 1}, frozenset())}
    pred = Predictor(np.array(pts), ("a", "a", "a", "b"), strat, np.zeros(1), np.ones(1), 4)
    assert predict(pred, np.array([0.0])) == [strat["a"], strat["b"]]


def test_dimension_mismatch():
    pred, _ = train([_toy(2.0, 20.0)])
    with pytest.raises(StrategyError, match="dimension"):
        predict(pred, np.zeros(3))


def test_normalization_constant_dimension():
    ts = TrainingSet(np.array([[1.0, 5.0], [3.0, 5.0]]), ["a", "a"], {"a": Strategy({}, frozenset())})
    mean, scale = ts.normalization()
    np.testing.assert_allclose(mean, [2.0, 0.0])
    np.testing.assert_allclose(scale, [1.0, 1.0])


@pytest.fixture(scope="module")
def small_fleet():
    from ewh_nexus.model import load_network
    from conftest import SMALL_NEXUS

    net = load_network(SMALL_NEXUS)
    samples = []
    for seed in range(8):
        sc = make_scenario(SMALL_NEXUS, 3, seed=seed)
        prog = assemble(net, sc)
        samples.append((sc, prog, solve_micp(prog)))
    return net, samples


def test_true_strategy_reproduces_optimum(small_fleet):
    _, samples = small_fleet
    cfg = SolverConfig()
    for sc, prog, sol in samples:
        strat = complete_strategy(prog, extract_strategy(prog, sol), cfg)
        res = solve_surrogate(prog, strat, cfg)
        assert res.x is not None
        assert prog.objective(res.x) == pytest.approx(sol.objective, rel=1e-5, abs=1e-7)
        assert prog.violations(res.x, cfg.feasibility_tol) == []


def test_acivp_with_true_strategy(small_fleet):
    _, samples = small_fleet
    pred, ts = train(samples, k=3)
    sc, prog, sol = samples[0]
    got, diag = solve_with_acivp(prog, pred, featurize(sc))
    assert not diag.fallback and diag.candidate == 0
    assert got.objective == pytest.approx(sol.objective, rel=1e-5, abs=1e-7)
    assert prog.violations(got.x, 1e-6) == []


def test_infeasible_candidate_skipped(small_fleet):
    _, samples = small_fleet
    sc, prog, sol = samples[1]
    true = complete_strategy(prog, extract_strategy(prog, sol))
    bad_bins = dict(true.binaries)
    bad_bins[h2_name("bwe", 0)] = 1
    bad_bins[h2_name("bfc", 0)] = 1
    bad = Strategy(bad_bins, true.active_set)
    assert solve_surrogate(prog, bad, SolverConfig()).x is None
    phi = featurize(sc)
    pred = Predictor(np.array([phi, phi + 1.0]), (bad.fingerprint, true.fingerprint),
                     {bad.fingerprint: bad, true.fingerprint: true}, np.zeros(phi.size), np.ones(phi.size), 2)
    got, diag = solve_with_acivp(prog, pred, phi)
    assert not diag.fallback
    assert diag.candidate == 1 and diag.candidates_tried == 2
    assert got.objective == pytest.approx(sol.objective, rel=1e-5, abs=1e-7)


def test_fallback_equals_full_solve(small_fleet):
    _, samples = small_fleet
    sc, prog, sol = samples[2]
    phi = featurize(sc)
    junk = Strategy({"nope": 0}, frozenset())
    pred = Predictor(np.array([phi]), (junk.fingerprint,), {junk.fingerprint: junk}, np.zeros(phi.size),
                     np.ones(phi.size), 1)
    got, diag = solve_with_acivp(prog, pred, phi)
    assert diag.fallback
    ref = solve_micp(prog)
    assert got.objective == ref.objective
    np.testing.assert_array_equal(got.x, ref.x)


def test_store_round_trip(tmp_path, small_fleet):
    _, samples = small_fleet
    pred, ts = train(samples, k=2)
    save_predictor(pred, tmp_path / "m.json")
    again = load_predictor(tmp_path / "m.json")
    assert again.k == 2 and again.strategy_ids == pred.strategy_ids
    np.testing.assert_allclose(again.X, pred.X, atol=1e-12)
    phi = featurize(samples[3][0])
    assert [s.fingerprint for s in predict(again, phi)] == [s.fingerprint for s in predict(pred, phi)]
    save_training_set(ts, tmp_path / "d")
    ts2 = load_training_set(tmp_path / "d")
    assert ts2.strategy_ids == ts.strategy_ids
    np.testing.assert_array_equal(ts2.features, ts.features)


def test_store_rejects_tampering(tmp_path):
    pred, _ = train([_toy(2.0, 20.0)])
    path = tmp_path / "m.json"
    save_predictor(pred, path)
    doc = json.loads(path.read_text())
    sid = next(iter(doc["strategies"]))
    doc["strategies"][sid]["binaries"]["z"] = 0
    path.write_text(json.dumps(doc))
    with pytest.raises(StrategyError, match="fingerprint"):
        load_predictor(path)
    doc["version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(StrategyError, match="version"):
        load_predictor(path)


def test_reference_instance_strategy(ref_net):
    from ewh_nexus.reference import reference_history

    sc = reference_history(days=1)[0].window(60, 24)
    prog = assemble(ref_net, sc)
    cfg = SolverConfig(rounding=True, mip_gap=1e-6)
    sol = solve_micp(prog, cfg)
    assert sol.optimal
    strat = complete_strategy(prog, extract_strategy(prog, sol), cfg)
    sub = restrict(prog, strat.binaries, strat.active_set)
    sur = solve_continuous(sub, cfg)
    assert sur.objective == pytest.approx(sol.objective, rel=1e-5)
    assert prog.violations(sub.lift(sur.x), cfg.feasibility_tol) == []
