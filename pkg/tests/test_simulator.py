from __future__ import annotations

import math

import numpy as np
import pytest

from wfopt.errors import ScenarioError, ValidationError
from wfopt.explorer import WorkflowConfiguration
from wfopt.ir import Cond, Leaf, Seq
from wfopt.profiles import SubAgentConfig
from wfopt.proxy import ExecutionModel, estimate_accuracy, estimate_latency
from wfopt.simulator import (
    LatencyModel,
    Restriction,
    TruthScenario,
    brute_force_frontier,
    enumerate_restricted,
    measure_graph,
    parse_scenario,
    scenario_from_profiles,
    scenario_to_json,
    simulate_once,
    _simulate_vectorized,
)

from conftest import make_table


CFG = SubAgentConfig("m", 1)


def scenario_of(values, seed=1234, correlation=0.0, latency_model=LatencyModel.DETERMINISTIC,
                cv=0.0):
    entries = {(r, CFG): (p, l) for r, (p, l) in values.items()}
    return TruthScenario(entries, latency_model, cv, correlation, seed)


def assign(values):
    return {r: CFG for r in values}


def test_certain_leaf_is_deterministic():
    vals = {"a": (1.0, 2.0)}
    sc = scenario_of(vals)
    for q in range(20):
        assert simulate_once(Leaf("a"), assign(vals), sc, q) == (True, 2.0)


def test_forced_fallback():
    vals = {"a": (0.0, 1.0), "b": (1.0, 2.0)}
    sc = scenario_of(vals)
    g = Cond(Leaf("a"), Leaf("b"))
    for q in range(20):
        assert simulate_once(g, assign(vals), sc, q) == (True, 3.0)


def test_seq_accuracy_within_binomial_bound():
    vals = {"a": (0.9, 1.0), "b": (0.8, 1.0)}
    sc = scenario_of(vals, seed=99)
    g = Seq((Leaf("a"), Leaf("b")))
    n = 100_000
    succ, _ = _simulate_vectorized(g, assign(vals), sc, "s", n, ExecutionModel.SEQUENTIAL_EDGE)
    p = float(np.mean(succ))
    se = math.sqrt(0.72 * 0.28 / n)
    assert abs(p - 0.72) <= 3 * se


def test_measure_matches_proxy_within_clt_bound():
    vals = {"a": (0.7, 1.0), "b": (0.6, 2.0), "c": (0.5, 0.5)}
    table = make_table([(r, "m", 1, p, l) for r, (p, l) in vals.items()])
    sc = scenario_of(vals, seed=7)
    g = Cond(Seq((Leaf("a"), Leaf("b"))), Leaf("c"))
    n = 10_000
    m = measure_graph(g, assign(vals), sc, n, "cfg")
    proxy_acc = estimate_accuracy(g, assign(vals), table)
    assert abs(m.accuracy - proxy_acc) <= 4 * math.sqrt(proxy_acc * (1 - proxy_acc) / n)


def test_single_sample_flagged_degenerate():
    vals = {"a": (0.5, 1.0)}
    m = measure_graph(Leaf("a"), assign(vals), scenario_of(vals), 1, "cfg")
    assert m.degenerate and m.accuracy_se is None and m.latency_se is None


def test_unconditional_deterministic_latency_is_exact():
    vals = {"a": (0.9, 1.5), "b": (0.8, 2.25)}
    table = make_table([(r, "m", 1, p, l) for r, (p, l) in vals.items()])
    g = Seq((Leaf("a"), Leaf("b")))
    m = measure_graph(g, assign(vals), scenario_of(vals), 500, "cfg")
    assert m.latency_s == pytest.approx(
        estimate_latency(g, assign(vals), table), abs=1e-9
    )


def test_scalar_and_vectorized_paths_agree():
    vals = {"a": (0.6, 1.0), "b": (0.4, 2.0), "c": (0.8, 0.5)}
    g = Cond(Seq((Leaf("a"), Leaf("b"))), Leaf("c"))
    for correlation, lm, cv in [(0.0, LatencyModel.DETERMINISTIC, 0.0),
                                (0.4, LatencyModel.DETERMINISTIC, 0.0),
                                (0.0, LatencyModel.LOGNORMAL, 0.3),
                                (0.5, LatencyModel.LOGNORMAL, 0.2)]:
        sc = scenario_of(vals, seed=31, correlation=correlation, latency_model=lm, cv=cv)
        succ, lat = _simulate_vectorized(g, assign(vals), sc, "x", 64,
                                         ExecutionModel.SEQUENTIAL_EDGE)
        for q in [0, 1, 5, 31, 63]:
            s, l = simulate_once(g, assign(vals), sc, q, stream_id="x")
            assert s == bool(succ[q])
            assert l == pytest.approx(float(lat[q]), rel=1e-12)


def test_draws_independent_of_evaluation_order():
    vals = {"a": (0.5, 1.0)}
    sc = scenario_of(vals, seed=77)
    forward = [simulate_once(Leaf("a"), assign(vals), sc, q, stream_id="z") for q in range(10)]
    backward = [simulate_once(Leaf("a"), assign(vals), sc, q, stream_id="z")
                for q in reversed(range(10))]
    assert forward == list(reversed(backward))


def test_lognormal_median_and_positivity():
    vals = {"a": (1.0, 3.0)}
    sc = scenario_of(vals, seed=5, latency_model=LatencyModel.LOGNORMAL, cv=0.5)
    _, lat = _simulate_vectorized(Leaf("a"), assign(vals), sc, "s", 40_000,
                                  ExecutionModel.SEQUENTIAL_EDGE)
    assert float(np.min(lat)) > 0.0
    assert float(np.median(lat)) == pytest.approx(3.0, rel=0.03)


def test_correlation_degrades_seq_fidelity_monotonically():
    vals = {"a": (0.7, 1.0), "b": (0.7, 1.0)}
    g = Seq((Leaf("a"), Leaf("b")))
    n = 60_000
    truth = 0.49
    biases = []
    for corr in (0.0, 0.3, 0.6):
        sc = scenario_of(vals, seed=11, correlation=corr)
        succ, _ = _simulate_vectorized(g, assign(vals), sc, "s", n,
                                       ExecutionModel.SEQUENTIAL_EDGE)
        biases.append(float(np.mean(succ)) - truth)
    assert biases[0] <= biases[1] <= biases[2]


def test_missing_scenario_entry_is_error():
    sc = scenario_of({"a": (0.5, 1.0)})
    with pytest.raises(ScenarioError, match="no entry"):
        simulate_once(Leaf("zzz"), {"zzz": CFG}, sc, 0)


def test_scenario_round_trip():
    vals = {"a": (0.5, 1.0), "b": (0.25, 2.0)}
    sc = scenario_of(vals, seed=42, correlation=0.2,
                     latency_model=LatencyModel.LOGNORMAL, cv=0.4)
    again = parse_scenario(scenario_to_json(sc))
    assert again == sc


def test_scenario_requires_seed():
    with pytest.raises(ScenarioError, match="seed"):
        parse_scenario('{"entries": []}')


def test_scenario_validation():
    with pytest.raises(ScenarioError, match="correlation"):
        scenario_of({"a": (0.5, 1.0)}, correlation=1.0)
    with pytest.raises(ScenarioError, match="probability"):
        scenario_of({"a": (1.5, 1.0)})


def test_scenario_from_profiles_matches_table(fixture_tables):
    table = fixture_tables["hotpotqa"]
    sc = scenario_from_profiles(table, seed=1)
    for (role, cfg), p in list(table.entries.items())[:10]:
        assert sc.get(role, cfg) == (p.accuracy, p.latency_s)


# ---------------------------------------------------------------------------
# Restricted spaces and exhaustive measurement
# ---------------------------------------------------------------------------


def test_single_config_space_is_its_own_frontier(fixture_specs, fixture_tables):
    spec = fixture_specs["hotpotqa"]
    table = fixture_tables["hotpotqa"]
    sc = scenario_from_profiles(table, seed=3)
    restr = Restriction(
        structures=[{"use_gen1": True, "use_gen2": False, "use_gen3": False,
                     "use_ensemble": False, "use_formatter": False}],
        configs={"gen1": [SubAgentConfig("small-4b", 400)]},
    )
    points, frontier = brute_force_frontier(spec, table, sc, restr, n_samples=100)
    assert len(points) == 1 and frontier == [0]


def test_brute_force_cap_enforced(fixture_specs, fixture_tables):
    spec = fixture_specs["hotpotqa"]
    table = fixture_tables["hotpotqa"]
    sc = scenario_from_profiles(table, seed=3)
    with pytest.raises(ValidationError, match="over the cap"):
        brute_force_frontier(spec, table, sc, None, n_samples=10, cap=1000)


def test_enumerate_restricted_orders_canonically(fixture_specs, fixture_tables):
    spec = fixture_specs["hotpotqa"]
    table = fixture_tables["hotpotqa"]
    restr = Restriction(
        structures=[{"use_gen1": True, "use_gen2": False, "use_gen3": False,
                     "use_ensemble": False, "use_formatter": True}],
        configs={r.id: [SubAgentConfig("nano-0.6b", 100), SubAgentConfig("small-4b", 400)]
                 for r in spec.roles},
    )
    configs = enumerate_restricted(spec, table, restr)
    assert len(configs) == 4
    assert [c.id for c in configs] == sorted(c.id for c in configs)
