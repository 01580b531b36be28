from __future__ import annotations

import json
import random

import pytest

from wfopt.errors import ArtifactError, CoverageError, ValidationError
from wfopt.explorer import (
    CompiledSet,
    WorkflowConfiguration,
    compiled_set_to_json,
    config_id,
    count_configurations,
    explore,
    load_compiled_set,
    nondominated_sort_2d,
    parse_compiled_set,
    save_compiled_set,
)
from wfopt.ir import Choice, Leaf, OptionalNode, Role, Seq, WorkflowSpec
from wfopt.profiles import SubAgentConfig
from wfopt.proxy import ExecutionModel, estimate
from wfopt.simulator import Restriction, enumerate_restricted

from conftest import make_table, random_structured_spec, random_table_for, single_leaf_spec


# ---------------------------------------------------------------------------
# Non-dominated sorting
# ---------------------------------------------------------------------------


def oracle_nondominated(points):
    """Quadratic dominance check straight from the definition."""
    out = []
    for i, (a, l, pid) in enumerate(points):
        beaten = False
        for j, (a2, l2, pid2) in enumerate(points):
            if j == i:
                continue
            if a2 >= a and l2 <= l and (a2 > a or l2 < l):
                beaten = True
                break
            if a2 == a and l2 == l and str(pid2) < str(pid):
                beaten = True
                break
        if not beaten:
            out.append(i)
    return sorted(out, key=lambda i: points[i][1])


def test_frontier_hand_case():
    pts = [(0.9, 5.0, "a"), (0.8, 6.0, "b"), (0.95, 9.0, "c")]
    assert nondominated_sort_2d(pts) == [0, 2]


def test_frontier_identical_points_single_survivor():
    pts = [(0.5, 1.0, "m"), (0.5, 1.0, "a"), (0.5, 1.0, "z")]
    assert nondominated_sort_2d(pts) == [1]


def test_frontier_random_matches_oracle():
    rng = random.Random(99)
    pts = [
        (round(rng.random(), 3), round(rng.uniform(0, 10), 3), f"p{i}")
        for i in range(1000)
    ]
    assert nondominated_sort_2d(pts) == oracle_nondominated(pts)


def test_frontier_permutation_invariant():
    rng = random.Random(7)
    pts = [(round(rng.random(), 2), round(rng.uniform(0, 5), 2), f"p{i}") for i in range(200)]
    base = {pts[i] for i in nondominated_sort_2d(pts)}
    for _ in range(5):
        rng.shuffle(pts)
        assert {pts[i] for i in nondominated_sort_2d(pts)} == base


def test_frontier_size_bounded_by_distinct_accuracies():
    rng = random.Random(13)
    pts = [(rng.choice([0.2, 0.4, 0.6]), rng.uniform(0, 5), f"p{i}") for i in range(100)]
    assert len(nondominated_sort_2d(pts)) <= 3


def test_frontier_rejects_nan():
    with pytest.raises(ValidationError, match="NaN"):
        nondominated_sort_2d([(float("nan"), 1.0, "a")])


def test_frontier_epsilon_sparsifies():
    pts = [(0.90, 1.0, "fast"), (0.905, 5.0, "slow"), (0.99, 9.0, "best")]
    assert nondominated_sort_2d(pts) == [0, 1, 2]
    # "slow" is within 0.01 accuracy of "fast" but 4s slower
    assert nondominated_sort_2d(pts, epsilon=0.01) == [0, 2]


# ---------------------------------------------------------------------------
# Counting
# ---------------------------------------------------------------------------


def test_count_five_roles_twenty_options():
    roles = tuple(Role(f"r{i}", None) for i in range(5))
    spec = WorkflowSpec("w", Seq(tuple(Leaf(f"r{i}") for i in range(5))), (), (), roles)
    assert count_configurations(spec, {f"r{i}": 20 for i in range(5)}) == 3_200_000


def test_count_single_option():
    spec, _ = single_leaf_spec()
    assert count_configurations(spec, {"solo": 1}) == 1


def test_count_missing_role_is_error():
    spec, _ = single_leaf_spec()
    with pytest.raises(ValidationError, match="missing"):
        count_configurations(spec, {})


def test_count_matches_materialized_enumeration(fixture_specs, fixture_tables):
    spec = fixture_specs["math"]
    table = fixture_tables["math"]
    two = {r.id: [SubAgentConfig("nano-0.6b", 200), SubAgentConfig("small-4b", 400)]
           for r in spec.roles}
    configs = enumerate_restricted(spec, table, Restriction(None, two), cap=10**6)
    assert count_configurations(spec, {r.id: 2 for r in spec.roles}) == len(configs)


# ---------------------------------------------------------------------------
# explore
# ---------------------------------------------------------------------------


def test_explore_staircase_is_its_own_frontier():
    spec, table = single_leaf_spec(options=[("m", 1, 0.6, 1.0), ("m", 5, 0.9, 5.0)])
    cs = explore(spec, table)
    assert len(cs) == 2
    assert [e.estimate.accuracy for e in cs.entries] == [0.6, 0.9]


def test_explore_pruning_soundness_on_fixture(fixture_specs, fixture_tables):
    """Frontier of the pruned space equals the unpruned exhaustive frontier."""
    spec = fixture_specs["hotpotqa"]
    table = fixture_tables["hotpotqa"]
    # desk scale: 3 models x 2 budgets per role, full structural space
    small = {r.id: [SubAgentConfig(m, b) for m in ("nano-0.6b", "small-4b", "large-14b")
                    for b in (100, 800)] for r in spec.roles}
    configs = enumerate_restricted(spec, table, Restriction(None, small), cap=10**6)
    ests = [estimate(spec, c.structural_map(), c.assignment_map(), table) for c in configs]
    unpruned = nondominated_sort_2d(
        [(e.accuracy, e.latency_s, c.id) for e, c in zip(ests, configs)]
    )
    expected = {(ests[i].accuracy, ests[i].latency_s) for i in unpruned}

    # restrict the spec's declared spaces to the same grid, then explore
    restricted_spec = WorkflowSpec(
        spec.name, spec.graph, spec.choices, spec.constraints,
        tuple(Role(r.id, None) for r in spec.roles),
    )
    sub_table = make_table([
        (p.role, p.config.model, p.config.budget, p.accuracy, p.latency_s)
        for (role, cfg), p in table.entries.items()
        if cfg in small[role]
    ])
    cs = explore(restricted_spec, sub_table)
    got = {(e.estimate.accuracy, e.estimate.latency_s) for e in cs.entries}
    assert got == expected


def test_explore_every_candidate_dominated_by_frontier(fixture_specs, fixture_tables):
    spec = fixture_specs["hotpotqa"]
    table = fixture_tables["hotpotqa"]
    cs = explore(spec, table)
    small = {r.id: [SubAgentConfig("mini-1.7b", 100), SubAgentConfig("small-4b", 800)]
             for r in spec.roles}
    for c in enumerate_restricted(spec, table, Restriction(None, small), cap=10**5)[:200]:
        est = estimate(spec, c.structural_map(), c.assignment_map(), table)
        assert any(
            e.estimate.accuracy >= est.accuracy and e.estimate.latency_s <= est.latency_s
            for e in cs.entries
        )


def test_explore_deterministic_across_workers(fixture_specs, fixture_tables):
    spec = fixture_specs["hotpotqa"]
    table = fixture_tables["hotpotqa"]
    one = compiled_set_to_json(explore(spec, table, workers=1))
    two = compiled_set_to_json(explore(spec, table, workers=2))
    assert one == two


def test_explore_reports_coverage_hole():
    roles = (Role("a", None), Role("b", None))
    spec = WorkflowSpec("w", Seq((Leaf("a"), Leaf("b"))), (), (), roles)
    table = make_table([("a", "m", 1, 0.5, 1.0)])
    with pytest.raises(CoverageError, match="b/"):
        explore(spec, table)


def test_explore_rejects_fully_pruned_variant():
    spec = WorkflowSpec(
        "w", OptionalNode(Leaf("a"), "c0"), (Choice("c0", True),), (), (Role("a", None),)
    )
    table = make_table([("a", "m", 1, 0.5, 1.0)])
    with pytest.raises(ValidationError, match="prunes the whole graph"):
        explore(spec, table)


def test_explore_epsilon_thins_frontier(fixture_specs, fixture_tables):
    spec = fixture_specs["hotpotqa"]
    table = fixture_tables["hotpotqa"]
    exact = explore(spec, table, epsilon=0.0)
    loose = explore(spec, table, epsilon=0.02)
    assert len(loose) <= len(exact)
    assert loose.meta.epsilon == 0.02


# ---------------------------------------------------------------------------
# Artifact round-trip and integrity
# ---------------------------------------------------------------------------


def test_artifact_round_trip(tmp_path, fixture_specs, fixture_tables):
    cs = explore(fixture_specs["hotpotqa"], fixture_tables["hotpotqa"])
    path = tmp_path / "artifact.json"
    save_compiled_set(cs, path)
    again = load_compiled_set(path)
    assert again.entries == cs.entries
    assert again.meta == cs.meta
    # byte-stable re-save
    save_compiled_set(again, tmp_path / "artifact2.json")
    assert (tmp_path / "artifact.json").read_bytes() == (tmp_path / "artifact2.json").read_bytes()


def test_tampered_dominated_entry_rejected(tmp_path, fixture_specs, fixture_tables):
    cs = explore(fixture_specs["hotpotqa"], fixture_tables["hotpotqa"])
    doc = json.loads(compiled_set_to_json(cs))
    doc["entries"][1]["est_accuracy"] = doc["entries"][0]["est_accuracy"] / 2
    with pytest.raises(ArtifactError, match="staircase"):
        parse_compiled_set(json.dumps(doc))


def test_tampered_id_rejected(fixture_specs, fixture_tables):
    cs = explore(fixture_specs["hotpotqa"], fixture_tables["hotpotqa"])
    doc = json.loads(compiled_set_to_json(cs))
    doc["entries"][0]["id"] = "forged"
    with pytest.raises(ArtifactError, match="does not match"):
        parse_compiled_set(json.dumps(doc))


def test_wrong_format_version_rejected():
    with pytest.raises(ArtifactError, match="format_version"):
        parse_compiled_set(json.dumps({"format_version": 99, "entries": []}))


def test_config_id_injective_and_stable():
    a = config_id({"c0": True}, {"r": SubAgentConfig("m", 2)})
    b = config_id({"c0": False}, {"r": SubAgentConfig("m", 2)})
    c = config_id({"c0": True}, {"r": SubAgentConfig("m", 3)})
    assert len({a, b, c}) == 3
    assert a == "c0=1|r=m@2"


# ---------------------------------------------------------------------------
# Randomized pruning soundness (desk scale)
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(10))
def test_pruned_frontier_equals_full_frontier_random(seed):
    rng = random.Random(seed * 7919 + 13)
    spec = random_structured_spec(rng, max_roles=3, max_choices=2)
    table = random_table_for(spec, rng, max_options=6)
    full = enumerate_restricted(spec, table, None, cap=10**6)
    ests = [estimate(spec, c.structural_map(), c.assignment_map(), table) for c in full]
    idx = nondominated_sort_2d([(e.accuracy, e.latency_s, c.id) for e, c in zip(ests, full)])
    expected = {(ests[i].accuracy, ests[i].latency_s) for i in idx}
    cs = explore(spec, table)
    got = {(e.estimate.accuracy, e.estimate.latency_s) for e in cs.entries}
    assert got == expected
