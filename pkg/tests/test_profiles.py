from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wfopt.errors import ProfileError
from wfopt.profiles import (
    Profile,
    SubAgentConfig,
    load_profiles,
    parse_profiles_csv,
    profiles_to_json,
    prune_dominated,
)

from conftest import make_table


def entries_doc(entries):
    return json.dumps({"format_version": 1, "source": "t", "entries": entries})


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def test_load_grid_entry_count():
    entries = [
        {"role": f"r{i}", "model": f"m{j}", "budget": 10 * (k + 1),
         "accuracy": 0.5, "latency_s": 1.0, "sample_count": 9}
        for i in range(3) for j in range(5) for k in range(13)
    ]
    doc = entries_doc(entries)
    # independent count: one entry object per "role" key in the document
    assert doc.count('"role"') == 3 * 5 * 13 == 195
    table = load_profiles(doc)
    assert len(table) == 195


def test_load_empty_entries_is_valid():
    assert len(load_profiles(entries_doc([]))) == 0


def test_load_rejects_out_of_range_accuracy_naming_key():
    doc = entries_doc([{"role": "gen", "model": "m", "budget": 5,
                        "accuracy": 1.2, "latency_s": 1.0, "sample_count": 1}])
    with pytest.raises(ProfileError, match=r"gen/m@5"):
        load_profiles(doc)


def test_load_rejects_negative_latency():
    doc = entries_doc([{"role": "gen", "model": "m", "budget": 5,
                        "accuracy": 0.2, "latency_s": -1.0, "sample_count": 1}])
    with pytest.raises(ProfileError, match="negative latency"):
        load_profiles(doc)


def test_load_rejects_duplicate_key():
    e = {"role": "gen", "model": "m", "budget": 5,
         "accuracy": 0.2, "latency_s": 1.0, "sample_count": 1}
    with pytest.raises(ProfileError, match="duplicate"):
        load_profiles(entries_doc([e, dict(e)]))


def test_csv_variant_matches_json():
    csv_text = (
        "role,model,budget,accuracy,latency_s,sample_count\n"
        "gen,m1,10,0.5,1.25,100\n"
        "gen,m2,20,0.75,2.5,100\n"
    )
    via_csv = parse_profiles_csv(csv_text)
    via_json = load_profiles(entries_doc([
        {"role": "gen", "model": "m1", "budget": 10, "accuracy": 0.5,
         "latency_s": 1.25, "sample_count": 100},
        {"role": "gen", "model": "m2", "budget": 20, "accuracy": 0.75,
         "latency_s": 2.5, "sample_count": 100},
    ]))
    assert via_csv.entries == via_json.entries


def test_round_trip():
    table = make_table([("a", "m1", 1, 0.33, 2.5), ("b", "m2", 7, 0.9, 0.125)])
    again = load_profiles(profiles_to_json(table))
    assert again.entries == table.entries


def test_suffixed_role_falls_back_to_base():
    table = make_table([("fix", "m", 1, 0.4, 1.0)])
    assert table.get("fix#2", SubAgentConfig("m", 1)).accuracy == 0.4
    # but an exact depth entry wins
    table2 = make_table([("fix", "m", 1, 0.4, 1.0), ("fix#2", "m", 1, 0.3, 1.0)])
    assert table2.get("fix#2", SubAgentConfig("m", 1)).accuracy == 0.3


# ---------------------------------------------------------------------------
# Dominance pruning
# ---------------------------------------------------------------------------


def test_prune_drops_dominated_middle_option():
    table = make_table([
        ("r", "A", 1, 0.9, 5.0),
        ("r", "B", 1, 0.8, 6.0),
        ("r", "C", 1, 0.95, 9.0),
    ])
    res = prune_dominated(table, "r")
    assert [c.model for c in res.configs()] == ["A", "C"]
    assert res.dropped_count == 1


def test_prune_single_profile_kept():
    table = make_table([("r", "A", 1, 0.5, 1.0)])
    res = prune_dominated(table, "r")
    assert len(res.kept) == 1 and res.dropped_count == 0


def test_prune_exact_tie_keeps_lexicographically_smallest():
    table = make_table([("r", "zeta", 1, 0.5, 1.0), ("r", "alpha", 2, 0.5, 1.0)])
    res = prune_dominated(table, "r")
    assert res.configs() == [SubAgentConfig("alpha", 2)]


def test_prune_is_idempotent():
    rng = random.Random(5)
    table = make_table([
        ("r", f"m{i}", 1, round(rng.random(), 3), round(rng.uniform(0.1, 5), 3))
        for i in range(40)
    ])
    first = prune_dominated(table, "r")
    again = prune_dominated(dict(first.kept), "r")
    assert again.kept == first.kept and again.dropped_count == 0


def test_prune_unknown_role():
    table = make_table([("r", "m", 1, 0.5, 1.0)])
    with pytest.raises(ProfileError, match="no profiled options"):
        prune_dominated(table, "other")


def _sweep_oracle(options):
    """Independent staircase construction: sort then sweep."""
    items = sorted(options.items(), key=lambda cp: (cp[1].latency_s, -cp[1].accuracy, cp[0]))
    kept, best = [], -1.0
    for c, p in items:
        if p.accuracy > best:
            kept.append(c)
            best = p.accuracy
    return kept


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**9))
def test_prune_matches_sweep_oracle_at_zero_epsilon(seed):
    rng = random.Random(seed)
    options = {}
    for i in range(rng.randint(1, 30)):
        cfg = SubAgentConfig(f"m{i}", rng.randint(1, 3))
        acc = rng.choice([0.25, 0.5, 0.75, round(rng.random(), 2)])
        lat = rng.choice([1.0, 2.0, round(rng.uniform(0.1, 4.0), 2)])
        options[cfg] = Profile("r", cfg, acc, lat, 1)
    res = prune_dominated(options, "r")
    assert res.configs() == _sweep_oracle(options)
    # staircase invariant
    lats = [p.latency_s for _, p in res.kept]
    accs = [p.accuracy for _, p in res.kept]
    assert lats == sorted(lats)
    assert all(b > a for a, b in zip(accs, accs[1:]))


def test_epsilon_pruning_drops_near_duplicates():
    # B is within epsilon on accuracy but much slower: dropped at eps=0.05
    table = make_table([("r", "A", 1, 0.90, 1.0), ("r", "B", 1, 0.93, 5.0)])
    assert len(prune_dominated(table, "r", epsilon=0.0).kept) == 2
    res = prune_dominated(table, "r", epsilon=0.05)
    assert res.configs() == [SubAgentConfig("A", 1)]


def test_epsilon_negative_rejected():
    table = make_table([("r", "A", 1, 0.9, 1.0)])
    with pytest.raises(ProfileError):
        prune_dominated(table, "r", epsilon=-0.1)
