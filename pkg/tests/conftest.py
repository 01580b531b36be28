"""Shared builders: tiny specs, synthetic tables, random graph generators."""

from __future__ import annotations

import json
import random

import pytest

from wfopt.fixtures import fixture_text
from wfopt.ir import (
    And,
    AtLeastK,
    Choice,
    Cond,
    ConfigSpace,
    Leaf,
    Loop,
    OptionalNode,
    Or,
    Role,
    Seq,
    WorkflowSpec,
    parse_workflow_spec,
)
from wfopt.profiles import Profile, ProfileTable, SubAgentConfig, TableMeta, load_profiles


def make_table(rows, source="test"):
    """rows: iterable of (role, model, budget, accuracy, latency[, n])."""
    entries = {}
    for row in rows:
        role, model, budget, acc, lat = row[:5]
        n = row[5] if len(row) > 5 else 100
        cfg = SubAgentConfig(model, budget)
        entries[(role, cfg)] = Profile(role, cfg, acc, lat, n)
    return ProfileTable(entries, TableMeta(source=source))


def single_leaf_spec(role="solo", options=None):
    options = options or [("m", 1, 0.5, 1.0)]
    table = make_table([(role, m, b, a, l) for m, b, a, l in options])
    spec = WorkflowSpec(role, Leaf(role), (), (), (Role(role, None),))
    return spec, table


@pytest.fixture(scope="session")
def fixture_specs():
    return {
        name: parse_workflow_spec(fixture_text(f"{name}.workflow.json"))
        for name in ("math", "hotpotqa", "livecodebench")
    }


@pytest.fixture(scope="session")
def fixture_tables():
    return {
        name: load_profiles(fixture_text(f"{name}.profiles.json"))
        for name in ("math", "hotpotqa", "livecodebench")
    }


# ---------------------------------------------------------------------------
# Random instance generators (seeded; used by property and acceptance tests)
# ---------------------------------------------------------------------------


def random_unrolled_graph(rng: random.Random, roles: list[str]):
    """Loop-free graph using each role exactly once as a leaf."""
    if len(roles) == 1:
        return Leaf(roles[0])
    kind = rng.choice(["seq", "or", "and", "cond"])
    if kind == "cond":
        cut = rng.randint(1, len(roles) - 1)
        return Cond(
            random_unrolled_graph(rng, roles[:cut]),
            random_unrolled_graph(rng, roles[cut:]),
        )
    n_parts = rng.randint(2, min(3, len(roles)))
    cuts = sorted(rng.sample(range(1, len(roles)), n_parts - 1))
    parts, prev = [], 0
    for c in cuts + [len(roles)]:
        parts.append(random_unrolled_graph(rng, roles[prev:c]))
        prev = c
    return {"seq": Seq, "or": Or, "and": And}[kind](tuple(parts))


def random_structured_spec(rng: random.Random, max_roles=4, max_choices=2,
                           allow_loop=True):
    """Spec with optional subtrees (and sometimes a retry loop) whose
    structural space stays small."""
    n_roles = rng.randint(2, max_roles)
    roles = [f"r{i}" for i in range(n_roles)]
    n_choices = rng.randint(0, max_choices)
    choices = [f"c{i}" for i in range(n_choices)]

    use_loop = allow_loop and rng.random() < 0.3 and n_roles >= 2
    if use_loop:
        body_roles, fix_role = roles[:-1], roles[-1]
        body = random_unrolled_graph(rng, body_roles)
        retries = rng.randint(1, 2)
        graph = Loop(body, tuple(Leaf(fix_role) for _ in range(retries)), retries)
    else:
        graph = random_unrolled_graph(rng, roles)

    # gate random subtrees: wrap children of the top node when possible,
    # always keeping at least one ungated leaf so no variant is empty
    for i, cid in enumerate(choices):
        if isinstance(graph, (Seq, Or, And)) and len(graph.children) >= 2:
            kids = list(graph.children)
            pos = rng.randrange(1, len(kids))
            kids[pos] = OptionalNode(kids[pos], cid)
            graph = type(graph)(tuple(kids))
        else:
            graph = Seq((graph, OptionalNode(Leaf(f"x{i}"), cid)))
            roles.append(f"x{i}")

    spec = WorkflowSpec(
        name=f"rand{rng.randint(0, 10**6)}",
        graph=graph,
        choices=tuple(Choice(c, True) for c in choices),
        constraints=(),
        roles=tuple(Role(r, None) for r in roles),
    )
    return spec


def random_table_for(spec, rng: random.Random, max_options=8):
    """Random profiles for every role of a spec (suffixed loop roles share
    the base-role entries)."""
    rows = []
    for role in sorted(r.id for r in spec.roles):
        n = rng.randint(1, max_options)
        for j in range(n):
            rows.append((
                role, f"m{j}", rng.randint(1, 4),
                round(rng.random(), 6), round(rng.uniform(0.1, 10.0), 6),
            ))
    return make_table(rows)
