#!/usr/bin/env python3
"""Regenerate the bundled fixture files (workflow specs, synthetic profile
tables, matched scenarios, restricted spaces).

Deterministic: every profile value is derived from counter-based streams
keyed by a fixed seed, so rerunning this script reproduces identical bytes.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

from wfopt.ir import parse_workflow_spec
from wfopt.profiles import ProfileTable, Profile, SubAgentConfig, TableMeta, profiles_to_json
from wfopt.rng import uniform_at
from wfopt.simulator import LatencyModel, scenario_from_profiles, scenario_to_json

OUT = Path(__file__).resolve().parents[1] / "src" / "wfopt" / "fixtures"

PROFILE_SEED = 74125
SCENARIO_SEED = 20250811
SAMPLE_COUNT = 200

# (strength, tokens/sec, base overhead seconds)
MODELS = {
    "nano-0.6b": (0.22, 420.0, 0.08),
    "mini-1.7b": (0.40, 300.0, 0.14),
    "small-4b": (0.58, 200.0, 0.25),
    "medium-8b": (0.74, 120.0, 0.45),
    "large-14b": (0.88, 70.0, 0.75),
}

MATH_BUDGETS = [10, 200, 400, 800, 1000, 1500, 2000, 3000, 4000, 5000, 6000, 8000, 10000]
HOTPOT_BUDGETS = [10, 50, 100, 200, 300, 400, 500, 600, 700, 800, 900, 1000, 1500, 2000, 4000, 8000]
LCB_BUDGETS = [10, 200, 400, 800, 1000, 1500, 2000, 3000, 4000, 5000, 6000, 7000, 8000, 12000, 16000]

# per role: accuracy floor, accuracy ceiling, saturation token scale,
# accuracy noise width, model-aptitude jitter width.  Tuned so per-role
# pruning keeps roughly 6-13 of the 65-80 options and the pruned workflow
# spaces stay near a million candidates.
ROLE_PARAMS = {
    # math
    "programmer": (0.06, 0.90, 520.0, 0.16, 0.50),
    "refiner": (0.45, 0.97, 380.0, 0.16, 0.50),
    "gen_a": (0.08, 0.86, 420.0, 0.16, 0.50),
    "gen_b": (0.07, 0.83, 480.0, 0.16, 0.50),
    "gen_detail": (0.05, 0.92, 700.0, 0.16, 0.50),
    # hotpotqa
    "gen1": (0.10, 0.80, 260.0, 0.15, 0.45),
    "gen2": (0.09, 0.77, 300.0, 0.15, 0.45),
    "gen3": (0.08, 0.74, 220.0, 0.15, 0.45),
    "formatter": (0.60, 0.985, 150.0, 0.16, 0.45),
    # shared aggregation role name; reused by every workflow
    "ensemble": (0.40, 0.95, 300.0, 0.17, 0.50),
    # livecodebench
    "coder1": (0.05, 0.82, 560.0, 0.18, 0.55),
    "coder2": (0.05, 0.79, 500.0, 0.18, 0.55),
    "coder3": (0.04, 0.76, 620.0, 0.18, 0.55),
    "fix": (0.03, 0.52, 480.0, 0.18, 0.55),
}


def synth_profile(role: str, model: str, budget: int, depth: int = 0) -> tuple[float, float]:
    floor, ceil, tau, noise_w, apt_w = ROLE_PARAMS[role]
    strength, rate, t0 = MODELS[model]
    # how well this model family fits this role, independent of size
    apt = strength + apt_w * (uniform_at(PROFILE_SEED, f"apt/{role}/{model}", 0) - 0.5)
    apt = max(0.05, min(1.0, apt))
    cap = floor + (ceil - floor) * (0.08 + 0.92 * apt)
    if depth:
        cap *= 0.93 ** depth  # later repair attempts face harder residual cases
    tau_eff = tau * (0.25 + 1.2 * strength)
    sat = 1.0 - math.exp(-budget / tau_eff)
    # over-long budgets hurt: the model rambles past its useful reasoning
    decline = 0.08 * max(0.0, budget / tau_eff - 1.5)
    noise = noise_w * (uniform_at(PROFILE_SEED, f"acc/{role}#{depth}/{model}/{budget}", 0) - 0.5)
    acc = max(0.01, min(0.99, floor + (cap - floor) * sat - decline + noise))
    lnoise = 0.06 * (uniform_at(PROFILE_SEED, f"lat/{role}#{depth}/{model}/{budget}", 0) - 0.5)
    lat = (t0 + budget ** 0.93 / rate) * (1.0 + lnoise)
    return round(acc, 6), round(lat, 6)


def make_table(roles: dict[str, tuple[str, int]], budgets: list[int], source: str) -> ProfileTable:
    """roles maps table role id -> (parameter role id, depth)."""
    entries = {}
    for table_role, (param_role, depth) in roles.items():
        for model in MODELS:
            for b in budgets:
                acc, lat = synth_profile(param_role, model, b, depth)
                cfg = SubAgentConfig(model, b)
                entries[(table_role, cfg)] = Profile(table_role, cfg, acc, lat, SAMPLE_COUNT)
    return ProfileTable(entries, TableMeta(source=source, created_at="2026-08-10T00:00:00Z"))


MATH_SPEC = {
    "format_version": 1,
    "name": "math",
    "roles": [
        {"id": r, "config_space": {"models": list(MODELS), "budgets": MATH_BUDGETS}}
        for r in ["programmer", "refiner", "gen_a", "gen_b", "gen_detail", "ensemble"]
    ],
    "choices": [
        {"id": "branch_prog", "default": True},
        {"id": "branch_gen_a", "default": True},
        {"id": "branch_gen_b", "default": True},
        {"id": "branch_detail", "default": True},
        {"id": "use_ensemble", "default": True},
    ],
    "constraints": [
        {"kind": "at_least_k",
         "choices": ["branch_prog", "branch_gen_a", "branch_gen_b", "branch_detail"], "k": 1},
        {"kind": "requires_count_ge", "target": "use_ensemble",
         "choices": ["branch_prog", "branch_gen_a", "branch_gen_b", "branch_detail"], "k": 2},
        {"kind": "implied_by", "target": "use_ensemble",
         "condition": {"kind": "count_ge",
                       "choices": ["branch_prog", "branch_gen_a", "branch_gen_b", "branch_detail"],
                       "k": 2}},
    ],
    "graph": {
        "kind": "seq",
        "children": [
            {"kind": "or", "children": [
                {"kind": "optional", "choice": "branch_prog",
                 "child": {"kind": "seq", "children": [
                     {"kind": "leaf", "role": "programmer"},
                     {"kind": "leaf", "role": "refiner"},
                 ]}},
                {"kind": "optional", "choice": "branch_gen_a",
                 "child": {"kind": "leaf", "role": "gen_a"}},
                {"kind": "optional", "choice": "branch_gen_b",
                 "child": {"kind": "leaf", "role": "gen_b"}},
                {"kind": "optional", "choice": "branch_detail",
                 "child": {"kind": "leaf", "role": "gen_detail"}},
            ]},
            {"kind": "optional", "choice": "use_ensemble",
             "child": {"kind": "leaf", "role": "ensemble"}},
        ],
    },
}

HOTPOT_SPEC = {
    "format_version": 1,
    "name": "hotpotqa",
    "roles": [
        {"id": r, "config_space": {"models": list(MODELS), "budgets": HOTPOT_BUDGETS}}
        for r in ["gen1", "gen2", "gen3", "ensemble", "formatter"]
    ],
    "choices": [
        {"id": "use_gen1", "default": True},
        {"id": "use_gen2", "default": True},
        {"id": "use_gen3", "default": True},
        {"id": "use_ensemble", "default": True},
        {"id": "use_formatter", "default": True},
    ],
    "constraints": [
        {"kind": "at_least_k", "choices": ["use_gen1", "use_gen2", "use_gen3"], "k": 1},
        {"kind": "requires_count_ge", "target": "use_ensemble",
         "choices": ["use_gen1", "use_gen2", "use_gen3"], "k": 2},
        {"kind": "implied_by", "target": "use_ensemble",
         "condition": {"kind": "count_ge", "choices": ["use_gen1", "use_gen2", "use_gen3"], "k": 2}},
    ],
    "graph": {
        "kind": "seq",
        "children": [
            {"kind": "or", "children": [
                {"kind": "optional", "choice": "use_gen1", "child": {"kind": "leaf", "role": "gen1"}},
                {"kind": "optional", "choice": "use_gen2", "child": {"kind": "leaf", "role": "gen2"}},
                {"kind": "optional", "choice": "use_gen3", "child": {"kind": "leaf", "role": "gen3"}},
            ]},
            {"kind": "optional", "choice": "use_ensemble",
             "child": {"kind": "leaf", "role": "ensemble"}},
            {"kind": "optional", "choice": "use_formatter",
             "child": {"kind": "leaf", "role": "formatter"}},
        ],
    },
}

LCB_SPEC = {
    "format_version": 1,
    "name": "livecodebench",
    "roles": [
        {"id": r, "config_space": {"models": list(MODELS), "budgets": LCB_BUDGETS}}
        for r in ["coder1", "coder2", "coder3", "ensemble", "fix"]
    ],
    "choices": [
        {"id": "use_coder1", "default": True},
        {"id": "use_coder2", "default": True},
        {"id": "use_coder3", "default": True},
        {"id": "retry1", "default": True},
        {"id": "retry2", "default": True},
        {"id": "retry3", "default": True},
    ],
    "constraints": [
        {"kind": "at_least_k", "choices": ["use_coder1", "use_coder2", "use_coder3"], "k": 1},
        # retries activate in order: depth d requires depth d-1
        {"kind": "implied_by", "target": "retry1", "condition": {"kind": "choice", "choice": "retry2"}},
        {"kind": "implied_by", "target": "retry2", "condition": {"kind": "choice", "choice": "retry3"}},
    ],
    "graph": {
        "kind": "loop",
        "body": {"kind": "seq", "children": [
            {"kind": "or", "children": [
                {"kind": "optional", "choice": "use_coder1", "child": {"kind": "leaf", "role": "coder1"}},
                {"kind": "optional", "choice": "use_coder2", "child": {"kind": "leaf", "role": "coder2"}},
                {"kind": "optional", "choice": "use_coder3", "child": {"kind": "leaf", "role": "coder3"}},
            ]},
            {"kind": "leaf", "role": "ensemble"},
        ]},
        "repair_stages": [
            {"kind": "optional", "choice": "retry1", "child": {"kind": "leaf", "role": "fix"}},
            {"kind": "optional", "choice": "retry2", "child": {"kind": "leaf", "role": "fix"}},
            {"kind": "optional", "choice": "retry3", "child": {"kind": "leaf", "role": "fix"}},
        ],
        "max_retries": 3,
    },
}

HOTPOT_STRUCTURES = [
    {"use_gen1": True, "use_gen2": True, "use_gen3": True,
     "use_ensemble": True, "use_formatter": True},
    {"use_gen1": True, "use_gen2": False, "use_gen3": False,
     "use_ensemble": False, "use_formatter": True},
]

LCB_STRUCTURES = [
    {"use_coder1": True, "use_coder2": True, "use_coder3": True,
     "retry1": True, "retry2": True, "retry3": False},
    {"use_coder1": True, "use_coder2": False, "use_coder3": False,
     "retry1": True, "retry2": True, "retry3": False},
]


def staircase_picks(table: ProfileTable, roles: list[str], n_options: int) -> dict:
    """Spread picks along each role's pruned staircase, so the restricted
    space keeps a real accuracy/latency trade-off."""
    from wfopt.profiles import prune_dominated

    out = {}
    for role in roles:
        kept = prune_dominated(table, role).kept
        if len(kept) < n_options:
            raise RuntimeError(f"role {role} staircase too small for restriction")
        positions = [round(i * (len(kept) - 1) / (n_options - 1)) for i in range(n_options)]
        out[role] = [
            {"model": kept[p][0].model, "budget": kept[p][0].budget} for p in positions
        ]
    return out


def make_restriction(structures, table, roles, n_options) -> dict:
    return {
        "format_version": 1,
        "structures": structures,
        "configs": staircase_picks(table, roles, n_options),
    }


def write(path: Path, text: str) -> None:
    path.write_text(text + ("" if text.endswith("\n") else "\n"), encoding="utf-8")
    print(f"wrote {path}")


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)

    specs = {"math": MATH_SPEC, "hotpotqa": HOTPOT_SPEC, "livecodebench": LCB_SPEC}
    for name, doc in specs.items():
        text = json.dumps(doc, indent=2)
        parse_workflow_spec(text)  # refuse to ship an invalid fixture
        write(OUT / f"{name}.workflow.json", text)

    tables = {
        "math": make_table(
            {r: (r, 0) for r in ["programmer", "refiner", "gen_a", "gen_b", "gen_detail", "ensemble"]},
            MATH_BUDGETS, "synthetic/math"),
        "hotpotqa": make_table(
            {r: (r, 0) for r in ["gen1", "gen2", "gen3", "ensemble", "formatter"]},
            HOTPOT_BUDGETS, "synthetic/hotpotqa"),
        # repair attempts are profiled per retry depth
        "livecodebench": make_table(
            {
                "coder1": ("coder1", 0), "coder2": ("coder2", 0), "coder3": ("coder3", 0),
                "ensemble": ("ensemble", 0),
                "fix#1": ("fix", 1), "fix#2": ("fix", 2), "fix#3": ("fix", 3),
            },
            LCB_BUDGETS, "synthetic/livecodebench"),
    }
    for name, table in tables.items():
        write(OUT / f"{name}.profiles.json", profiles_to_json(table))
        scenario = scenario_from_profiles(table, SCENARIO_SEED, LatencyModel.DETERMINISTIC, 0.0, 0.0)
        write(OUT / f"{name}.scenario.json", scenario_to_json(scenario))

    # Restricted spaces for exhaustive validation: two structures each, a
    # handful of staircase options per role -> 3^5 + 3^2 = 252 and
    # 2^6 + 2^4 = 80 configurations.
    hotpot_restr = make_restriction(
        HOTPOT_STRUCTURES, tables["hotpotqa"],
        ["gen1", "gen2", "gen3", "ensemble", "formatter"], 3)
    lcb_restr = make_restriction(
        LCB_STRUCTURES, tables["livecodebench"],
        ["coder1", "coder2", "coder3", "ensemble", "fix#1", "fix#2"], 2)
    # depth entries share the base-role key so any retry depth resolves
    lcb_restr["configs"]["fix"] = lcb_restr["configs"].pop("fix#1")
    del lcb_restr["configs"]["fix#2"]
    write(OUT / "hotpotqa.restriction.json", json.dumps(hotpot_restr, indent=2))
    write(OUT / "livecodebench.restriction.json", json.dumps(lcb_restr, indent=2))


if __name__ == "__main__":
    main()
