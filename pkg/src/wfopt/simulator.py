"""Seeded Monte-Carlo execution of workflow configurations.

The simulator stands in for real deployment: a truth scenario assigns every
(role, config) pair a true success probability and a latency distribution,
and each query is executed by actual control flow (a conditional fallback
runs only when its primary stage failed).  All randomness comes from
counter-based streams keyed by (scenario seed, configuration id, leaf,
query index), so any draw is reproducible in isolation and measurements do
not depend on evaluation order or worker count.

A correlation knob couples leaf successes within one query through a shared
latent draw; it exists to stress the independence idealization of the
estimator, not to model any particular deployment.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.special import ndtri

from .errors import ScenarioError, ValidationError
from .explorer import (
    WorkflowConfiguration,
    config_id,
    declared_configs,
    nondominated_sort_2d,
)
from .ir import (
    And,
    Cond,
    Leaf,
    Loop,
    Node,
    OptionalNode,
    Or,
    Seq,
    WorkflowSpec,
    base_role,
    enumerate_structures,
    leaf_roles,
    resolve_variant,
)
from .profiles import ProfileTable, SubAgentConfig
from .proxy import ExecutionModel
from .rng import uniform_at, uniform_stream

SCENARIO_FORMAT_VERSION = 1


class LatencyModel(str, Enum):
    DETERMINISTIC = "deterministic"
    LOGNORMAL = "lognormal"


@dataclass
class TruthScenario:
    """Ground truth for simulation: per (role, config) success probability
    and latency scale, plus global noise and coupling knobs."""

    entries: dict[tuple[str, SubAgentConfig], tuple[float, float]]
    latency_model: LatencyModel = LatencyModel.DETERMINISTIC
    cv: float = 0.0
    correlation: float = 0.0
    seed: int = 0
    source: str = ""

    def __post_init__(self):
        if not 0.0 <= self.correlation < 1.0:
            raise ScenarioError(f"correlation {self.correlation!r} outside [0, 1)")
        if self.cv < 0.0:
            raise ScenarioError(f"cv {self.cv!r} must be nonnegative")
        for (role, cfg), (p, l) in self.entries.items():
            if not 0.0 <= p <= 1.0:
                raise ScenarioError(f"probability {p!r} outside [0, 1] for {role}/{cfg.model}@{cfg.budget}")
            if l < 0.0:
                raise ScenarioError(f"negative latency {l!r} for {role}/{cfg.model}@{cfg.budget}")

    def get(self, role: str, cfg: SubAgentConfig) -> tuple[float, float]:
        v = self.entries.get((role, cfg))
        if v is None and base_role(role) != role:
            v = self.entries.get((base_role(role), cfg))
        if v is None:
            raise ScenarioError(f"scenario has no entry for {role}/{cfg.model}@{cfg.budget}")
        return v

    @property
    def lognormal_sigma(self) -> float:
        return math.sqrt(math.log(1.0 + self.cv * self.cv))


def scenario_from_profiles(table: ProfileTable, seed: int,
                           latency_model: LatencyModel = LatencyModel.DETERMINISTIC,
                           cv: float = 0.0, correlation: float = 0.0) -> TruthScenario:
    """Scenario whose truth equals the profile table's point estimates."""
    entries = {
        (p.role, p.config): (p.accuracy, p.latency_s) for p in table.entries.values()
    }
    return TruthScenario(entries, latency_model, cv, correlation, seed,
                         source=table.meta.source)


def parse_scenario(text: str) -> TruthScenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"syntax error at line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(doc, dict) or "entries" not in doc:
        raise ScenarioError("scenario document must be an object with an 'entries' array")
    if doc.get("format_version", SCENARIO_FORMAT_VERSION) != SCENARIO_FORMAT_VERSION:
        raise ScenarioError(f"unsupported scenario format_version {doc.get('format_version')!r}")
    try:
        model = LatencyModel(doc.get("latency_model", "deterministic"))
    except ValueError:
        raise ScenarioError(f"unknown latency_model {doc.get('latency_model')!r}") from None
    entries: dict[tuple[str, SubAgentConfig], tuple[float, float]] = {}
    for i, e in enumerate(doc["entries"]):
        try:
            key = (e["role"], SubAgentConfig(e["model"], int(e["budget"])))
            if key in entries:
                raise ScenarioError(f"duplicate scenario entry {key[0]}/{key[1].model}@{key[1].budget}")
            entries[key] = (float(e["accuracy"]), float(e["latency_s"]))
        except KeyError as err:
            raise ScenarioError(f"entries[{i}]: missing field {err.args[0]!r}") from None
    if "seed" not in doc:
        raise ScenarioError("scenario requires an explicit 'seed'")
    return TruthScenario(
        entries, model, float(doc.get("cv", 0.0)), float(doc.get("correlation", 0.0)),
        int(doc["seed"]), doc.get("source", ""),
    )


def load_scenario(path) -> TruthScenario:
    with open(path, "r", encoding="utf-8") as f:
        return parse_scenario(f.read())


def scenario_to_json(sc: TruthScenario) -> str:
    doc = {
        "format_version": SCENARIO_FORMAT_VERSION,
        "source": sc.source,
        "latency_model": sc.latency_model.value,
        "cv": sc.cv,
        "correlation": sc.correlation,
        "seed": sc.seed,
        "entries": [
            {"role": r, "model": c.model, "budget": c.budget, "accuracy": p, "latency_s": l}
            for (r, c), (p, l) in sorted(sc.entries.items())
        ],
    }
    return json.dumps(doc, indent=2)


def save_scenario(sc: TruthScenario, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(scenario_to_json(sc))
        f.write("\n")


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


@dataclass
class MeasuredPoint:
    config_id: str
    accuracy: float
    latency_s: float
    n_samples: int
    accuracy_se: Optional[float]
    latency_se: Optional[float]
    degenerate: bool = False  # n == 1: standard errors undefined


def _leaf_uniforms(scenario, stream_id, role, kind, n):
    return uniform_stream(scenario.seed, f"{stream_id}/{kind}/{role}", n)


def _simulate_vectorized(graph: Node, assignment: Mapping[str, SubAgentConfig],
                         scenario: TruthScenario, stream_id: str, n: int,
                         exec_model: ExecutionModel):
    """Success and latency arrays for queries 0..n-1 of one configuration."""
    mix = latent = None
    if scenario.correlation > 0.0:
        mix = uniform_stream(scenario.seed, f"{stream_id}/mix", n)
        latent = uniform_stream(scenario.seed, f"{stream_id}/latent", n)

    def leaf_draws(role: str):
        p, l = scenario.get(role, assignment[role])
        u = _leaf_uniforms(scenario, stream_id, role, "succ", n)
        if mix is not None:
            u = np.where(mix < scenario.correlation, latent, u)
        success = u < p
        if scenario.latency_model is LatencyModel.DETERMINISTIC or scenario.cv == 0.0:
            lat = np.full(n, l)
        else:
            z = ndtri(_leaf_uniforms(scenario, stream_id, role, "lat", n))
            lat = l * np.exp(scenario.lognormal_sigma * z)
        return success, lat

    def walk(node: Node):
        if isinstance(node, Leaf):
            if node.role not in assignment:
                raise ValidationError(f"assignment does not cover role {node.role!r}")
            return leaf_draws(node.role)
        if isinstance(node, (Seq, Or, And)):
            parts = [walk(c) for c in node.children]
            succ = parts[0][0]
            for s, _ in parts[1:]:
                succ = (succ | s) if isinstance(node, Or) else (succ & s)
            parallel = not isinstance(node, Seq) and exec_model is ExecutionModel.CRITICAL_PATH
            lat = parts[0][1]
            for _, l in parts[1:]:
                lat = np.maximum(lat, l) if parallel else lat + l
            return succ, lat
        if isinstance(node, Cond):
            ps, pl = walk(node.primary)
            fs, fl = walk(node.fallback)
            return ps | (~ps & fs), pl + (~ps) * fl
        if isinstance(node, (Loop, OptionalNode)):
            raise ValidationError("simulate requires a pruned, unrolled graph")
        raise ValidationError(f"unknown node {node!r}")

    return walk(graph)


def simulate_once(graph: Node, assignment: Mapping[str, SubAgentConfig],
                  scenario: TruthScenario, query_index: int,
                  exec_model: ExecutionModel = ExecutionModel.SEQUENTIAL_EDGE,
                  stream_id: Optional[str] = None) -> tuple[bool, float]:
    """Execute one query; a pure function of (seed, stream id, query index).

    ``stream_id`` defaults to the canonical id of the assignment alone;
    callers measuring full configurations pass the configuration id so the
    draws match the vectorized path exactly.
    """
    if stream_id is None:
        stream_id = config_id({}, dict(assignment))
    seed = scenario.seed

    mix = latent = None
    if scenario.correlation > 0.0:
        mix = uniform_at(seed, f"{stream_id}/mix", query_index)
        latent = uniform_at(seed, f"{stream_id}/latent", query_index)

    def leaf_draws(role: str):
        p, l = scenario.get(role, assignment[role])
        u = uniform_at(seed, f"{stream_id}/succ/{role}", query_index)
        if mix is not None and mix < scenario.correlation:
            u = latent
        success = u < p
        if scenario.latency_model is LatencyModel.DETERMINISTIC or scenario.cv == 0.0:
            lat = l
        else:
            z = float(ndtri(uniform_at(seed, f"{stream_id}/lat/{role}", query_index)))
            lat = l * math.exp(scenario.lognormal_sigma * z)
        return success, lat

    def walk(node: Node):
        if isinstance(node, Leaf):
            if node.role not in assignment:
                raise ValidationError(f"assignment does not cover role {node.role!r}")
            return leaf_draws(node.role)
        if isinstance(node, (Seq, Or, And)):
            parts = [walk(c) for c in node.children]
            succ = parts[0][0]
            for s, _ in parts[1:]:
                succ = (succ or s) if isinstance(node, Or) else (succ and s)
            parallel = not isinstance(node, Seq) and exec_model is ExecutionModel.CRITICAL_PATH
            lat = parts[0][1]
            for _, l in parts[1:]:
                lat = max(lat, l) if parallel else lat + l
            return succ, lat
        if isinstance(node, Cond):
            ps, pl = walk(node.primary)
            fs, fl = walk(node.fallback)
            return ps or fs, pl + (0.0 if ps else fl)
        if isinstance(node, (Loop, OptionalNode)):
            raise ValidationError("simulate requires a pruned, unrolled graph")
        raise ValidationError(f"unknown node {node!r}")

    success, latency = walk(graph)
    return bool(success), float(latency)


def measure_graph(graph: Node, assignment: Mapping[str, SubAgentConfig],
                  scenario: TruthScenario, n_samples: int, stream_id: str,
                  exec_model: ExecutionModel = ExecutionModel.SEQUENTIAL_EDGE) -> MeasuredPoint:
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    succ, lat = _simulate_vectorized(graph, assignment, scenario, stream_id, n_samples, exec_model)
    p = float(np.mean(succ))
    mean_lat = float(np.mean(lat))
    if n_samples == 1:
        return MeasuredPoint(stream_id, p, mean_lat, 1, None, None, degenerate=True)
    acc_se = math.sqrt(p * (1.0 - p) / n_samples)
    lat_se = float(np.std(lat, ddof=1)) / math.sqrt(n_samples)
    return MeasuredPoint(stream_id, p, mean_lat, n_samples, acc_se, lat_se)


def measure_configuration(spec: WorkflowSpec, config: WorkflowConfiguration,
                          scenario: TruthScenario, n_samples: int,
                          exec_model: ExecutionModel = ExecutionModel.SEQUENTIAL_EDGE) -> MeasuredPoint:
    """Measure one full workflow configuration under the scenario."""
    variant = resolve_variant(spec, config.structural_map())
    if variant.graph is None:
        raise ValidationError(f"configuration {config.id!r} prunes the whole graph")
    return measure_graph(variant.graph, config.assignment_map(), scenario, n_samples,
                         config.id, exec_model)


def _measure_task(args):
    spec, config, scenario, n, exec_model = args
    return measure_configuration(spec, config, scenario, n, exec_model)


def measure_many(spec: WorkflowSpec, configs: Sequence[WorkflowConfiguration],
                 scenario: TruthScenario, n_samples: int,
                 exec_model: ExecutionModel = ExecutionModel.SEQUENTIAL_EDGE,
                 workers: int = 1) -> list[MeasuredPoint]:
    tasks = [(spec, c, scenario, n_samples, exec_model) for c in configs]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_measure_task, tasks))
    return [_measure_task(t) for t in tasks]


# ---------------------------------------------------------------------------
# Restricted spaces and exhaustive evaluation
# ---------------------------------------------------------------------------

RESTRICTION_FORMAT_VERSION = 1
DEFAULT_BRUTE_FORCE_CAP = 1000


@dataclass
class Restriction:
    """Optional clamp on the enumerable space: explicit structures and/or
    per-role allowed configs.  Roles not listed keep their declared space."""

    structures: Optional[list[dict[str, bool]]] = None
    configs: Optional[dict[str, list[SubAgentConfig]]] = None


def parse_restriction(text: str) -> Restriction:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(f"syntax error at line {e.lineno}, column {e.colno}: {e.msg}") from None
    if doc.get("format_version", RESTRICTION_FORMAT_VERSION) != RESTRICTION_FORMAT_VERSION:
        raise ValidationError(f"unsupported restriction format_version {doc.get('format_version')!r}")
    structures = None
    if "structures" in doc and doc["structures"] is not None:
        structures = [{k: bool(v) for k, v in s.items()} for s in doc["structures"]]
    configs = None
    if "configs" in doc and doc["configs"] is not None:
        configs = {
            role: [SubAgentConfig(c["model"], int(c["budget"])) for c in lst]
            for role, lst in doc["configs"].items()
        }
    return Restriction(structures, configs)


def load_restriction(path) -> Restriction:
    with open(path, "r", encoding="utf-8") as f:
        return parse_restriction(f.read())


def enumerate_restricted(spec: WorkflowSpec, table: ProfileTable,
                         restriction: Optional[Restriction] = None,
                         cap: int = DEFAULT_BRUTE_FORCE_CAP) -> list[WorkflowConfiguration]:
    """Materialize every configuration of the (restricted) space, in
    canonical order.  Raises when the space exceeds ``cap``."""
    restriction = restriction or Restriction()
    if restriction.structures is not None:
        variants = [resolve_variant(spec, s) for s in restriction.structures]
    else:
        variants = enumerate_structures(spec).variants

    def role_configs(role: str) -> list[SubAgentConfig]:
        if restriction.configs is not None:
            allowed = restriction.configs.get(role, restriction.configs.get(base_role(role)))
            if allowed is not None:
                return sorted(allowed)
        return declared_configs(spec, table, role)

    total = 0
    for v in variants:
        if v.empty:
            raise ValidationError(f"structural variant {v.key} prunes the whole graph")
        size = 1
        for r in v.active_roles:
            size *= len(role_configs(r))
        total += size
    if total > cap:
        raise ValidationError(f"restricted space has {total} configurations, over the cap of {cap}")

    out: list[WorkflowConfiguration] = []
    from itertools import product as iproduct

    for v in variants:
        pools = [role_configs(r) for r in v.active_roles]
        for combo in iproduct(*pools):
            assignment = dict(zip(v.active_roles, combo))
            out.append(WorkflowConfiguration.make(v.choices, assignment))
    return out


def brute_force_frontier(spec: WorkflowSpec, table: ProfileTable, scenario: TruthScenario,
                         restriction: Optional[Restriction] = None,
                         n_samples: int = 1000,
                         exec_model: ExecutionModel = ExecutionModel.SEQUENTIAL_EDGE,
                         cap: int = DEFAULT_BRUTE_FORCE_CAP,
                         workers: int = 1) -> tuple[list[MeasuredPoint], list[int]]:
    """Measure every configuration in the restricted space and return the
    measured points plus the indices of the measured non-dominated set."""
    configs = enumerate_restricted(spec, table, restriction, cap)
    points = measure_many(spec, configs, scenario, n_samples, exec_model, workers)
    frontier = nondominated_sort_2d(
        [(m.accuracy, m.latency_s, m.config_id) for m in points]
    )
    return points, frontier
