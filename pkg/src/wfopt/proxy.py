"""Structure-aware composition of sub-agent profiles into workflow estimates.

Accuracy composes by control-flow semantics: stages in sequence (and
conjunctive branches) multiply, disjunctive branches combine as
1 - prod(1 - p), and a conditional fallback adds (1 - p1) * p2.  Latency
composes by the execution model: on a sequential edge every executed call
is summed and conditional stages are weighted by the probability they run;
under critical-path execution parallel branches take the max instead.

The evaluator is written over plain arithmetic so the same code path
serves scalars and numpy arrays; the explorer exploits that to evaluate
whole option meshes at once and still get bit-identical numbers to the
scalar API.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from math import isfinite
from typing import Mapping

import numpy as np

from .errors import SpecError, ValidationError
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
    leaf_roles,
    resolve_variant,
)
from .profiles import ProfileTable, SubAgentConfig

PROXY_VERSION = "analytic-1"


class ExecutionModel(str, Enum):
    SEQUENTIAL_EDGE = "sequential-edge"
    CRITICAL_PATH = "critical-path"


@dataclass(frozen=True)
class Estimate:
    accuracy: float
    latency_s: float

    def __post_init__(self):
        if not (isfinite(self.accuracy) and 0.0 <= self.accuracy <= 1.0):
            raise ValidationError(f"estimate accuracy {self.accuracy!r} outside [0, 1]")
        if not (isfinite(self.latency_s) and self.latency_s >= 0.0):
            raise ValidationError(f"estimate latency {self.latency_s!r} negative or non-finite")


def compose(node: Node, acc_of: Mapping[str, object], lat_of: Mapping[str, object],
            exec_model: ExecutionModel):
    """Recursive (accuracy, latency) composition of an unrolled graph.

    ``acc_of`` / ``lat_of`` map leaf roles to floats or broadcastable numpy
    arrays.  Children are folded left to right, so scalar and vectorized
    evaluations perform the identical float operations.
    """
    if isinstance(node, Leaf):
        try:
            return acc_of[node.role], lat_of[node.role]
        except KeyError:
            raise ValidationError(f"assignment does not cover role {node.role!r}") from None
    if isinstance(node, (Seq, And, Or)):
        parts = [compose(c, acc_of, lat_of, exec_model) for c in node.children]
        if isinstance(node, Or):
            acc = 1.0 - _prod_complement(parts)
        else:
            acc = parts[0][0]
            for a, _ in parts[1:]:
                acc = acc * a
        # Or/And branches all execute on a sequential edge (latencies sum);
        # under critical-path execution the slowest branch wins instead.
        parallel = not isinstance(node, Seq) and exec_model is ExecutionModel.CRITICAL_PATH
        lat = parts[0][1]
        for _, l in parts[1:]:
            lat = np.maximum(lat, l) if parallel else lat + l
        return acc, lat
    if isinstance(node, Cond):
        pa, la = compose(node.primary, acc_of, lat_of, exec_model)
        pb, lb = compose(node.fallback, acc_of, lat_of, exec_model)
        return pa + (1.0 - pa) * pb, la + (1.0 - pa) * lb
    if isinstance(node, Loop):
        raise ValidationError("graph contains a Loop node; unroll before estimating")
    if isinstance(node, OptionalNode):
        raise ValidationError("graph contains an OptionalNode; prune before estimating")
    raise SpecError(f"unknown node {node!r}")


def _prod_complement(parts):
    out = 1.0 - parts[0][0]
    for a, _ in parts[1:]:
        out = out * (1.0 - a)
    return out


def _leaf_maps(graph: Node, assignment: Mapping[str, SubAgentConfig], table: ProfileTable):
    acc_of: dict[str, float] = {}
    lat_of: dict[str, float] = {}
    for role in leaf_roles(graph):
        if role not in assignment:
            raise ValidationError(f"assignment does not cover role {role!r}")
        p = table.get(role, assignment[role])
        acc_of[role] = p.accuracy
        lat_of[role] = p.latency_s
    return acc_of, lat_of


def estimate_accuracy(graph: Node, assignment: Mapping[str, SubAgentConfig],
                      table: ProfileTable) -> float:
    """Workflow-level success probability of an unrolled graph."""
    acc_of, lat_of = _leaf_maps(graph, assignment, table)
    acc, _ = compose(graph, acc_of, lat_of, ExecutionModel.SEQUENTIAL_EDGE)
    return float(acc)


def estimate_latency(graph: Node, assignment: Mapping[str, SubAgentConfig],
                     table: ProfileTable,
                     exec_model: ExecutionModel = ExecutionModel.SEQUENTIAL_EDGE) -> float:
    """Expected end-to-end latency of an unrolled graph, in seconds."""
    acc_of, lat_of = _leaf_maps(graph, assignment, table)
    _, lat = compose(graph, acc_of, lat_of, exec_model)
    return float(lat)


def estimate(spec: WorkflowSpec, structural: Mapping[str, bool],
             assignment: Mapping[str, SubAgentConfig], table: ProfileTable,
             exec_model: ExecutionModel = ExecutionModel.SEQUENTIAL_EDGE) -> Estimate:
    """Estimate one full workflow configuration.

    Validates the structural assignment against the spec constraints,
    prunes inactive optional subtrees, unrolls loops, and composes the
    residual graph.
    """
    variant = resolve_variant(spec, structural)
    if variant.graph is None:
        raise ValidationError("structural assignment prunes the whole graph")
    extra = set(assignment) - set(variant.active_roles)
    if extra:
        raise ValidationError(f"assignment covers inactive role(s) {sorted(extra)}")
    acc_of, lat_of = _leaf_maps(variant.graph, assignment, table)
    acc, lat = compose(variant.graph, acc_of, lat_of, exec_model)
    return Estimate(float(acc), float(lat))
