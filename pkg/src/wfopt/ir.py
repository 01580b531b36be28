"""Workflow graph representation and structural configuration space.

A workflow is a tree of composition nodes over named sub-agent roles:

* ``Leaf(role)``       -- one profiled sub-agent call
* ``Seq(children)``    -- stages that all execute, one after another
* ``Or(children)``     -- parallel branches; any success counts
* ``And(children)``    -- parallel branches; all must succeed
* ``Cond(a, b)``       -- ``b`` runs only if ``a`` fails
* ``Loop(body, stages, k)`` -- bounded retry: up to ``k`` repair stages,
  each running only while the result is still failing
* ``OptionalNode(child, choice)`` -- subtree gated by a boolean structural
  choice

Structural choices plus activation constraints define the set of workflow
*structures*; ``enumerate_structures`` materializes them in a canonical
order.  ``unroll_loops`` rewrites every ``Loop`` into a chain of ``Cond``
nodes, giving the repair stages depth-suffixed role ids (``fix#1``,
``fix#2``, ...), so that everything downstream only ever sees loop-free
graphs.

Specs and graphs are immutable after parsing; all operations here are pure
functions.
"""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

from .errors import SpecError

# Declared ids must stay clear of the separators used in canonical
# configuration ids ("=", ",", "|", "@") and of the unroll suffix marker "#".
_TOKEN_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.:-]*$")

SUFFIX_SEP = "#"


def valid_token(s: str) -> bool:
    return bool(_TOKEN_RE.match(s))


def base_role(role_id: str) -> str:
    """Strip the unroll depth suffix: ``fix#2`` -> ``fix``."""
    return role_id.split(SUFFIX_SEP, 1)[0]


# ---------------------------------------------------------------------------
# Graph nodes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Leaf:
    role: str


@dataclass(frozen=True)
class Seq:
    children: tuple["Node", ...]


@dataclass(frozen=True)
class Or:
    children: tuple["Node", ...]


@dataclass(frozen=True)
class And:
    children: tuple["Node", ...]


@dataclass(frozen=True)
class Cond:
    primary: "Node"
    fallback: "Node"


@dataclass(frozen=True)
class Loop:
    body: "Node"
    repair_stages: tuple["Node", ...]
    max_retries: int


@dataclass(frozen=True)
class OptionalNode:
    child: "Node"
    choice: str


Node = Union[Leaf, Seq, Or, And, Cond, Loop, OptionalNode]


# ---------------------------------------------------------------------------
# Activation constraints
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChoiceIsOn:
    choice: str


@dataclass(frozen=True)
class CountGE:
    choices: tuple[str, ...]
    k: int


@dataclass(frozen=True)
class Not:
    operand: "Predicate"


@dataclass(frozen=True)
class AllOf:
    operands: tuple["Predicate", ...]


@dataclass(frozen=True)
class AnyOf:
    operands: tuple["Predicate", ...]


Predicate = Union[ChoiceIsOn, CountGE, Not, AllOf, AnyOf]


def eval_predicate(pred: Predicate, assignment: Mapping[str, bool]) -> bool:
    if isinstance(pred, ChoiceIsOn):
        return assignment[pred.choice]
    if isinstance(pred, CountGE):
        return sum(1 for c in pred.choices if assignment[c]) >= pred.k
    if isinstance(pred, Not):
        return not eval_predicate(pred.operand, assignment)
    if isinstance(pred, AllOf):
        return all(eval_predicate(p, assignment) for p in pred.operands)
    if isinstance(pred, AnyOf):
        return any(eval_predicate(p, assignment) for p in pred.operands)
    raise SpecError(f"unknown predicate {pred!r}")


@dataclass(frozen=True)
class AtLeastK:
    choices: tuple[str, ...]
    k: int


@dataclass(frozen=True)
class ImpliedBy:
    """If ``condition`` holds, ``target`` must be on."""

    target: str
    condition: Predicate


@dataclass(frozen=True)
class RequiresCountGE:
    """``target`` may be on only if at least ``k`` of ``choices`` are on."""

    target: str
    choices: tuple[str, ...]
    k: int


Constraint = Union[AtLeastK, ImpliedBy, RequiresCountGE]


def constraint_satisfied(c: Constraint, assignment: Mapping[str, bool]) -> bool:
    if isinstance(c, AtLeastK):
        return sum(1 for x in c.choices if assignment[x]) >= c.k
    if isinstance(c, ImpliedBy):
        return assignment[c.target] or not eval_predicate(c.condition, assignment)
    if isinstance(c, RequiresCountGE):
        if not assignment[c.target]:
            return True
        return sum(1 for x in c.choices if assignment[x]) >= c.k
    raise SpecError(f"unknown constraint {c!r}")


# ---------------------------------------------------------------------------
# Spec
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConfigSpace:
    """Cartesian model x budget grid of candidate configs for one role."""

    models: tuple[str, ...]
    budgets: tuple[int, ...]


@dataclass(frozen=True)
class Role:
    id: str
    # None: the role's candidate space is whatever the profile table holds.
    config_space: Optional[ConfigSpace]


@dataclass(frozen=True)
class Choice:
    id: str
    default: bool


@dataclass(frozen=True)
class WorkflowSpec:
    name: str
    graph: Node
    choices: tuple[Choice, ...]
    constraints: tuple[Constraint, ...]
    roles: tuple[Role, ...]

    def choice_ids(self) -> tuple[str, ...]:
        return tuple(sorted(c.id for c in self.choices))

    def role_ids(self) -> tuple[str, ...]:
        return tuple(sorted(r.id for r in self.roles))

    def role(self, role_id: str) -> Role:
        for r in self.roles:
            if r.id == role_id:
                return r
        raise SpecError(f"unknown role {role_id!r}")


# ---------------------------------------------------------------------------
# Graph traversal helpers
# ---------------------------------------------------------------------------


def leaf_roles(node: Optional[Node]) -> tuple[str, ...]:
    """Role ids of every leaf, left to right (duplicates preserved)."""
    if node is None:
        return ()
    if isinstance(node, Leaf):
        return (node.role,)
    if isinstance(node, (Seq, Or, And)):
        out: list[str] = []
        for c in node.children:
            out.extend(leaf_roles(c))
        return tuple(out)
    if isinstance(node, Cond):
        return leaf_roles(node.primary) + leaf_roles(node.fallback)
    if isinstance(node, Loop):
        out = list(leaf_roles(node.body))
        for s in node.repair_stages:
            out.extend(leaf_roles(s))
        return tuple(out)
    if isinstance(node, OptionalNode):
        return leaf_roles(node.child)
    raise SpecError(f"unknown node {node!r}")


def referenced_choices(node: Node) -> set[str]:
    if isinstance(node, Leaf):
        return set()
    if isinstance(node, (Seq, Or, And)):
        out: set[str] = set()
        for c in node.children:
            out |= referenced_choices(c)
        return out
    if isinstance(node, Cond):
        return referenced_choices(node.primary) | referenced_choices(node.fallback)
    if isinstance(node, Loop):
        out = referenced_choices(node.body)
        for s in node.repair_stages:
            out |= referenced_choices(s)
        return out
    if isinstance(node, OptionalNode):
        return {node.choice} | referenced_choices(node.child)
    raise SpecError(f"unknown node {node!r}")


def _suffix_leaves(node: Node, depth: int) -> Node:
    if isinstance(node, Leaf):
        return Leaf(f"{node.role}{SUFFIX_SEP}{depth}")
    if isinstance(node, Seq):
        return Seq(tuple(_suffix_leaves(c, depth) for c in node.children))
    if isinstance(node, Or):
        return Or(tuple(_suffix_leaves(c, depth) for c in node.children))
    if isinstance(node, And):
        return And(tuple(_suffix_leaves(c, depth) for c in node.children))
    if isinstance(node, Cond):
        return Cond(_suffix_leaves(node.primary, depth), _suffix_leaves(node.fallback, depth))
    if isinstance(node, OptionalNode):
        return OptionalNode(_suffix_leaves(node.child, depth), node.choice)
    raise SpecError("repair stages may not contain nested loops")


def unroll_loops(node: Node) -> Node:
    """Rewrite every ``Loop`` into a chain of ``Cond`` nodes.

    ``Loop(body, stages, k)`` becomes ``Cond(...Cond(body, s1#1)..., sk#k)``:
    stage ``i`` runs only if everything before it failed, which is exactly
    the bounded-retry semantics.  ``k = 0`` degenerates to the body alone.
    Graphs without loops are returned structurally unchanged, so the
    rewrite is idempotent.
    """
    if isinstance(node, Leaf):
        return node
    if isinstance(node, Seq):
        return Seq(tuple(unroll_loops(c) for c in node.children))
    if isinstance(node, Or):
        return Or(tuple(unroll_loops(c) for c in node.children))
    if isinstance(node, And):
        return And(tuple(unroll_loops(c) for c in node.children))
    if isinstance(node, Cond):
        return Cond(unroll_loops(node.primary), unroll_loops(node.fallback))
    if isinstance(node, OptionalNode):
        return OptionalNode(unroll_loops(node.child), node.choice)
    if isinstance(node, Loop):
        if node.max_retries > len(node.repair_stages):
            raise SpecError(
                f"loop max_retries={node.max_retries} exceeds the "
                f"{len(node.repair_stages)} declared repair stages"
            )
        acc = unroll_loops(node.body)
        for depth in range(1, node.max_retries + 1):
            stage = _suffix_leaves(unroll_loops(node.repair_stages[depth - 1]), depth)
            acc = Cond(acc, stage)
        return acc
    raise SpecError(f"unknown node {node!r}")


def prune_inactive(node: Node, assignment: Mapping[str, bool]) -> Optional[Node]:
    """Drop every ``OptionalNode`` subtree whose choice is off.

    Returns None when the whole subtree vanishes.  A loop whose repair
    stages were partially pruned keeps its retry budget clamped to the
    stages that remain.
    """
    if isinstance(node, Leaf):
        return node
    if isinstance(node, OptionalNode):
        if node.choice not in assignment:
            raise SpecError(f"assignment does not cover choice {node.choice!r}")
        if not assignment[node.choice]:
            return None
        return prune_inactive(node.child, assignment)
    if isinstance(node, (Seq, Or, And)):
        kept = tuple(
            p for p in (prune_inactive(c, assignment) for c in node.children) if p is not None
        )
        if not kept:
            return None
        if len(kept) == 1:
            return kept[0]
        return type(node)(kept)
    if isinstance(node, Cond):
        p = prune_inactive(node.primary, assignment)
        f = prune_inactive(node.fallback, assignment)
        if p is not None and f is not None:
            return Cond(p, f)
        return p if p is not None else f
    if isinstance(node, Loop):
        body = prune_inactive(node.body, assignment)
        if body is None:
            return None
        stages = tuple(
            p
            for p in (prune_inactive(s, assignment) for s in node.repair_stages)
            if p is not None
        )
        return Loop(body, stages, min(node.max_retries, len(stages)))
    raise SpecError(f"unknown node {node!r}")


# ---------------------------------------------------------------------------
# Structural enumeration
# ---------------------------------------------------------------------------


@dataclass
class StructuralVariant:
    """One satisfying boolean assignment plus its residual (unrolled) graph."""

    choices: dict[str, bool]
    graph: Optional[Node]
    active_roles: tuple[str, ...]
    key: str

    @property
    def empty(self) -> bool:
        return self.graph is None


@dataclass
class StructuralSpace:
    variants: list[StructuralVariant]
    unsatisfiable: bool = False


def structural_key(assignment: Mapping[str, bool]) -> str:
    return ",".join(f"{cid}={int(assignment[cid])}" for cid in sorted(assignment))


def resolve_variant(spec: WorkflowSpec, assignment: Mapping[str, bool]) -> StructuralVariant:
    """Prune + unroll the spec graph under one structural assignment."""
    for c in spec.constraints:
        if not constraint_satisfied(c, assignment):
            raise SpecError(f"constraint violated by assignment {structural_key(assignment)}")
    pruned = prune_inactive(spec.graph, assignment)
    graph = unroll_loops(pruned) if pruned is not None else None
    active = tuple(sorted(leaf_roles(graph)))
    return StructuralVariant(dict(assignment), graph, active, structural_key(assignment))


def enumerate_structures(spec: WorkflowSpec) -> StructuralSpace:
    """All constraint-satisfying boolean assignments, in canonical order.

    Order is lexicographic over sorted choice ids with False < True, so the
    result is deterministic across runs and across any internal parallelism.
    An empty result is flagged as unsatisfiable rather than raised.
    """
    ids = spec.choice_ids()
    variants: list[StructuralVariant] = []
    for bits in itertools.product((False, True), repeat=len(ids)):
        assignment = dict(zip(ids, bits))
        if all(constraint_satisfied(c, assignment) for c in spec.constraints):
            variants.append(resolve_variant(spec, assignment))
    return StructuralSpace(variants, unsatisfiable=not variants)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _parse_node(obj, path: str) -> Node:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise SpecError(f"{path}: expected a node object with a 'kind' field")
    kind = obj["kind"]
    if kind == "leaf":
        role = obj.get("role")
        if not isinstance(role, str):
            raise SpecError(f"{path}: leaf requires a string 'role'")
        return Leaf(role)
    if kind in ("seq", "or", "and"):
        children = obj.get("children")
        if not isinstance(children, list) or not children:
            raise SpecError(f"{path}: '{kind}' requires a non-empty 'children' array")
        parsed = tuple(
            _parse_node(c, f"{path}.children[{i}]") for i, c in enumerate(children)
        )
        return {"seq": Seq, "or": Or, "and": And}[kind](parsed)
    if kind == "cond":
        if "primary" not in obj or "fallback" not in obj:
            raise SpecError(f"{path}: 'cond' requires 'primary' and 'fallback'")
        return Cond(
            _parse_node(obj["primary"], f"{path}.primary"),
            _parse_node(obj["fallback"], f"{path}.fallback"),
        )
    if kind == "loop":
        if "body" not in obj:
            raise SpecError(f"{path}: 'loop' requires 'body'")
        stages = obj.get("repair_stages", [])
        if not isinstance(stages, list):
            raise SpecError(f"{path}: 'repair_stages' must be an array")
        max_retries = obj.get("max_retries")
        if not isinstance(max_retries, int) or max_retries < 0:
            raise SpecError(f"{path}: 'max_retries' must be a nonnegative integer")
        parsed_stages = tuple(
            _parse_node(s, f"{path}.repair_stages[{i}]") for i, s in enumerate(stages)
        )
        if max_retries > len(parsed_stages):
            raise SpecError(
                f"{path}: max_retries={max_retries} exceeds the "
                f"{len(parsed_stages)} declared repair stages"
            )
        return Loop(_parse_node(obj["body"], f"{path}.body"), parsed_stages, max_retries)
    if kind == "optional":
        if "child" not in obj or "choice" not in obj:
            raise SpecError(f"{path}: 'optional' requires 'child' and 'choice'")
        if not isinstance(obj["choice"], str):
            raise SpecError(f"{path}: 'choice' must be a string")
        return OptionalNode(_parse_node(obj["child"], f"{path}.child"), obj["choice"])
    raise SpecError(f"{path}: unknown node kind {kind!r}")


def _parse_predicate(obj, path: str) -> Predicate:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise SpecError(f"{path}: expected a predicate object with a 'kind' field")
    kind = obj["kind"]
    if kind == "choice":
        return ChoiceIsOn(obj["choice"])
    if kind == "count_ge":
        return CountGE(tuple(obj["choices"]), int(obj["k"]))
    if kind == "not":
        return Not(_parse_predicate(obj["operand"], f"{path}.operand"))
    if kind in ("all_of", "any_of"):
        ops = tuple(
            _parse_predicate(p, f"{path}.operands[{i}]")
            for i, p in enumerate(obj.get("operands", []))
        )
        return AllOf(ops) if kind == "all_of" else AnyOf(ops)
    raise SpecError(f"{path}: unknown predicate kind {kind!r}")


def _parse_constraint(obj, path: str) -> Constraint:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise SpecError(f"{path}: expected a constraint object with a 'kind' field")
    kind = obj["kind"]
    try:
        if kind == "at_least_k":
            return AtLeastK(tuple(obj["choices"]), int(obj["k"]))
        if kind == "implied_by":
            return ImpliedBy(obj["target"], _parse_predicate(obj["condition"], f"{path}.condition"))
        if kind == "requires_count_ge":
            return RequiresCountGE(obj["target"], tuple(obj["choices"]), int(obj["k"]))
    except KeyError as e:
        raise SpecError(f"{path}: missing field {e.args[0]!r}") from None
    raise SpecError(f"{path}: unknown constraint kind {kind!r}")


def _predicate_choices(pred: Predicate) -> set[str]:
    if isinstance(pred, ChoiceIsOn):
        return {pred.choice}
    if isinstance(pred, CountGE):
        return set(pred.choices)
    if isinstance(pred, Not):
        return _predicate_choices(pred.operand)
    if isinstance(pred, (AllOf, AnyOf)):
        out: set[str] = set()
        for p in pred.operands:
            out |= _predicate_choices(p)
        return out
    return set()


def _constraint_choices(c: Constraint) -> set[str]:
    if isinstance(c, AtLeastK):
        return set(c.choices)
    if isinstance(c, ImpliedBy):
        return {c.target} | _predicate_choices(c.condition)
    if isinstance(c, RequiresCountGE):
        return {c.target} | set(c.choices)
    return set()


def parse_workflow_spec(text: str) -> WorkflowSpec:
    """Parse and fully validate a workflow-spec JSON document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SpecError(f"syntax error at line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(doc, dict):
        raise SpecError("top level must be a JSON object")

    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise SpecError("missing or empty 'name'")

    roles: list[Role] = []
    seen_roles: set[str] = set()
    for i, r in enumerate(doc.get("roles", [])):
        rid = r.get("id")
        if not isinstance(rid, str) or not valid_token(rid):
            raise SpecError(f"roles[{i}]: invalid role id {rid!r}")
        if rid in seen_roles:
            raise SpecError(f"duplicate role id {rid!r}")
        seen_roles.add(rid)
        space = r.get("config_space")
        parsed_space = None
        if space is not None:
            models = space.get("models")
            budgets = space.get("budgets")
            if not models or not budgets:
                raise SpecError(f"roles[{i}]: config_space needs 'models' and 'budgets'")
            for m in models:
                if not isinstance(m, str) or not valid_token(m):
                    raise SpecError(f"roles[{i}]: invalid model id {m!r}")
            for b in budgets:
                if not isinstance(b, int) or b < 1:
                    raise SpecError(f"roles[{i}]: budgets must be positive integers, got {b!r}")
            if len(set(models)) != len(models) or len(set(budgets)) != len(budgets):
                raise SpecError(f"roles[{i}]: duplicate entries in config_space")
            parsed_space = ConfigSpace(tuple(models), tuple(budgets))
        roles.append(Role(rid, parsed_space))

    choices: list[Choice] = []
    seen_choices: set[str] = set()
    for i, c in enumerate(doc.get("choices", [])):
        cid = c.get("id")
        if not isinstance(cid, str) or not valid_token(cid):
            raise SpecError(f"choices[{i}]: invalid choice id {cid!r}")
        if cid in seen_choices:
            raise SpecError(f"duplicate choice id {cid!r}")
        if cid in seen_roles:
            raise SpecError(f"choice id {cid!r} collides with a role id")
        seen_choices.add(cid)
        choices.append(Choice(cid, bool(c.get("default", True))))

    constraints = tuple(
        _parse_constraint(c, f"constraints[{i}]")
        for i, c in enumerate(doc.get("constraints", []))
    )
    for c in constraints:
        for cid in _constraint_choices(c):
            if cid not in seen_choices:
                raise SpecError(f"constraint references unknown choice {cid!r}")

    if "graph" not in doc:
        raise SpecError("missing 'graph'")
    graph = _parse_node(doc["graph"], "graph")

    for rid in leaf_roles(graph):
        if rid not in seen_roles:
            raise SpecError(f"unknown role {rid!r} referenced by the graph")
    for cid in referenced_choices(graph):
        if cid not in seen_choices:
            raise SpecError(f"unknown choice {cid!r} referenced by the graph")

    # Role uniqueness is required on the fully unrolled graph; loop repair
    # stages may reuse a declared role because unrolling suffixes them.
    unrolled = unroll_loops(graph)
    all_leaves = leaf_roles(unrolled)
    dupes = {r for r in all_leaves if all_leaves.count(r) > 1}
    if dupes:
        raise SpecError(f"role(s) {sorted(dupes)} appear in more than one leaf after unrolling")

    return WorkflowSpec(name, graph, tuple(choices), constraints, tuple(roles))


def load_workflow_spec(path) -> WorkflowSpec:
    with open(path, "r", encoding="utf-8") as f:
        return parse_workflow_spec(f.read())
