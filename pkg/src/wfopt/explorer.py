"""Design-space enumeration and non-dominated trade-off set construction.

The explorer walks every structural variant of a workflow spec, crosses the
per-role pruned option sets, estimates each candidate with the
compositional proxy, and keeps only the non-dominated (accuracy, latency)
points.  Candidate meshes are evaluated as numpy arrays in bounded-size
chunks and filtered incrementally, so memory stays proportional to the
frontier rather than to the space, which can reach billions of
configurations before pruning.

Output is deterministic: variants are visited in canonical order, the
final frontier is re-sorted and re-filtered once at the end, and exact
ties collapse to the smallest configuration id.  The same artifact bytes
come out no matter how many workers ran.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import __version__
from .errors import ArtifactError, CoverageError, InternalError, ValidationError
from .ir import StructuralVariant, WorkflowSpec, base_role, enumerate_structures
from .profiles import ProfileTable, PrunedOptionSet, SubAgentConfig, prune_dominated
from .proxy import PROXY_VERSION, Estimate, ExecutionModel, compose

ARTIFACT_FORMAT_VERSION = 1
_CHUNK_LIMIT = 1 << 21  # candidates evaluated per numpy mesh


# ---------------------------------------------------------------------------
# Configurations and compiled sets
# ---------------------------------------------------------------------------


def config_id(structural: Mapping[str, bool],
              assignment: Mapping[str, SubAgentConfig]) -> str:
    """Canonical, injective encoding of one workflow configuration."""
    s = ",".join(f"{cid}={int(structural[cid])}" for cid in sorted(structural))
    a = ",".join(
        f"{role}={assignment[role].model}@{assignment[role].budget}"
        for role in sorted(assignment)
    )
    return f"{s}|{a}"


@dataclass(frozen=True)
class WorkflowConfiguration:
    structural: tuple[tuple[str, bool], ...]
    assignment: tuple[tuple[str, SubAgentConfig], ...]
    id: str

    @staticmethod
    def make(structural: Mapping[str, bool],
             assignment: Mapping[str, SubAgentConfig]) -> "WorkflowConfiguration":
        return WorkflowConfiguration(
            tuple(sorted(structural.items())),
            tuple(sorted(assignment.items())),
            config_id(structural, assignment),
        )

    def structural_map(self) -> dict[str, bool]:
        return dict(self.structural)

    def assignment_map(self) -> dict[str, SubAgentConfig]:
        return dict(self.assignment)


@dataclass(frozen=True)
class CompiledEntry:
    config: WorkflowConfiguration
    estimate: Estimate


@dataclass
class CompiledMeta:
    spec_name: str
    profile_source: str
    execution_model: str
    proxy_version: str
    epsilon: float
    full_space_size: int
    pruned_space_size: int
    structure_count: int


@dataclass
class CompiledSet:
    entries: list[CompiledEntry]
    meta: CompiledMeta

    def __len__(self) -> int:
        return len(self.entries)

    def ids(self) -> list[str]:
        return [e.config.id for e in self.entries]

    def get(self, cid: str) -> CompiledEntry:
        for e in self.entries:
            if e.config.id == cid:
                return e
        raise ArtifactError(f"no entry with id {cid!r}")

    def validate(self) -> None:
        """Check the staircase invariant and id integrity."""
        prev_acc, prev_lat = -1.0, -1.0
        for e in self.entries:
            if e.estimate.latency_s <= prev_lat or e.estimate.accuracy <= prev_acc:
                raise ArtifactError(
                    f"entry {e.config.id!r} breaks the non-dominated staircase"
                )
            prev_acc, prev_lat = e.estimate.accuracy, e.estimate.latency_s
            expected = config_id(e.config.structural_map(), e.config.assignment_map())
            if e.config.id != expected:
                raise ArtifactError(f"entry id {e.config.id!r} does not match its contents")


# ---------------------------------------------------------------------------
# Non-dominated sorting
# ---------------------------------------------------------------------------


def _eps_dominated(p1, l1, p2, l2, eps: float) -> bool:
    return p2 >= p1 - eps and l2 <= l1 + eps and (p2 > p1 + eps or l2 < l1 - eps)


def nondominated_sort_2d(points: Sequence[tuple[float, float, object]],
                         epsilon: float = 0.0) -> list[int]:
    """Indices of the non-dominated points, in latency-ascending order.

    Higher accuracy and lower latency are better.  O(n log n): sort by
    (latency asc, accuracy desc, id asc) and sweep keeping points whose
    accuracy strictly exceeds the running maximum; exact duplicates
    collapse to the smallest id.  With ``epsilon > 0`` a second pass also
    drops frontier points that another frontier point beats by more than
    epsilon while staying within epsilon on the other axis.
    """
    accs = [float(p[0]) for p in points]
    lats = [float(p[1]) for p in points]
    for a, l in zip(accs, lats):
        if math.isnan(a) or math.isnan(l):
            raise ValidationError("NaN in non-dominated sort input")
    order = sorted(range(len(points)), key=lambda i: (lats[i], -accs[i], str(points[i][2])))
    kept: list[int] = []
    best = -math.inf
    for i in order:
        if accs[i] > best:
            kept.append(i)
            best = accs[i]
    if epsilon > 0.0:
        kept = [
            i
            for i in kept
            if not any(
                j != i and _eps_dominated(accs[i], lats[i], accs[j], lats[j], epsilon)
                for j in kept
            )
        ]
    return kept


# ---------------------------------------------------------------------------
# Counting
# ---------------------------------------------------------------------------


def count_configurations(spec: WorkflowSpec, option_counts: Mapping[str, int]) -> int:
    """Exact configuration count: sum over structures of the per-role product.

    Python integers are unbounded, so counts stay exact at any scale.
    """
    total = 0
    for v in enumerate_structures(spec).variants:
        if v.empty:
            raise ValidationError(
                f"structural variant {v.key} prunes the whole graph; "
                "add a constraint excluding it"
            )
        prod = 1
        for role in v.active_roles:
            n = option_counts.get(role, option_counts.get(base_role(role)))
            if n is None:
                raise ValidationError(f"role {role!r} missing from option counts")
            if n < 1:
                raise ValidationError(f"role {role!r} has option count {n} < 1")
            prod *= int(n)
        total += prod
    return total


# ---------------------------------------------------------------------------
# Option spaces
# ---------------------------------------------------------------------------


def declared_configs(spec: WorkflowSpec, table: ProfileTable, role: str) -> list[SubAgentConfig]:
    """Candidate configs for a (possibly depth-suffixed) role."""
    r = spec.role(base_role(role))
    if r.config_space is None:
        return table.configs_for(role)
    return [SubAgentConfig(m, b) for m in r.config_space.models for b in r.config_space.budgets]


def check_coverage(spec: WorkflowSpec, table: ProfileTable,
                   roles: Iterable[str]) -> None:
    holes = []
    for role in sorted(set(roles)):
        configs = declared_configs(spec, table, role)
        if not configs:
            holes.append((role, SubAgentConfig("any", 1)))
            continue
        for c in configs:
            if not table.has(role, c):
                holes.append((role, c))
    if holes:
        raise CoverageError(holes)


def pruned_option_sets(spec: WorkflowSpec, table: ProfileTable, roles: Iterable[str],
                       epsilon: float = 0.0) -> dict[str, PrunedOptionSet]:
    """Pruned options per role; depth-suffixed roles share the base-role
    result when they have no depth-specific profiles."""
    out: dict[str, PrunedOptionSet] = {}
    cache: dict[str, PrunedOptionSet] = {}
    for role in sorted(set(roles)):
        exact = any(r == role for r, _ in table.entries)
        cache_key = role if exact else base_role(role)
        if cache_key not in cache:
            grid = declared_configs(spec, table, role)
            cache[cache_key] = prune_dominated(table, role, epsilon, restrict_to=grid)
        src = cache[cache_key]
        out[role] = PrunedOptionSet(role, list(src.kept), src.dropped_count)
    return out


@dataclass
class ReductionStats:
    per_role: dict[str, tuple[int, int]]
    full_space: int
    pruned_space: int


def reduction_report(spec: WorkflowSpec, table: ProfileTable,
                     epsilon: float = 0.0) -> ReductionStats:
    """Per-role option counts before/after pruning plus implied space sizes."""
    space = enumerate_structures(spec)
    roles = sorted({r for v in space.variants for r in v.active_roles})
    check_coverage(spec, table, roles)
    pruned = pruned_option_sets(spec, table, roles, epsilon)
    per_role = {
        r: (len(declared_configs(spec, table, r)), len(pruned[r].kept)) for r in roles
    }
    full = count_configurations(spec, {r: n for r, (n, _) in per_role.items()})
    small = count_configurations(spec, {r: n for r, (_, n) in per_role.items()})
    return ReductionStats(per_role, full, small)


# ---------------------------------------------------------------------------
# Exploration
# ---------------------------------------------------------------------------


def _mesh_chunks(counts: Sequence[int], limit: int):
    """Split a C-order cross product into fixed-prefix chunks.

    Yields (offset, fixed_indices, mesh_counts) where offset is the flat
    index of the chunk's first candidate.
    """
    split = 0
    while split < len(counts) and math.prod(counts[split:]) > limit:
        split += 1
    suffix = counts[split:]
    suffix_total = math.prod(suffix) if suffix else 1
    for i, fixed in enumerate(product(*(range(n) for n in counts[:split]))):
        yield i * suffix_total, fixed, suffix


def _variant_frontier(variant: StructuralVariant,
                      pruned: Mapping[str, PrunedOptionSet],
                      exec_model: ExecutionModel,
                      chunk_limit: int = _CHUNK_LIMIT):
    """Non-dominated candidates of one structural variant.

    Returns (acc, lat, flat_index) arrays; exact duplicates of surviving
    points are retained so the final merge can apply the smallest-id rule.
    """
    roles = variant.active_roles
    accs = [np.array([p.accuracy for _, p in pruned[r].kept]) for r in roles]
    lats = [np.array([p.latency_s for _, p in pruned[r].kept]) for r in roles]
    counts = [len(pruned[r].kept) for r in roles]

    out_acc: list[np.ndarray] = []
    out_lat: list[np.ndarray] = []
    out_idx: list[np.ndarray] = []
    for offset, fixed, mesh in _mesh_chunks(counts, chunk_limit):
        acc_of: dict[str, object] = {}
        lat_of: dict[str, object] = {}
        for pos, role in enumerate(roles):
            if pos < len(fixed):
                acc_of[role] = accs[pos][fixed[pos]]
                lat_of[role] = lats[pos][fixed[pos]]
            else:
                axis = pos - len(fixed)
                shape = [1] * len(mesh)
                if mesh:
                    shape[axis] = counts[pos]
                acc_of[role] = accs[pos].reshape(shape)
                lat_of[role] = lats[pos].reshape(shape)
        acc, lat = compose(variant.graph, acc_of, lat_of, exec_model)
        size = math.prod(mesh) if mesh else 1
        acc = np.broadcast_to(np.asarray(acc, dtype=np.float64), mesh).ravel()
        lat = np.broadcast_to(np.asarray(lat, dtype=np.float64), mesh).ravel()
        idx = np.arange(offset, offset + size, dtype=np.int64)
        a, l, i = _filter_nondominated_keep_ties(acc, lat, idx)
        out_acc.append(a)
        out_lat.append(l)
        out_idx.append(i)
    acc = np.concatenate(out_acc) if out_acc else np.empty(0)
    lat = np.concatenate(out_lat) if out_lat else np.empty(0)
    idx = np.concatenate(out_idx) if out_idx else np.empty(0, dtype=np.int64)
    return _filter_nondominated_keep_ties(acc, lat, idx)


def _filter_nondominated_keep_ties(acc: np.ndarray, lat: np.ndarray, idx: np.ndarray):
    """Vectorized dominance filter that keeps all exact (acc, lat) ties."""
    if acc.size == 0:
        return acc, lat, idx
    order = np.lexsort((-acc, lat))
    a, l, i = acc[order], lat[order], idx[order]
    first = np.empty(a.size, dtype=bool)
    first[0] = True
    first[1:] = (l[1:] != l[:-1]) | (a[1:] != a[:-1])
    group = np.cumsum(first) - 1
    ga = a[first]
    keep_group = np.empty(ga.size, dtype=bool)
    keep_group[0] = True
    keep_group[1:] = ga[1:] > np.maximum.accumulate(ga)[:-1]
    keep = keep_group[group]
    return a[keep], l[keep], i[keep]


def _decode(variant: StructuralVariant, pruned: Mapping[str, PrunedOptionSet],
            flat: int) -> WorkflowConfiguration:
    counts = [len(pruned[r].kept) for r in variant.active_roles]
    pos = np.unravel_index(int(flat), counts) if counts else ()
    assignment = {
        role: pruned[role].kept[k][0] for role, k in zip(variant.active_roles, pos)
    }
    return WorkflowConfiguration.make(variant.choices, assignment)


def _explore_variant(args):
    variant, pruned, exec_model = args
    acc, lat, idx = _variant_frontier(variant, pruned, exec_model)
    return acc, lat, idx


def explore(spec: WorkflowSpec, table: ProfileTable,
            exec_model: ExecutionModel = ExecutionModel.SEQUENTIAL_EDGE,
            epsilon: float = 0.0, workers: int = 1) -> CompiledSet:
    """Compile the workflow: enumerate, estimate, and keep the frontier.

    A pure function of (spec, table, exec_model, epsilon): the output is
    byte-identical across runs and worker counts.
    """
    space = enumerate_structures(spec)
    if space.unsatisfiable:
        raise ValidationError("empty structural space: constraints are unsatisfiable")
    for v in space.variants:
        if v.empty:
            raise ValidationError(
                f"structural variant {v.key} prunes the whole graph; "
                "add a constraint excluding it"
            )
    roles = sorted({r for v in space.variants for r in v.active_roles})
    check_coverage(spec, table, roles)
    pruned = pruned_option_sets(spec, table, roles, epsilon)

    tasks = [
        (v, {r: pruned[r] for r in v.active_roles}, exec_model) for v in space.variants
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_explore_variant, tasks))
    else:
        results = [_explore_variant(t) for t in tasks]

    candidates: list[tuple[float, float, WorkflowConfiguration]] = []
    for variant, (acc, lat, idx) in zip(space.variants, results):
        vp = {r: pruned[r] for r in variant.active_roles}
        for a, l, f in zip(acc, lat, idx):
            candidates.append((float(a), float(l), _decode(variant, vp, f)))

    points = [(a, l, cfg.id) for a, l, cfg in candidates]
    frontier = nondominated_sort_2d(points, epsilon)
    entries = [
        CompiledEntry(candidates[i][2], Estimate(candidates[i][0], candidates[i][1]))
        for i in frontier
    ]

    full = count_configurations(
        spec, {r: len(declared_configs(spec, table, r)) for r in roles}
    )
    small = count_configurations(spec, {r: len(pruned[r].kept) for r in roles})
    meta = CompiledMeta(
        spec_name=spec.name,
        profile_source=table.meta.source,
        execution_model=exec_model.value,
        proxy_version=PROXY_VERSION,
        epsilon=float(epsilon),
        full_space_size=full,
        pruned_space_size=small,
        structure_count=len(space.variants),
    )
    out = CompiledSet(entries, meta)
    try:
        out.validate()
    except ArtifactError as e:
        raise InternalError(f"explore produced an invalid set: {e}") from e
    return out


# ---------------------------------------------------------------------------
# Artifact serialization
# ---------------------------------------------------------------------------


def compiled_set_to_json(cs: CompiledSet) -> str:
    doc = {
        "format_version": ARTIFACT_FORMAT_VERSION,
        "tool_version": __version__,
        "metadata": {
            "spec_name": cs.meta.spec_name,
            "profile_source": cs.meta.profile_source,
            "execution_model": cs.meta.execution_model,
            "proxy_version": cs.meta.proxy_version,
            "epsilon": cs.meta.epsilon,
            "full_space_size": cs.meta.full_space_size,
            "pruned_space_size": cs.meta.pruned_space_size,
            "structure_count": cs.meta.structure_count,
            "entry_count": len(cs.entries),
        },
        "entries": [
            {
                "id": e.config.id,
                "structural": {k: v for k, v in e.config.structural},
                "assignment": {
                    r: {"model": c.model, "budget": c.budget}
                    for r, c in e.config.assignment
                },
                "est_accuracy": e.estimate.accuracy,
                "est_latency_s": e.estimate.latency_s,
            }
            for e in cs.entries
        ],
    }
    return json.dumps(doc, indent=2)


def save_compiled_set(cs: CompiledSet, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(compiled_set_to_json(cs))
        f.write("\n")


def parse_compiled_set(text: str) -> CompiledSet:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ArtifactError(f"syntax error at line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(doc, dict):
        raise ArtifactError("artifact must be a JSON object")
    if doc.get("format_version") != ARTIFACT_FORMAT_VERSION:
        raise ArtifactError(
            f"unsupported artifact format_version {doc.get('format_version')!r}"
        )
    md = doc.get("metadata", {})
    meta = CompiledMeta(
        spec_name=md.get("spec_name", ""),
        profile_source=md.get("profile_source", ""),
        execution_model=md.get("execution_model", ""),
        proxy_version=md.get("proxy_version", ""),
        epsilon=float(md.get("epsilon", 0.0)),
        full_space_size=int(md.get("full_space_size", 0)),
        pruned_space_size=int(md.get("pruned_space_size", 0)),
        structure_count=int(md.get("structure_count", 0)),
    )
    entries = []
    for i, e in enumerate(doc.get("entries", [])):
        try:
            structural = {k: bool(v) for k, v in e["structural"].items()}
            assignment = {
                r: SubAgentConfig(c["model"], int(c["budget"]))
                for r, c in e["assignment"].items()
            }
            cfg = WorkflowConfiguration(
                tuple(sorted(structural.items())),
                tuple(sorted(assignment.items())),
                e["id"],
            )
            entries.append(CompiledEntry(cfg, Estimate(e["est_accuracy"], e["est_latency_s"])))
        except (KeyError, TypeError, ValueError) as err:
            raise ArtifactError(f"entries[{i}]: {err!r}") from None
    cs = CompiledSet(entries, meta)
    cs.validate()
    if md.get("entry_count") not in (None, len(entries)):
        raise ArtifactError(
            f"metadata entry_count {md['entry_count']} != {len(entries)} entries"
        )
    return cs


def load_compiled_set(path) -> CompiledSet:
    with open(path, "r", encoding="utf-8") as f:
        return parse_compiled_set(f.read())
