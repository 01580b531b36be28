"""Deployment-time selection over a compiled trade-off set.

Three modes: pick the most accurate entry under a latency budget, pick the
entry maximizing the scalarized utility for one preference weight, or
route per query with a KNN lookup over recorded validation outcomes.
Utility is ``alpha * accuracy + (1 - alpha) * (1 - latency / l_max)``: the
latency-efficiency term normalizes by the maximum latency among whatever
is being compared, so the context must state it explicitly.

Selection always reads proxy estimates; measured values only ever enter
the reported score.  That separation is asserted by tests, not just
convention.
"""

from __future__ import annotations

import bisect
import json
import warnings
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import InfeasibleError, ValidationError
from .explorer import CompiledEntry, CompiledSet
from .rng import uniform_stream

DEFAULT_ALPHA_GRID = tuple(round(0.05 * i, 2) for i in range(1, 20))
DEFAULT_KNN_K = 20


@dataclass(frozen=True)
class Preference:
    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError(f"alpha {self.alpha!r} outside the open interval (0, 1)")


@dataclass(frozen=True)
class UtilityContext:
    l_max: float

    def __post_init__(self):
        if not self.l_max > 0.0:
            raise ValidationError(f"l_max {self.l_max!r} must be positive")


def latency_efficiency(latency_s: float, ctx: UtilityContext) -> float:
    """1 - latency / l_max, in [0, 1]."""
    if latency_s < 0.0:
        raise ValidationError(f"negative latency {latency_s!r}")
    if latency_s > ctx.l_max:
        raise ValidationError(f"latency {latency_s} exceeds l_max {ctx.l_max}")
    return 1.0 - latency_s / ctx.l_max


def expected_utility(accuracy: float, latency_s: float, pref: Preference,
                     ctx: UtilityContext) -> float:
    if not 0.0 <= accuracy <= 1.0:
        raise ValidationError(f"accuracy {accuracy!r} outside [0, 1]")
    return pref.alpha * accuracy + (1.0 - pref.alpha) * latency_efficiency(latency_s, ctx)


def select_latency_constrained(cs: CompiledSet, budget_s: float) -> CompiledEntry:
    """Most accurate entry within the budget: the last staircase entry whose
    latency fits (binary search; the staircase makes accuracy ties impossible)."""
    if not cs.entries:
        raise ValidationError("compiled set is empty")
    lats = [e.estimate.latency_s for e in cs.entries]
    pos = bisect.bisect_right(lats, budget_s)
    if pos == 0:
        raise InfeasibleError(
            f"infeasible budget: {budget_s}s is below the fastest entry ({lats[0]}s)"
        )
    return cs.entries[pos - 1]


def select_by_preference(cs: CompiledSet, pref: Preference,
                         ctx: UtilityContext) -> CompiledEntry:
    """Entry maximizing proxy utility; ties break to smaller latency, then id."""
    if not cs.entries:
        raise ValidationError("compiled set is empty")
    best: Optional[CompiledEntry] = None
    best_u = -np.inf
    # Entries sit on a latency-ascending staircase with distinct latencies,
    # so keeping the first max is exactly the smaller-latency tie break.
    for e in cs.entries:
        u = expected_utility(e.estimate.accuracy, e.estimate.latency_s, pref, ctx)
        if u > best_u:
            best, best_u = e, u
    return best


def sweep_fixed(cs: CompiledSet, ctx: UtilityContext,
                alphas: Sequence[float] = DEFAULT_ALPHA_GRID,
                measured: Optional[Mapping[str, tuple[float, float]]] = None):
    """Per-alpha selection rows: (alpha, selected id, proxy utility,
    measured utility or None)."""
    rows = []
    for a in alphas:
        pref = Preference(float(a))
        e = select_by_preference(cs, pref, ctx)
        proxy_u = expected_utility(e.estimate.accuracy, e.estimate.latency_s, pref, ctx)
        meas_u = None
        if measured is not None:
            if e.config.id not in measured:
                raise ValidationError(f"no measurement for selected id {e.config.id!r}")
            m_acc, m_lat = measured[e.config.id]
            meas_u = expected_utility(m_acc, m_lat, pref, ctx)
        rows.append((float(a), e.config.id, proxy_u, meas_u))
    return rows


@dataclass
class HeterogeneousResult:
    mean: float
    std: float
    repetitions: int
    per_repetition: list[float]
    degenerate: bool  # one repetition: std is not meaningful


def evaluate_heterogeneous(cs: CompiledSet, ctx: UtilityContext,
                           measured: Mapping[str, tuple[float, float]],
                           n_queries: int, repetitions: int = 10,
                           seed: int = 0) -> HeterogeneousResult:
    """Mixed-preference workload score.

    Each query draws its own alpha ~ Uniform(0,1); the entry is selected on
    proxy estimates and scored on measured values, per query, then
    averaged.  Seeded and reproducible bit-for-bit.
    """
    if repetitions < 1:
        raise ValidationError("repetitions must be >= 1")
    if n_queries < 1:
        raise ValidationError("n_queries must be >= 1")
    if not cs.entries:
        raise ValidationError("compiled set is empty")
    est_acc = np.array([e.estimate.accuracy for e in cs.entries])
    est_les = np.array([latency_efficiency(e.estimate.latency_s, ctx) for e in cs.entries])
    meas = []
    for e in cs.entries:
        if e.config.id not in measured:
            raise ValidationError(f"no measurement for compiled id {e.config.id!r}")
        m_acc, m_lat = measured[e.config.id]
        meas.append((m_acc, latency_efficiency(m_lat, ctx)))
    meas_acc = np.array([m[0] for m in meas])
    meas_les = np.array([m[1] for m in meas])

    per_rep = []
    for rep in range(repetitions):
        alphas = uniform_stream(seed, f"hetero/rep{rep}", n_queries)
        # utility matrix over (query, entry); entries are latency-ascending
        # so argmax's first-max rule is the smaller-latency tie break
        u = alphas[:, None] * est_acc[None, :] + (1.0 - alphas[:, None]) * est_les[None, :]
        pick = np.argmax(u, axis=1)
        scored = alphas * meas_acc[pick] + (1.0 - alphas) * meas_les[pick]
        per_rep.append(float(np.mean(scored)))
    arr = np.array(per_rep)
    return HeterogeneousResult(
        mean=float(arr.mean()),
        std=float(arr.std(ddof=0)),
        repetitions=repetitions,
        per_repetition=per_rep,
        degenerate=repetitions == 1,
    )


# ---------------------------------------------------------------------------
# KNN routing
# ---------------------------------------------------------------------------


@dataclass
class RoutingRecord:
    features: np.ndarray
    outcomes: dict[str, tuple[bool, float]]  # config id -> (success, latency_s)


def parse_routing_records(text: str) -> list[RoutingRecord]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(f"syntax error at line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(doc, dict) or "records" not in doc:
        raise ValidationError("routing records document must be an object with 'records'")
    dim = doc.get("dim")
    records = []
    for i, r in enumerate(doc["records"]):
        feats = np.asarray(r.get("features", []), dtype=np.float64)
        if dim is not None and feats.size != dim:
            raise ValidationError(f"records[{i}]: feature dimension {feats.size} != dim {dim}")
        outcomes = {
            cid: (bool(o["success"]), float(o["latency_s"]))
            for cid, o in r.get("outcomes", {}).items()
        }
        records.append(RoutingRecord(feats, outcomes))
    if records and len({r.features.size for r in records}) != 1:
        raise ValidationError("routing records have inconsistent feature dimensions")
    return records


def load_routing_records(path) -> list[RoutingRecord]:
    with open(path, "r", encoding="utf-8") as f:
        return parse_routing_records(f.read())


def knn_route(query_features: Sequence[float], records: Sequence[RoutingRecord],
              cs: CompiledSet, k: int = DEFAULT_KNN_K,
              pref: Preference = Preference(0.5),
              ctx: Optional[UtilityContext] = None) -> CompiledEntry:
    """Pick the compiled entry with the best neighbor-mean utility.

    The k nearest records by Euclidean distance (ties by record index) vote
    with their recorded per-config outcomes: each config's utility is the
    mean over neighbors of U(success, latency).  Ties break to smaller
    latency, then smaller id.
    """
    if ctx is None:
        raise ValidationError("knn_route requires a UtilityContext")
    if k < 1:
        raise ValidationError("k must be >= 1")
    if not records:
        raise ValidationError("no routing records")
    q = np.asarray(query_features, dtype=np.float64)
    if q.size != records[0].features.size:
        raise ValidationError(
            f"query dimension {q.size} != record dimension {records[0].features.size}"
        )
    if k > len(records):
        warnings.warn(f"k={k} exceeds {len(records)} records; clamping", stacklevel=2)
        k = len(records)
    dists = np.array([float(np.linalg.norm(q - r.features)) for r in records])
    neighbors = np.argsort(dists, kind="stable")[:k]

    best: Optional[CompiledEntry] = None
    best_u = -np.inf
    for e in cs.entries:  # latency-ascending: first max = smaller-latency tie break
        total = 0.0
        for ni in neighbors:
            rec = records[ni]
            if e.config.id not in rec.outcomes:
                raise ValidationError(
                    f"record {int(ni)} has no outcome for config {e.config.id!r}"
                )
            success, lat = rec.outcomes[e.config.id]
            total += expected_utility(1.0 if success else 0.0, lat, pref, ctx)
        u = total / k
        if u > best_u:
            best, best_u = e, u
    if best is None:
        raise ValidationError("compiled set is empty")
    return best
