"""Sub-agent profile tables and per-role dominance pruning.

A profile records the measured accuracy and latency of one sub-agent role
under one (model, budget) config.  Tables are ingested from JSON (or a CSV
variant with identical columns), validated eagerly, and immutable
afterwards.

Pruning drops every config that another config beats on both axes; with
``epsilon = 0`` the kept set is exactly the role-level Pareto staircase.
``epsilon > 0`` is a robustness knob for noisy profiles and is lossy: a
config may be dropped by one that is up to epsilon worse on one axis but
more than epsilon better on the other.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .errors import ProfileError
from .ir import base_role, valid_token

FORMAT_VERSION = 1


@dataclass(frozen=True, order=True)
class SubAgentConfig:
    """One model-choice / reasoning-budget pair.

    Ordering is lexicographic over (model, budget); that order is the tie
    rule everywhere ties need breaking deterministically.
    """

    model: str
    budget: int


@dataclass(frozen=True)
class Profile:
    role: str
    config: SubAgentConfig
    accuracy: float
    latency_s: float
    sample_count: int


@dataclass
class TableMeta:
    source: str = ""
    created_at: str = ""
    format_version: int = FORMAT_VERSION


@dataclass
class ProfileTable:
    entries: dict[tuple[str, SubAgentConfig], Profile]
    meta: TableMeta = field(default_factory=TableMeta)

    def __len__(self) -> int:
        return len(self.entries)

    def roles(self) -> tuple[str, ...]:
        return tuple(sorted({r for r, _ in self.entries}))

    def configs_for(self, role: str) -> list[SubAgentConfig]:
        """Configs profiled for ``role``, falling back to its base role.

        Depth-suffixed roles produced by loop unrolling (``fix#2``) may be
        profiled per depth; when they are not, the base role's profiles
        apply at every depth.
        """
        exact = sorted(c for r, c in self.entries if r == role)
        if exact or _is_base(role):
            return exact
        return sorted(c for r, c in self.entries if r == base_role(role))

    def get(self, role: str, config: SubAgentConfig) -> Profile:
        p = self.entries.get((role, config))
        if p is None and not _is_base(role):
            p = self.entries.get((base_role(role), config))
        if p is None:
            raise ProfileError(f"no profile for {role}/{config.model}@{config.budget}")
        return p

    def has(self, role: str, config: SubAgentConfig) -> bool:
        if (role, config) in self.entries:
            return True
        return not _is_base(role) and (base_role(role), config) in self.entries


def _is_base(role: str) -> bool:
    return base_role(role) == role


def _validate_entry(role, model, budget, accuracy, latency_s, sample_count) -> Profile:
    key = f"{role}/{model}@{budget}"
    if not isinstance(role, str) or not role:
        raise ProfileError(f"invalid role in entry {key}")
    if not isinstance(model, str) or not valid_token(model):
        raise ProfileError(f"invalid model in entry {key}")
    if not isinstance(budget, int) or budget < 1:
        raise ProfileError(f"budget must be a positive integer in entry {key}")
    if not isinstance(accuracy, (int, float)) or not 0.0 <= accuracy <= 1.0:
        raise ProfileError(f"accuracy {accuracy!r} outside [0, 1] in entry {key}")
    if not isinstance(latency_s, (int, float)) or latency_s < 0.0:
        raise ProfileError(f"negative latency {latency_s!r} in entry {key}")
    if not isinstance(sample_count, int) or sample_count < 1:
        raise ProfileError(f"sample_count must be a positive integer in entry {key}")
    return Profile(role, SubAgentConfig(model, budget), float(accuracy), float(latency_s), sample_count)


def _build_table(rows: Iterable[Profile], meta: TableMeta) -> ProfileTable:
    entries: dict[tuple[str, SubAgentConfig], Profile] = {}
    for p in rows:
        key = (p.role, p.config)
        if key in entries:
            raise ProfileError(f"duplicate entry {p.role}/{p.config.model}@{p.config.budget}")
        entries[key] = p
    return ProfileTable(entries, meta)


def parse_profiles_json(text: str) -> ProfileTable:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProfileError(f"syntax error at line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(doc, dict) or "entries" not in doc:
        raise ProfileError("profile document must be an object with an 'entries' array")
    version = doc.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise ProfileError(f"unsupported profile format_version {version}")
    meta = TableMeta(doc.get("source", ""), doc.get("created_at", ""), version)
    rows = []
    for i, e in enumerate(doc["entries"]):
        try:
            rows.append(
                _validate_entry(
                    e["role"], e["model"], e["budget"],
                    e["accuracy"], e["latency_s"], e.get("sample_count", 1),
                )
            )
        except KeyError as err:
            raise ProfileError(f"entries[{i}]: missing field {err.args[0]!r}") from None
    return _build_table(rows, meta)


def parse_profiles_csv(text: str) -> ProfileTable:
    reader = csv.DictReader(io.StringIO(text))
    required = {"role", "model", "budget", "accuracy", "latency_s", "sample_count"}
    if reader.fieldnames is None or not required.issubset(reader.fieldnames):
        raise ProfileError(f"CSV header must contain columns {sorted(required)}")
    rows = []
    for i, row in enumerate(reader):
        try:
            rows.append(
                _validate_entry(
                    row["role"], row["model"], int(row["budget"]),
                    float(row["accuracy"]), float(row["latency_s"]), int(row["sample_count"]),
                )
            )
        except ValueError as err:
            raise ProfileError(f"CSV row {i + 2}: {err}") from None
    return _build_table(rows, TableMeta(source="csv"))


def load_profiles(text: str, fmt: str = "json") -> ProfileTable:
    """Parse a profile table from document text (``fmt``: json | csv)."""
    if fmt == "json":
        return parse_profiles_json(text)
    if fmt == "csv":
        return parse_profiles_csv(text)
    raise ProfileError(f"unknown profile format {fmt!r}")


def load_profiles_path(path) -> ProfileTable:
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    fmt = "csv" if str(path).endswith(".csv") else "json"
    return load_profiles(text, fmt)


def profiles_to_json(table: ProfileTable) -> str:
    entries = [
        {
            "role": p.role,
            "model": p.config.model,
            "budget": p.config.budget,
            "accuracy": p.accuracy,
            "latency_s": p.latency_s,
            "sample_count": p.sample_count,
        }
        for _, p in sorted(table.entries.items())
    ]
    doc = {
        "format_version": table.meta.format_version,
        "source": table.meta.source,
        "created_at": table.meta.created_at,
        "entries": entries,
    }
    return json.dumps(doc, indent=2)


def save_profiles(table: ProfileTable, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(profiles_to_json(table))
        f.write("\n")


# ---------------------------------------------------------------------------
# Dominance pruning
# ---------------------------------------------------------------------------


@dataclass
class PrunedOptionSet:
    """Per-role surviving options: latency ascending, accuracy strictly rising."""

    role: str
    kept: list[tuple[SubAgentConfig, Profile]]
    dropped_count: int

    def configs(self) -> list[SubAgentConfig]:
        return [c for c, _ in self.kept]


def _epsilon_dominated(p1, l1, p2, l2, epsilon: float) -> bool:
    # q2 removes q1: q2 no worse than q1 within epsilon on both axes and
    # strictly better beyond epsilon on at least one.
    return (
        p2 >= p1 - epsilon
        and l2 <= l1 + epsilon
        and (p2 > p1 + epsilon or l2 < l1 - epsilon)
    )


def prune_dominated(
    options: Mapping[SubAgentConfig, Profile] | ProfileTable,
    role: str,
    epsilon: float = 0.0,
    restrict_to: Optional[Iterable[SubAgentConfig]] = None,
) -> PrunedOptionSet:
    """Drop every dominated config of ``role``; exact ties keep the
    lexicographically smallest (model, budget).

    ``options`` is either a ProfileTable or a prebuilt config->Profile map;
    ``restrict_to`` limits the candidate set (e.g. to a declared config
    space).  The kept list is always a strict Pareto staircase: after the
    epsilon pass, any surviving exactly-dominated near-duplicates are swept
    out so the staircase invariant holds for every epsilon.
    """
    if epsilon < 0:
        raise ProfileError("epsilon must be nonnegative")
    if isinstance(options, ProfileTable):
        cand = {c: options.get(role, c) for c in options.configs_for(role)}
    else:
        cand = dict(options)
    if restrict_to is not None:
        allowed = set(restrict_to)
        cand = {c: p for c, p in cand.items() if c in allowed}
    if not cand:
        raise ProfileError(f"role {role!r} has no profiled options")

    items = sorted(cand.items())  # lexicographic by (model, budget)
    survivors = []
    for i, (c1, p1) in enumerate(items):
        removed = False
        for j, (c2, p2) in enumerate(items):
            if i == j:
                continue
            if _epsilon_dominated(p1.accuracy, p1.latency_s, p2.accuracy, p2.latency_s, epsilon):
                removed = True
                break
            if (
                p2.accuracy == p1.accuracy
                and p2.latency_s == p1.latency_s
                and c2 < c1
            ):
                removed = True
                break
        if not removed:
            survivors.append((c1, p1))

    # Final strict staircase sweep (no-op at epsilon = 0).
    survivors.sort(key=lambda cp: (cp[1].latency_s, -cp[1].accuracy, cp[0]))
    kept: list[tuple[SubAgentConfig, Profile]] = []
    best = -1.0
    for c, p in survivors:
        if p.accuracy > best:
            kept.append((c, p))
            best = p.accuracy
    return PrunedOptionSet(role, kept, len(cand) - len(kept))
