"""Plot-ready report emission: tidy CSV plus rendered trade-off figures.

The CSV is long-format (one row per config per source) so any plotting
tool can consume it; the bundled renderer also writes PNG scatter/frontier
figures next to it for quick inspection.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .errors import ValidationError
from .explorer import CompiledSet, nondominated_sort_2d
from .simulator import MeasuredPoint

MEASUREMENT_COLUMNS = ("config_id", "accuracy", "latency_s", "n_samples",
                       "accuracy_se", "latency_se")


def measurements_to_csv(points: Sequence[MeasuredPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MEASUREMENT_COLUMNS)
    for p in points:
        w.writerow([
            p.config_id,
            repr(p.accuracy),
            repr(p.latency_s),
            p.n_samples,
            "" if p.accuracy_se is None else repr(p.accuracy_se),
            "" if p.latency_se is None else repr(p.latency_se),
        ])
    return buf.getvalue()


def parse_measurements_csv(text: str) -> list[MeasuredPoint]:
    reader = csv.DictReader(io.StringIO(text))
    need = {"config_id", "accuracy", "latency_s"}
    if reader.fieldnames is None or not need.issubset(reader.fieldnames):
        raise ValidationError(f"measurement CSV must contain columns {sorted(need)}")
    out = []
    for i, row in enumerate(reader):
        try:
            out.append(MeasuredPoint(
                config_id=row["config_id"],
                accuracy=float(row["accuracy"]),
                latency_s=float(row["latency_s"]),
                n_samples=int(row.get("n_samples") or 1),
                accuracy_se=float(row["accuracy_se"]) if row.get("accuracy_se") else None,
                latency_se=float(row["latency_se"]) if row.get("latency_se") else None,
            ))
        except ValueError as e:
            raise ValidationError(f"measurement CSV row {i + 2}: {e}") from None
    return out


@dataclass
class ReportRow:
    source: str
    config_id: str
    est_accuracy: Optional[float]
    est_latency_s: Optional[float]
    meas_accuracy: Optional[float]
    meas_latency_s: Optional[float]
    est_frontier: Optional[bool]
    meas_frontier: Optional[bool]


def build_report(artifacts: Sequence[tuple[str, CompiledSet]],
                 measurements: Sequence[MeasuredPoint] = ()) -> list[ReportRow]:
    """Merge compiled sets and measurements into long-format rows.

    Measurements attach to entries by config id; a measurement whose id
    matches no artifact entry is an error.
    """
    meas_by_id = {m.config_id: m for m in measurements}
    known_ids = {e.config.id for _, cs in artifacts for e in cs.entries}
    unknown = sorted(set(meas_by_id) - known_ids)
    if unknown:
        raise ValidationError(
            f"measurements reference unknown config ids: {unknown[:3]}"
            + ("..." if len(unknown) > 3 else "")
        )

    rows: list[ReportRow] = []
    for label, cs in artifacts:
        est_front = set(nondominated_sort_2d(
            [(e.estimate.accuracy, e.estimate.latency_s, e.config.id) for e in cs.entries]
        ))
        matched = [(i, meas_by_id[e.config.id]) for i, e in enumerate(cs.entries)
                   if e.config.id in meas_by_id]
        meas_front_ids: set[str] = set()
        if matched:
            sel = nondominated_sort_2d(
                [(m.accuracy, m.latency_s, m.config_id) for _, m in matched]
            )
            meas_front_ids = {matched[i][1].config_id for i in sel}
        for i, e in enumerate(cs.entries):
            m = meas_by_id.get(e.config.id)
            rows.append(ReportRow(
                source=label,
                config_id=e.config.id,
                est_accuracy=e.estimate.accuracy,
                est_latency_s=e.estimate.latency_s,
                meas_accuracy=m.accuracy if m else None,
                meas_latency_s=m.latency_s if m else None,
                est_frontier=i in est_front,
                meas_frontier=(e.config.id in meas_front_ids) if m else None,
            ))
    return rows


def report_to_csv(rows: Sequence[ReportRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["source", "config_id", "est_accuracy", "est_latency_s",
                "meas_accuracy", "meas_latency_s", "est_frontier", "meas_frontier"])
    fmt = lambda v: "" if v is None else (repr(v) if isinstance(v, float) else int(v))
    for r in rows:
        w.writerow([r.source, r.config_id, fmt(r.est_accuracy), fmt(r.est_latency_s),
                    fmt(r.meas_accuracy), fmt(r.meas_latency_s),
                    fmt(r.est_frontier), fmt(r.meas_frontier)])
    return buf.getvalue()


def render_figures(rows: Sequence[ReportRow], outdir) -> list[Path]:
    """Render one trade-off figure per source plus a combined overlay."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    sources = sorted({r.source for r in rows})
    written: list[Path] = []

    def draw(ax, rs, label_prefix=""):
        est = sorted(
            ((r.est_latency_s, r.est_accuracy) for r in rs if r.est_accuracy is not None)
        )
        if est:
            ax.step([l for l, _ in est], [a for _, a in est], where="post",
                    marker=".", label=f"{label_prefix}estimated frontier")
        meas = [(r.meas_latency_s, r.meas_accuracy) for r in rs if r.meas_accuracy is not None]
        if meas:
            ax.scatter([l for l, _ in meas], [a for _, a in meas], s=14, alpha=0.7,
                       label=f"{label_prefix}measured")

    for src in sources:
        rs = [r for r in rows if r.source == src]
        fig, ax = plt.subplots(figsize=(6, 4.5))
        draw(ax, rs)
        ax.set_xlabel("latency (s)")
        ax.set_ylabel("accuracy")
        ax.set_title(src)
        ax.legend(loc="lower right", fontsize=8)
        fig.tight_layout()
        path = outdir / f"tradeoff_{src}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    if len(sources) > 1:
        fig, ax = plt.subplots(figsize=(6, 4.5))
        for src in sources:
            draw(ax, [r for r in rows if r.source == src], label_prefix=f"{src}: ")
        ax.set_xlabel("latency (s)")
        ax.set_ylabel("accuracy")
        ax.set_title("all sources")
        ax.legend(loc="lower right", fontsize=8)
        fig.tight_layout()
        path = outdir / "tradeoff_all.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
