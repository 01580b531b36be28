"""Estimate-vs-measurement agreement metrics and 2-D hypervolume.

Spearman and pairwise agreement are rank metrics, invariant under any
strictly increasing transform of either series.  Calibrated MAE first maps
the estimates through the affine function pinned at the two estimate
extrema (anchored on the *estimated* argmin/argmax), then averages the
absolute residuals; it strips global offset and scale while leaving the
relative structure untouched.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError


@dataclass
class PairedSeries:
    estimated: Sequence[float]
    measured: Sequence[float]
    ids: Optional[Sequence[str]] = None

    def __post_init__(self):
        if len(self.estimated) != len(self.measured):
            raise ValidationError("estimated and measured series differ in length")
        if len(self.estimated) < 2:
            raise ValidationError("paired series needs at least 2 points")
        if self.ids is not None and len(self.ids) != len(self.estimated):
            raise ValidationError("ids must parallel the series")
        for v in list(self.estimated) + list(self.measured):
            if not np.isfinite(v):
                raise ValidationError(f"non-finite value {v!r} in paired series")


def _as_arrays(est, meas):
    a = np.asarray(est, dtype=np.float64)
    b = np.asarray(meas, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError("series must be 1-D and of equal length")
    if a.size < 2:
        raise ValidationError("need at least 2 points")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValidationError("non-finite value in series")
    return a, b


def _fractional_ranks(x: np.ndarray) -> np.ndarray:
    # Average rank over ties (1-based fractional ranks).
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(estimated, measured) -> float:
    """Rank correlation in [-1, 1]; ties receive average ranks."""
    a, b = _as_arrays(estimated, measured)
    ra, rb = _fractional_ranks(a), _fractional_ranks(b)
    da, db = ra - ra.mean(), rb - rb.mean()
    va, vb = np.dot(da, da), np.dot(db, db)
    if va == 0.0 or vb == 0.0:
        raise ValidationError("rank variance is zero; correlation undefined")
    return float(np.dot(da, db) / np.sqrt(va * vb))


def pairwise_agreement(estimated, measured) -> float:
    """Fraction of pairs whose orderings match; a tie only agrees with a tie."""
    a, b = _as_arrays(estimated, measured)
    sa = np.sign(a[:, None] - a[None, :])
    sb = np.sign(b[:, None] - b[None, :])
    iu = np.triu_indices(a.size, k=1)
    return float(np.mean(sa[iu] == sb[iu]))


def calibrated_mae(estimated, measured) -> float:
    """Mean absolute error after the two-point affine calibration.

    The anchors are the configurations with the smallest and largest
    *estimated* values; their residuals are zero by construction.  Raises
    when the estimate extrema coincide (the map would divide by zero).
    """
    a, b = _as_arrays(estimated, measured)
    i_min, i_max = int(np.argmin(a)), int(np.argmax(a))
    if a[i_max] == a[i_min]:
        raise ValidationError("degenerate calibration anchors: all estimates equal")
    scale = (b[i_max] - b[i_min]) / (a[i_max] - a[i_min])
    cal = scale * (a - a[i_min]) + b[i_min]
    return float(np.mean(np.abs(cal - b)))


def hypervolume_2d(points: Sequence[tuple[float, float]],
                   ref: tuple[float, float]) -> float:
    """Area dominated by the non-dominated subset, relative to a reference.

    ``points`` are (accuracy, latency) with higher accuracy and lower
    latency better; ``ref`` is the worst corner (accuracy floor, latency
    ceiling).  Dominated and duplicate points contribute nothing.
    """
    acc0, lat_max = float(ref[0]), float(ref[1])
    for a, l in points:
        if not (np.isfinite(a) and np.isfinite(l)):
            raise ValidationError("non-finite point in hypervolume input")
        if a < acc0 or l > lat_max:
            raise ValidationError(
                f"point ({a}, {l}) lies outside the reference box ({acc0}, {lat_max})"
            )
    if not points:
        return 0.0
    # Keep the staircase: latency ascending, accuracy strictly increasing.
    pts = sorted(points, key=lambda p: (p[1], -p[0]))
    hv = 0.0
    prev_acc = acc0
    for a, l in pts:
        if a > prev_acc:
            hv += (a - prev_acc) * (lat_max - l)
            prev_acc = a
    return hv
