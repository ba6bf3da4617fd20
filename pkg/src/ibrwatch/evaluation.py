"""Scoring against labelled outages, ROC sweeps, the 25%-of-median baseline
and alarm-set overlap counting.

All scoring is per bin: a bin is a true positive when it lies inside a
ground-truth window and carries an outage alarm.
"""

from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import BinGrid, Series, SeriesId
from .detect import Alarm, AlarmKind
from .pipeline import PipelineConfig, detect_fitted, fit_series

DEFAULT_Z_GRID = (1.5, 2.0, 2.5, 2.807, 3.0, 3.5, 4.0, 5.0)
IODA_FRACTION = 0.25
TRUTH_HEADER = ("series_scope", "series_code", "start_timestamp", "end_timestamp", "label")


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class GroundTruthEvent:
    series_id: SeriesId
    start: int
    end: int
    label: str = ""

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"truth event must have start < end, got [{self.start}, {self.end})")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def tpr(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else math.nan

    @property
    def fpr(self) -> float:
        return self.fp / (self.fp + self.tn) if self.fp + self.tn else math.nan

    def __add__(self, other: ConfusionCounts) -> ConfusionCounts:
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)


@dataclass(frozen=True)
class RocPoint:
    z_crit: float
    fpr: float
    tpr: float
    counts: ConfusionCounts = field(default_factory=ConfusionCounts, compare=False)


def truth_mask(truth: Iterable[GroundTruthEvent], grid: BinGrid, evaluated_bins: range) -> np.ndarray:
    """Per-bin truth indicator over ``evaluated_bins``; windows are rounded outward, [start, end)."""
    n = len(evaluated_bins)
    mask = np.zeros(n, dtype=bool)
    for ev in truth:
        lo = grid.index_floor(ev.start) - evaluated_bins.start
        hi = grid.index_ceil(ev.end) - evaluated_bins.start
        if lo < 0 or hi > n:
            warnings.warn(f"truth event {ev.label or ev.start} extends beyond the evaluated range; clipped",
                          stacklevel=2)
        mask[max(lo, 0):max(min(hi, n), 0)] = True
    return mask


def outage_mask(alarms: Iterable[Alarm], evaluated_bins: range) -> np.ndarray:
    n = len(evaluated_bins)
    mask = np.zeros(n, dtype=bool)
    for a in alarms:
        if a.kind is AlarmKind.OUTAGE and a.bin_index in evaluated_bins:
            mask[a.bin_index - evaluated_bins.start] = True
    return mask


def confusion(predicted: np.ndarray, actual: np.ndarray) -> ConfusionCounts:
    predicted = np.asarray(predicted, dtype=bool)
    actual = np.asarray(actual, dtype=bool)
    return ConfusionCounts(
        tp=int(np.sum(predicted & actual)),
        fp=int(np.sum(predicted & ~actual)),
        tn=int(np.sum(~predicted & ~actual)),
        fn=int(np.sum(~predicted & actual)),
    )


def score(alarms: Sequence[Alarm], truth: Sequence[GroundTruthEvent], grid: BinGrid,
          evaluated_bins: range) -> ConfusionCounts:
    """Per-bin confusion counts; bin indices are relative to ``grid``."""
    return confusion(outage_mask(alarms, evaluated_bins), truth_mask(truth, grid, evaluated_bins))


def roc_sweep(series: Series, truth: Sequence[GroundTruthEvent], z_grid: Sequence[float] = DEFAULT_Z_GRID,
              config: PipelineConfig = PipelineConfig()) -> list[RocPoint]:
    """Score the detector at each z in ``z_grid`` on the test slice of ``series``.

    The model order is selected once; only detection is repeated per z.
    """
    if not z_grid:
        raise ValueError("z_grid is empty")
    fitted = fit_series(series, config)
    test = fitted.split.test
    points = []
    for z in sorted(z_grid):
        try:
            result = detect_fitted(fitted, config, z_crit=z)
        except (ValueError, RuntimeError) as exc:
            warnings.warn(f"{series.id}: detection failed at z={z}: {exc}", stacklevel=2)
            continue
        counts = score(result.alarms, truth, test.grid, range(len(test)))
        points.append(RocPoint(z, counts.fpr, counts.tpr, counts))
    return points


def baseline_ioda(series: Series, start: int | None = None, fraction: float = IODA_FRACTION) -> list[Alarm]:
    """Alarm where a count drops below ``fraction`` of the median of the preceding 7 days.

    Bins from ``start`` (default: the first bin with a full week behind it)
    are evaluated. ``predicted`` holds the running median and ``lower`` the
    alarm threshold, so ``distance`` has the same meaning as the detector's.
    """
    w = series.grid.bins_per_week
    start = w if start is None else start
    if start < w or len(series) < w:
        raise ValueError(f"{series.id}: baseline needs 7 days of history before bin {start}")
    if start >= len(series):
        return []
    v = series.values
    windows = sliding_window_view(v[start - w:len(v) - 1], w)
    medians = np.empty(len(windows))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for c in range(0, len(windows), 512):
            medians[c:c + 512] = np.nanmedian(windows[c:c + 512], axis=1)
    alarms = []
    for k, (x, med) in enumerate(zip(v[start:].tolist(), medians.tolist())):
        if math.isnan(x) or math.isnan(med) or med <= 0:
            continue
        lower = fraction * med
        if x < lower:
            i = start + k
            alarms.append(Alarm(series.id, i, series.grid.timestamp(i), (med - x) / (med - lower),
                                med, x, lower, AlarmKind.OUTAGE))
    return alarms


def overlap_counts(alarm_sets: Mapping[str, Sequence[bool]]) -> dict[tuple[str, ...], int]:
    """Venn-cell counts: bins alarmed by exactly the detectors in each non-empty subset."""
    names = sorted(alarm_sets)
    if not names:
        return {}
    arrays = {k: np.asarray(alarm_sets[k], dtype=bool) for k in names}
    lengths = {len(a) for a in arrays.values()}
    if len(lengths) != 1:
        raise GridMismatchError(f"alarm sets differ in length: {sorted(lengths)}")
    stacked = np.vstack([arrays[k] for k in names])
    out = {}
    for r in range(1, len(names) + 1):
        for subset in itertools.combinations(range(len(names)), r):
            inside = np.all(stacked[list(subset)], axis=0)
            others = [i for i in range(len(names)) if i not in subset]
            if others:
                inside &= ~np.any(stacked[others], axis=0)
            out[tuple(names[i] for i in subset)] = int(inside.sum())
    return out


def near_miss_fraction(alarms_a: Iterable[int], alarms_b: Iterable[int], window: int = 3600,
                       bin_seconds: int | None = None) -> float:
    """Share of a-only alarm timestamps with a b alarm within +/- ``window`` seconds.

    If every a alarm coincides with a b alarm there are no a-only alarms and
    the result is 1.0; with no b alarms at all it is 0.0.
    """
    a = sorted(set(alarms_a))
    b = np.array(sorted(set(alarms_b)), dtype=np.int64)
    if bin_seconds is not None and any(t % bin_seconds for t in itertools.chain(a, b.tolist())):
        raise GridMismatchError(f"alarm timestamps not aligned to {bin_seconds}s bins")
    if b.size == 0:
        return 0.0
    b_set = set(b.tolist())
    only = [t for t in a if t not in b_set]
    if not only:
        return 1.0
    near = 0
    for t in only:
        i = np.searchsorted(b, t - window)
        if i < b.size and b[i] <= t + window:
            near += 1
    return near / len(only)


def read_truth(path: str | Path) -> list[GroundTruthEvent]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRUTH_HEADER:
            raise ValueError(f"expected truth header {','.join(TRUTH_HEADER)}")
        return [GroundTruthEvent(SeriesId(r["series_scope"], r["series_code"]),
                                 int(r["start_timestamp"]), int(r["end_timestamp"]), r["label"])
                for r in reader]


def write_truth(path: str | Path, truth: Sequence[GroundTruthEvent]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUTH_HEADER)
        for ev in truth:
            w.writerow((ev.series_id.scope.value, ev.series_id.code, ev.start, ev.end, ev.label))


def write_roc(path: str | Path, points: Sequence[RocPoint]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("z_crit", "fpr", "tpr"))
        for pt in points:
            w.writerow((repr(pt.z_crit), repr(pt.fpr), repr(pt.tpr)))


def write_overlap(path: str | Path, counts: Mapping[tuple[str, ...], int]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("subset", "count"))
        for subset in sorted(counts, key=lambda s: (len(s), s)):
            w.writerow(("&".join(subset), counts[subset]))
