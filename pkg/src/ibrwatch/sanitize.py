"""Fold ten weeks of raw training counts into two clean weeks.

The training slice is cut into five aligned two-week intervals and each
output bin is the median of the values present at that position across the
intervals. A median over five values ignores up to two corrupted ones, which
is what removes outages, spikes and gaps from the training data.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import BinGrid, Series

N_INTERVALS = 5
INTERVAL_WEEKS = 2


class SanitizationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SanitizedTraining:
    grid: BinGrid
    values: np.ndarray = field(repr=False)
    source_coverage: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.values)

    @property
    def mean_level(self) -> float:
        return float(np.mean(self.values))


def _fill_week(week: np.ndarray, start: int) -> None:
    """Linearly interpolate NaN holes in place from neighbours in the same week."""
    holes = np.isnan(week)
    if not holes.any():
        return
    known = np.flatnonzero(~holes)
    if known.size == 0:
        raise SanitizationError(f"no data at all in output week starting at bin {start}")
    idx = np.arange(len(week))
    # np.interp holds the edge value constant beyond the outermost known bins
    week[holes] = np.interp(idx[holes], known, week[known])


def sanitize_training(training: Series) -> SanitizedTraining:
    w = training.grid.bins_per_week
    span = INTERVAL_WEEKS * w
    if len(training) != N_INTERVALS * span:
        raise SanitizationError(
            f"training must cover {N_INTERVALS * span} bins "
            f"({N_INTERVALS * INTERVAL_WEEKS} weeks), got {len(training)}"
        )
    stacked = training.values.reshape(N_INTERVALS, span)
    coverage = np.sum(~np.isnan(stacked), axis=0)
    values = np.full(span, np.nan)
    covered = coverage > 0
    # nanmedian averages the two central values for even counts
    values[covered] = np.nanmedian(stacked[:, covered], axis=0)
    for k in range(INTERVAL_WEEKS):
        _fill_week(values[k * w:(k + 1) * w], k * w)
    values.flags.writeable = False
    coverage.flags.writeable = False
    return SanitizedTraining(training.grid, values, coverage)


def dump_sanitized(path: str | Path, sanitized: SanitizedTraining) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(("bin_index", "sanitized_value", "source_coverage"))
        for i, (v, c) in enumerate(zip(sanitized.values.tolist(), sanitized.source_coverage.tolist())):
            out.writerow((i, repr(v), c))
