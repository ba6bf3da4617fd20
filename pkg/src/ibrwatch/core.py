"""Series data model, bin-grid arithmetic and CSV ingestion/emission.

Counts are stored as float64 arrays with NaN marking a missing bin. A zero
is an observation (possibly an outage); NaN is a collection gap.
"""

from __future__ import annotations

import csv
import enum
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

WEEK_SECONDS = 604800
DAY_SECONDS = 86400
SERIES_HEADER = ("series_scope", "series_code", "timestamp", "unique_ips")


class ParseError(ValueError):
    """Malformed input file; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class DuplicateBinError(ParseError):
    pass


class InsufficientLengthError(ValueError):
    def __init__(self, required: int, actual: int):
        self.required = required
        self.actual = actual
        super().__init__(f"series too short: need {required} bins, got {actual}")


class UndefinedIntensityError(ValueError):
    pass


class Scope(str, enum.Enum):
    COUNTRY = "country"
    REGION = "region"
    ASN = "asn"


@dataclass(frozen=True, order=True)
class SeriesId:
    scope: Scope
    code: str

    def __post_init__(self):
        object.__setattr__(self, "scope", Scope(self.scope))
        if not self.code:
            raise ValueError("series code must be non-empty")
        if self.scope is Scope.ASN:
            if not self.code.isdigit() or int(self.code) <= 0:
                raise ValueError(f"AS number must be a positive integer, got {self.code!r}")

    def __str__(self):
        return f"{self.scope.value}:{self.code}"


@dataclass(frozen=True)
class BinGrid:
    epoch_start: int
    bin_seconds: int = 300

    def __post_init__(self):
        if self.bin_seconds <= 0 or WEEK_SECONDS % self.bin_seconds:
            raise ValueError(f"bin_seconds must divide one week, got {self.bin_seconds}")

    @property
    def bins_per_week(self) -> int:
        return WEEK_SECONDS // self.bin_seconds

    @property
    def bins_per_day(self) -> int:
        return DAY_SECONDS // self.bin_seconds

    def timestamp(self, index: int) -> int:
        return self.epoch_start + index * self.bin_seconds

    def index_floor(self, ts: int) -> int:
        return (ts - self.epoch_start) // self.bin_seconds

    def index_ceil(self, ts: int) -> int:
        return -((self.epoch_start - ts) // self.bin_seconds)

    def shifted(self, bins: int) -> BinGrid:
        return BinGrid(self.timestamp(bins), self.bin_seconds)


@dataclass(frozen=True, eq=False)
class Series:
    id: SeriesId
    grid: BinGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("series values must be one-dimensional")
        if np.any(v[~np.isnan(v)] < 0):
            raise ValueError("series values must be non-negative")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    @property
    def timestamps(self) -> np.ndarray:
        return self.grid.epoch_start + np.arange(len(self)) * self.grid.bin_seconds

    def slice(self, start: int, stop: int | None = None) -> Series:
        """Contiguous sub-series; the grid is re-anchored at ``start``."""
        stop = len(self) if stop is None else stop
        if not 0 <= start <= stop <= len(self):
            raise IndexError(f"slice [{start}, {stop}) outside series of length {len(self)}")
        return Series(self.id, self.grid.shifted(start), self.values[start:stop])

    def __eq__(self, other):
        if not isinstance(other, Series):
            return NotImplemented
        return (
            self.id == other.id
            and self.grid == other.grid
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    __hash__ = None


@dataclass(frozen=True)
class SeriesSplit:
    training: Series
    calibration: Series
    test: Series


def split_series(s: Series, training_weeks: int = 10, calibration_weeks: int = 1) -> SeriesSplit:
    w = s.grid.bins_per_week
    n_train = training_weeks * w
    n_cal = calibration_weeks * w
    if len(s) < n_train + n_cal:
        raise InsufficientLengthError(n_train + n_cal, len(s))
    if len(s) == n_train + n_cal:
        warnings.warn(f"{s.id}: empty test slice", stacklevel=2)
    return SeriesSplit(
        training=s.slice(0, n_train),
        calibration=s.slice(n_train, n_train + n_cal),
        test=s.slice(n_train + n_cal),
    )


def weekly_median_intensity(s: Series) -> float:
    """Median per-bin count over the present bins of ``s``."""
    if len(s) == 0:
        raise UndefinedIntensityError(f"{s.id}: empty slice")
    present = s.values[~s.missing]
    if present.size == 0:
        raise UndefinedIntensityError(f"{s.id}: every bin is missing")
    return float(np.median(present))


def _parse_count(text: str, line: int) -> float:
    text = text.strip()
    if text == "":
        return math.nan
    try:
        n = int(text)
    except ValueError:
        raise ParseError(f"unique_ips is not an integer: {text!r}", line) from None
    if n < 0:
        raise ParseError(f"unique_ips is negative: {n}", line)
    return float(n)


def load_series(path: str | Path, format: str = "csv", bin_seconds: int = 300) -> list[Series]:
    """Read per-bin counts into one Series per id, ordered by id.

    Rows of one id must have strictly increasing timestamps; bins absent from
    the file become missing values.
    """
    if format != "csv":
        raise ValueError(f"unsupported format {format!r}")
    rows: dict[SeriesId, list[tuple[int, float, int]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != SERIES_HEADER:
            raise ParseError(f"expected header {','.join(SERIES_HEADER)}", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", lineno)
            scope, code, ts_text, count_text = row
            try:
                sid = SeriesId(scope.strip(), code.strip())
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            try:
                ts = int(ts_text)
            except ValueError:
                raise ParseError(f"timestamp is not an integer: {ts_text!r}", lineno) from None
            rows.setdefault(sid, []).append((ts, _parse_count(count_text, lineno), lineno))

    out = []
    for sid in sorted(rows):
        entries = rows[sid]
        t0 = entries[0][0]
        prev = None
        for ts, _, lineno in entries:
            if prev is not None:
                if ts == prev:
                    raise DuplicateBinError(f"{sid}: duplicate bin at timestamp {ts}", lineno)
                if ts < prev:
                    raise ParseError(f"{sid}: timestamps not increasing ({ts} after {prev})", lineno)
            if (ts - t0) % bin_seconds:
                raise ParseError(f"{sid}: timestamp {ts} not aligned to {bin_seconds}s bins", lineno)
            prev = ts
        grid = BinGrid(t0, bin_seconds)
        values = np.full(grid.index_floor(entries[-1][0]) + 1, np.nan)
        for ts, v, _ in entries:
            values[grid.index_floor(ts)] = v
        out.append(Series(sid, grid, values))
    return out


def _format_count(v: float) -> str:
    if math.isnan(v):
        return ""
    if v == int(v):
        return str(int(v))
    return repr(float(v))


def save_series(path: str | Path, series: Sequence[Series]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_HEADER)
        for s in series:
            for ts, v in zip(s.timestamps.tolist(), s.values.tolist()):
                w.writerow((s.id.scope.value, s.id.code, ts, _format_count(v)))
