"""Streaming outage detection with inpainting.

Forecasts are produced one batch (an hour at 5-minute bins) at a time. Each
observation is scored by its distance d = (pred - obs) / (pred - lower):
d > 1 is an outage, d < -1 a high extreme. Anything outside the interval, and
any missing observation, is replaced by the prediction before it enters the
model history so that anomalies never shape later forecasts.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .core import BinGrid, Series, SeriesId, weekly_median_intensity
from .sarima import Forecast, SarimaModel

DEFAULT_BATCH_SIZE = 12
DEFAULT_MERGE_GAP = 2
DEFAULT_IP_THRESHOLD = 20.0

ALARM_HEADER = ("series_scope", "series_code", "timestamp", "kind", "distance", "predicted",
                "observed", "lower")
EVENT_HEADER = ("series_scope", "series_code", "start", "end", "bins", "max_distance",
                "mean_distance")


class AlarmKind(str, enum.Enum):
    OUTAGE = "outage"
    HIGH_EXTREME = "high_extreme"
    DATA_GAP = "data_gap"


@dataclass(frozen=True)
class Alarm:
    series_id: SeriesId
    bin_index: int
    timestamp: int
    distance: float | None
    predicted: float
    observed: float | None
    lower: float
    kind: AlarmKind


@dataclass(frozen=True)
class OutageEvent:
    series_id: SeriesId
    start: int
    end: int
    bin_count: int
    max_distance: float
    mean_distance: float


@dataclass(frozen=True)
class DetectConfig:
    batch_size: int = DEFAULT_BATCH_SIZE
    merge_gap: int = DEFAULT_MERGE_GAP


def distance(predicted: float, observed: float, lower: float) -> float:
    if not all(math.isfinite(v) for v in (predicted, observed, lower)):
        raise ValueError("distance inputs must be finite")
    if not predicted > lower:
        raise ValueError(f"prediction {predicted} must exceed its lower bound {lower}")
    return (predicted - observed) / (predicted - lower)


@dataclass
class DetectorState:
    model: SarimaModel
    grid: BinGrid
    series_id: SeriesId
    batch_size: int = DEFAULT_BATCH_SIZE
    cursor: int = 0
    pending: list[Forecast] = field(default_factory=list)

    def step(self, observation: float | None) -> Alarm | None:
        """Consume the observation for the cursor bin and return its alarm, if any."""
        if not self.pending:
            self.pending = self.model.forecast(self.batch_size, self.cursor)
        f = self.pending.pop(0)
        if f.bin_index != self.cursor:
            raise RuntimeError(f"forecast for bin {f.bin_index} applied at cursor {self.cursor}")
        ts = self.grid.timestamp(self.cursor)
        self.cursor += 1

        if observation is None or math.isnan(observation):
            self.model.observe(f.predicted)
            return Alarm(self.series_id, f.bin_index, ts, None, f.predicted, None, f.lower,
                         AlarmKind.DATA_GAP)

        lower = f.lower
        if not f.predicted > lower:
            # prediction clamped to zero: score against the unclamped half-width
            lower = f.predicted - self.model.z_crit * self.model.sigma_hat
        d = distance(f.predicted, observation, lower)
        if -1.0 <= d <= 1.0:
            self.model.observe(observation)
            return None
        self.model.observe(f.predicted)
        kind = AlarmKind.OUTAGE if d > 1.0 else AlarmKind.HIGH_EXTREME
        return Alarm(self.series_id, f.bin_index, ts, d, f.predicted, float(observation), f.lower, kind)


def step(state: DetectorState, observation: float | None) -> tuple[DetectorState, Alarm | None]:
    alarm = state.step(observation)
    return state, alarm


def merge_events(alarms: Iterable[Alarm], grid: BinGrid, merge_gap: int = DEFAULT_MERGE_GAP) -> list[OutageEvent]:
    """Collapse outage alarms separated by at most ``merge_gap`` quiet bins into events.

    Event ``end`` is the exclusive end of the last alarmed bin.
    """
    outages = sorted((a for a in alarms if a.kind is AlarmKind.OUTAGE), key=lambda a: a.bin_index)
    groups: list[list[Alarm]] = []
    for a in outages:
        if groups and a.bin_index - groups[-1][-1].bin_index - 1 <= merge_gap:
            groups[-1].append(a)
        else:
            groups.append([a])
    events = []
    for g in groups:
        ds = [a.distance for a in g]
        events.append(OutageEvent(
            series_id=g[0].series_id,
            start=g[0].timestamp,
            end=g[-1].timestamp + grid.bin_seconds,
            bin_count=len(g),
            max_distance=max(ds),
            mean_distance=sum(ds) / len(ds),
        ))
    return events


def detect_series(model: SarimaModel, test: Series, config: DetectConfig = DetectConfig()
                  ) -> tuple[list[Alarm], list[OutageEvent]]:
    """Run the detector over every bin of ``test``.

    ``model`` must be positioned right before the first test bin (as returned
    by order selection on the preceding calibration slice); it is copied, not
    advanced.
    """
    if len(test) == 0:
        raise ValueError(f"{test.id}: empty test slice")
    state = DetectorState(model.copy(), test.grid, test.id, config.batch_size)
    alarms = []
    for v in test.values.tolist():
        a = state.step(v)
        if a is not None:
            alarms.append(a)
    return alarms, merge_events(alarms, test.grid, config.merge_gap)


def eligibility(series: Series, threshold: float = DEFAULT_IP_THRESHOLD, training_weeks: int = 10) -> bool:
    training = series.slice(0, min(len(series), training_weeks * series.grid.bins_per_week))
    return weekly_median_intensity(training) >= threshold


def _fmt(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def alarm_record(a: Alarm) -> dict:
    return {
        "series_scope": a.series_id.scope.value,
        "series_code": a.series_id.code,
        "timestamp": a.timestamp,
        "kind": a.kind.value,
        "distance": a.distance,
        "predicted": a.predicted,
        "observed": a.observed,
        "lower": a.lower,
    }


def write_alarms(path: str | Path, alarms: Sequence[Alarm], fmt: str = "csv") -> None:
    with open(path, "w", newline="") as fh:
        if fmt == "jsonl":
            for a in alarms:
                fh.write(json.dumps(alarm_record(a)) + "\n")
            return
        if fmt != "csv":
            raise ValueError(f"unknown alarm format {fmt!r}")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ALARM_HEADER)
        for a in alarms:
            w.writerow((a.series_id.scope.value, a.series_id.code, a.timestamp, a.kind.value,
                        _fmt(a.distance), _fmt(a.predicted), _fmt(a.observed), _fmt(a.lower)))


def read_alarms(path: str | Path, bin_seconds: int = 300) -> list[Alarm]:
    """Load alarms written by ``write_alarms`` (CSV or JSON lines).

    ``bin_index`` is not stored; it is recomputed from the timestamp on a grid
    anchored at the Unix epoch.
    """
    def opt(v):
        return None if v in ("", None) else float(v)

    with open(path, newline="") as fh:
        head = fh.read(1)
        fh.seek(0)
        if head == "{":
            records = [json.loads(line) for line in fh if line.strip()]
        else:
            records = list(csv.DictReader(fh))
    out = []
    for r in records:
        ts = int(r["timestamp"])
        out.append(Alarm(SeriesId(r["series_scope"], r["series_code"]), ts // bin_seconds, ts,
                         opt(r["distance"]), float(r["predicted"]), opt(r["observed"]),
                         float(r["lower"]), AlarmKind(r["kind"])))
    return out


def write_events(path: str | Path, events: Sequence[OutageEvent]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_HEADER)
        for e in events:
            w.writerow((e.series_id.scope.value, e.series_id.code, e.start, e.end, e.bin_count,
                        repr(e.max_distance), repr(e.mean_distance)))
