"""split -> sanitize -> select order -> detect, for one series."""

from __future__ import annotations

from dataclasses import dataclass

from .core import Series, SeriesSplit, split_series
from .detect import Alarm, DetectConfig, OutageEvent, detect_series
from .sanitize import SanitizedTraining, sanitize_training
from .sarima import Selection, select_order


@dataclass(frozen=True)
class PipelineConfig:
    training_weeks: int = 10
    calibration_weeks: int = 1
    z_crit: float = 3.0
    p_max: int = 6
    q_max: int = 3
    batch_size: int = 12
    merge_gap: int = 2

    @property
    def detect(self) -> DetectConfig:
        return DetectConfig(self.batch_size, self.merge_gap)


@dataclass
class Fitted:
    split: SeriesSplit
    sanitized: SanitizedTraining
    selection: Selection


@dataclass
class PipelineResult:
    fitted: Fitted
    z_crit: float
    alarms: list[Alarm]
    events: list[OutageEvent]


def fit_series(series: Series, config: PipelineConfig = PipelineConfig()) -> Fitted:
    split = split_series(series, config.training_weeks, config.calibration_weeks)
    sanitized = sanitize_training(split.training)
    selection = select_order(sanitized, split.calibration, p_max=config.p_max, q_max=config.q_max,
                             z_crit=config.z_crit, batch_size=config.batch_size)
    return Fitted(split, sanitized, selection)


def detect_fitted(fitted: Fitted, config: PipelineConfig = PipelineConfig(),
                  z_crit: float | None = None) -> PipelineResult:
    z = config.z_crit if z_crit is None else z_crit
    model = fitted.selection.model.copy(z_crit=z)
    alarms, events = detect_series(model, fitted.split.test, config.detect)
    return PipelineResult(fitted, z, alarms, events)


def run_pipeline(series: Series, config: PipelineConfig = PipelineConfig()) -> PipelineResult:
    return detect_fitted(fit_series(series, config), config)
