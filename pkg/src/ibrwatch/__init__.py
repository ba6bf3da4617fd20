"""Outage detection on per-bin unique source IP counts seen by a darknet."""

from .core import BinGrid, Series, SeriesId, SeriesSplit, load_series, save_series, split_series
from .detect import Alarm, AlarmKind, OutageEvent, detect_series, distance, eligibility
from .pipeline import PipelineConfig, run_pipeline
from .sanitize import SanitizedTraining, sanitize_training
from .sarima import ModelOrder, SarimaModel, fit_arma, select_order

__version__ = "0.1.0"
