"""Command-line entry point: ``ibrwatch {detect,evaluate,synth,sanitize,fit}``.

Exit codes
----------
0  success
1  unexpected internal error
2  invalid configuration or command line
3  file could not be read or written
4  malformed input data
5  pipeline failure on at least one series (others are still written)
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from . import detect as det
from . import evaluation as ev
from . import synth
from .core import InsufficientLengthError, ParseError, Series, load_series, save_series, split_series, \
    weekly_median_intensity
from .pipeline import PipelineConfig, detect_fitted, fit_series
from .sanitize import SanitizationError, dump_sanitized, sanitize_training
from .sarima import SelectionError

log = logging.getLogger("ibrwatch")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DATA = 4
EXIT_PIPELINE = 5

PIPELINE_ERRORS = (InsufficientLengthError, SanitizationError, SelectionError, ValueError, RuntimeError)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    bin_seconds: int = 300
    training_weeks: int = 10
    calibration_weeks: int = 1
    z_crit: float = 3.0
    ip_threshold: float = 20.0
    p_max: int = 6
    q_max: int = 3
    batch_size: int = 12
    merge_gap: int = 2
    workers: int = 0
    alarm_format: str = "csv"
    input: str | None = None
    truth: str | None = None
    output_dir: str = "."

    def validate(self) -> RunConfig:
        positive = ("bin_seconds", "training_weeks", "calibration_weeks", "z_crit", "batch_size")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("ip_threshold", "p_max", "q_max", "merge_gap", "workers"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.p_max == 0 and self.q_max == 0:
            raise ConfigError("p_max and q_max cannot both be 0")
        if self.training_weeks != 10:
            raise ConfigError("training must span 10 weeks (five two-week intervals)")
        if 604800 % self.bin_seconds:
            raise ConfigError("bin_seconds must divide one week")
        if self.batch_size > 604800 // self.bin_seconds:
            raise ConfigError("batch_size cannot exceed one week of bins")
        if self.alarm_format not in ("csv", "jsonl"):
            raise ConfigError("alarm_format must be csv or jsonl")
        return self

    @property
    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(self.training_weeks, self.calibration_weeks, self.z_crit, self.p_max,
                              self.q_max, self.batch_size, self.merge_gap)

    @property
    def n_workers(self) -> int:
        return self.workers or os.cpu_count() or 1


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, text: str):
    kind = _FIELD_TYPES[name]
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r}") from None
    return text


def read_config_file(path: str | Path) -> dict:
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (part.strip() for part in line.partition("="))
        if not sep or key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown or malformed setting {raw.strip()!r}")
        out[key] = _coerce(key, value)
    return out


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, overridden by the config file, overridden by flags."""
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for name in _FIELD_TYPES:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    return RunConfig(**values).validate()


def echo_config(cfg: RunConfig, out_dir: Path, command: str, **extra) -> None:
    record = {"command": command, **asdict(cfg), **extra}
    (out_dir / "config.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def _load(cfg: RunConfig) -> list[Series]:
    if not cfg.input:
        raise ConfigError("--input is required")
    series = load_series(cfg.input, bin_seconds=cfg.bin_seconds)
    if not series:
        raise ConfigError(f"{cfg.input}: no series found")
    return series


def _map(fn, items, cfg: RunConfig):
    items = list(items)
    if cfg.n_workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=cfg.n_workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class SeriesOutcome:
    series: Series
    status: str
    intensity: float | None = None
    order: tuple[int, int] | None = None
    rmse: float | None = None
    sigma_hat: float | None = None
    alarms: list | None = None
    events: list | None = None
    message: str = ""


def _detect_one(job) -> SeriesOutcome:
    s, cfg = job
    w = s.grid.bins_per_week
    try:
        intensity = weekly_median_intensity(s.slice(0, min(len(s), cfg.training_weeks * w)))
    except ValueError as exc:
        return SeriesOutcome(s, "error", message=str(exc))
    if intensity < cfg.ip_threshold:
        return SeriesOutcome(s, "ineligible", intensity)
    try:
        fitted = fit_series(s, cfg.pipeline)
        result = detect_fitted(fitted, cfg.pipeline)
    except PIPELINE_ERRORS as exc:
        return SeriesOutcome(s, "error", intensity, message=str(exc))
    sel = fitted.selection
    best = next(c for c in sel.candidates if c.order == sel.order)
    return SeriesOutcome(s, "ok", intensity, (sel.order.p, sel.order.q), best.rmse, sel.model.sigma_hat,
                         result.alarms, result.events)


def _fmt(v):
    return "" if v is None else repr(v)


def cmd_detect(cfg: RunConfig) -> int:
    series = _load(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    echo_config(cfg, out, "detect")
    outcomes = _map(_detect_one, [(s, cfg) for s in series], cfg)
    alarms = [a for o in outcomes if o.alarms for a in o.alarms]
    events = [e for o in outcomes if o.events for e in o.events]
    suffix = "jsonl" if cfg.alarm_format == "jsonl" else "csv"
    det.write_alarms(out / f"alarms.{suffix}", alarms, cfg.alarm_format)
    det.write_events(out / "events.csv", events)
    with open(out / "summary.csv", "w") as fh:
        fh.write("series_scope,series_code,status,median_intensity,p,q,calibration_rmse,sigma_hat,"
                 "outage_bins,events,message\n")
        for o in outcomes:
            p, q = o.order if o.order else (None, None)
            n_out = sum(a.kind is det.AlarmKind.OUTAGE for a in o.alarms) if o.alarms is not None else None
            fields_ = (o.series.id.scope.value, o.series.id.code, o.status, _fmt(o.intensity), _fmt(p), _fmt(q),
                       _fmt(o.rmse), _fmt(o.sigma_hat), _fmt(n_out),
                       _fmt(len(o.events) if o.events is not None else None), o.message.replace(",", ";"))
            fh.write(",".join(str(f) for f in fields_) + "\n")
    for o in outcomes:
        if o.status == "ineligible":
            log.info("%s skipped: median intensity %.1f below threshold %g", o.series.id, o.intensity,
                     cfg.ip_threshold)
        elif o.status == "error":
            log.error("%s failed: %s", o.series.id, o.message)
    return EXIT_PIPELINE if any(o.status == "error" for o in outcomes) else EXIT_OK


def _alarm_keys(alarms) -> set[tuple]:
    return {(a.series_id, a.timestamp) for a in alarms if a.kind is det.AlarmKind.OUTAGE}


def _sweep_one(job):
    s, truth, z_grid, cfg = job
    return ev.roc_sweep(s, truth, z_grid, cfg.pipeline)


def cmd_evaluate(cfg: RunConfig, alarm_paths: list[str], sweep: bool, z_grid: list[float]) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    echo_config(cfg, out, "evaluate")
    stems = [Path(p).stem for p in alarm_paths]
    names = stems if len(set(stems)) == len(stems) else list(alarm_paths)
    alarm_sets = {n: det.read_alarms(p, cfg.bin_seconds) for n, p in zip(names, alarm_paths)}

    if len(alarm_sets) > 1:
        keyed = {name: _alarm_keys(a) for name, a in alarm_sets.items()}
        universe = sorted(set().union(*keyed.values()), key=lambda k: (k[0], k[1]))
        indicators = {name: [k in keys for k in universe] for name, keys in keyed.items()}
        ev.write_overlap(out / "overlap.csv", ev.overlap_counts(indicators))

    if cfg.truth is None and not sweep:
        return EXIT_OK
    if cfg.truth is None:
        raise ConfigError("--truth is required for scoring and sweeps")
    truth = ev.read_truth(cfg.truth)
    series = _load(cfg)
    by_id: dict = {}
    for t in truth:
        by_id.setdefault(t.series_id, []).append(t)

    if alarm_paths:
        with open(out / "confusion.csv", "w") as fh:
            fh.write("alarms,series_scope,series_code,tp,fp,tn,fn,tpr,fpr\n")
            for name, alarms in alarm_sets.items():
                total = ev.ConfusionCounts()
                for s in series:
                    test = split_series(s, cfg.training_weeks, cfg.calibration_weeks).test
                    own = [replace(a, bin_index=test.grid.index_floor(a.timestamp))
                           for a in alarms if a.series_id == s.id]
                    c = ev.score(own, by_id.get(s.id, []), test.grid, range(len(test)))
                    total = total + c
                    fh.write(f"{name},{s.id.scope.value},{s.id.code},{c.tp},{c.fp},{c.tn},{c.fn},"
                             f"{c.tpr!r},{c.fpr!r}\n")
                fh.write(f"{name},all,all,{total.tp},{total.fp},{total.tn},{total.fn},"
                         f"{total.tpr!r},{total.fpr!r}\n")

    if sweep:
        eligible = [s for s in series if det.eligibility(s, cfg.ip_threshold, cfg.training_weeks)]
        results = _map(_sweep_one, [(s, by_id.get(s.id, []), z_grid, cfg) for s in eligible], cfg)
        pooled: dict[float, ev.ConfusionCounts] = {}
        for points in results:
            for pt in points:
                pooled[pt.z_crit] = pooled.get(pt.z_crit, ev.ConfusionCounts()) + pt.counts
        ev.write_roc(out / "roc.csv", [ev.RocPoint(z, c.fpr, c.tpr, c) for z, c in sorted(pooled.items())])
    return EXIT_OK


def cmd_synth(cfg: RunConfig, spec_path: str | None, fixture: str | None, seed: int | None,
              require_seed: bool) -> int:
    out = Path(cfg.output_dir)
    if fixture:
        if fixture != "egypt":
            raise ConfigError(f"unknown fixture {fixture!r}")
        series, truth = synth.egypt_fixture() if seed is None else synth.egypt_fixture(seed)
    else:
        if not spec_path:
            raise ConfigError("synth needs --spec or --fixture")
        if require_seed and seed is None:
            raise ConfigError("--seed is required in CI mode")
        try:
            spec, injections = synth.parse_spec_file(spec_path)
        except FileNotFoundError as exc:
            raise OSError(f"spec file not found: {exc.filename}") from None
        if seed is not None:
            spec = synth.with_seed(spec, seed)
        series, truth = synth.generate(spec, injections)
    out.mkdir(parents=True, exist_ok=True)
    echo_config(cfg, out, "synth", spec=spec_path, fixture=fixture, seed=seed)
    save_series(out / "series.csv", [series])
    ev.write_truth(out / "truth.csv", truth)
    return EXIT_OK


def cmd_sanitize(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    echo_config(cfg, out, "sanitize")
    status = EXIT_OK
    for s in _load(cfg):
        try:
            split = split_series(s, cfg.training_weeks, cfg.calibration_weeks)
            dump_sanitized(out / f"sanitized_{s.id.scope.value}_{s.id.code}.csv", sanitize_training(split.training))
        except PIPELINE_ERRORS as exc:
            log.error("%s failed: %s", s.id, exc)
            status = EXIT_PIPELINE
    return status


def _fit_one(job):
    s, cfg = job
    try:
        return s, fit_series(s, cfg.pipeline), None
    except PIPELINE_ERRORS as exc:
        return s, None, str(exc)


def cmd_fit(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    echo_config(cfg, out, "fit")
    status = EXIT_OK
    models = out / "models"
    with open(out / "fit_report.csv", "w") as fh:
        fh.write("series_scope,series_code,p,q,calibration_rmse,status,selected\n")
        for s, fitted, err in _map(_fit_one, [(s, cfg) for s in _load(cfg)], cfg):
            if fitted is None:
                log.error("%s failed: %s", s.id, err)
                status = EXIT_PIPELINE
                continue
            sel = fitted.selection
            for c in sel.candidates:
                fh.write(f"{s.id.scope.value},{s.id.code},{c.order.p},{c.order.q},{_fmt(c.rmse)},"
                         f"{c.status},{int(c.order == sel.order)}\n")
            models.mkdir(exist_ok=True)
            (models / f"{s.id.scope.value}_{s.id.code}.model").write_text(sel.model.dumps())
    return status


def _add_run_flags(p: argparse.ArgumentParser, with_input: bool = True) -> None:
    p.add_argument("--config", help="key = value config file (flags take precedence)")
    p.add_argument("--output-dir", dest="output_dir")
    if with_input:
        p.add_argument("--input", help="series CSV")
    p.add_argument("--bin-seconds", dest="bin_seconds", type=int)
    p.add_argument("--training-weeks", dest="training_weeks", type=int)
    p.add_argument("--calibration-weeks", dest="calibration_weeks", type=int)
    p.add_argument("--z-crit", dest="z_crit", type=float)
    p.add_argument("--ip-threshold", dest="ip_threshold", type=float)
    p.add_argument("--p-max", dest="p_max", type=int)
    p.add_argument("--q-max", dest="q_max", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--merge-gap", dest="merge_gap", type=int)
    p.add_argument("--workers", type=int, help="worker processes (default: all processors)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ibrwatch", description="Outage detection on unique-IP count series")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="run the detector on every eligible series")
    _add_run_flags(p)
    p.add_argument("--alarm-format", dest="alarm_format", choices=("csv", "jsonl"))

    p = sub.add_parser("evaluate", help="score alarms against ground truth, ROC sweep, overlaps")
    _add_run_flags(p)
    p.add_argument("--alarms", action="append", default=[], help="alarm file (repeat for overlap counts)")
    p.add_argument("--truth", help="ground-truth CSV")
    p.add_argument("--sweep", action="store_true", help="re-run detection over --z-grid and write roc.csv")
    p.add_argument("--z-grid", dest="z_grid", type=float, nargs="+", default=list(ev.DEFAULT_Z_GRID))

    p = sub.add_parser("synth", help="generate a synthetic series and its truth file")
    _add_run_flags(p, with_input=False)
    p.add_argument("--spec", help="generator spec file")
    p.add_argument("--fixture", choices=("egypt",))
    p.add_argument("--seed", type=int)
    p.add_argument("--ci", action="store_true", help="require an explicit --seed")

    p = sub.add_parser("sanitize", help="dump sanitized training data per series")
    _add_run_flags(p)

    p = sub.add_parser("fit", help="per-(p,q) calibration RMSE table and selected models")
    _add_run_flags(p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "detect":
            return cmd_detect(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.alarms, args.sweep, args.z_grid)
        if args.command == "synth":
            ci = args.ci or os.environ.get("CI", "").lower() in ("1", "true")
            return cmd_synth(cfg, args.spec, args.fixture, args.seed, ci)
        if args.command == "sanitize":
            return cmd_sanitize(cfg)
        if args.command == "fit":
            return cmd_fit(cfg)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except ParseError as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        log.error("invalid input: %s", exc)
        return EXIT_DATA
    parser.error(f"unknown command {args.command}")
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
