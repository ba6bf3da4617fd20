"""Synthetic unique-IP count series with known outage windows.

Randomness comes from numpy's PCG64 bit generator seeded with the generator spec's
``seed``, so a given spec always produces the same series. Series that must
be shared with other tools should be exchanged as CSV, not regenerated.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .core import DAY_SECONDS, WEEK_SECONDS, BinGrid, Series, SeriesId
from .evaluation import GroundTruthEvent

# Monday 2010-11-08 00:00 UTC
DEFAULT_EPOCH = 1289174400


class NoiseModel(str, enum.Enum):
    GAUSSIAN = "gaussian"
    NEGATIVE_BINOMIAL = "negative_binomial"


class Shape(str, enum.Enum):
    STEP = "step"
    RAMP = "ramp"


class InjectionKind(str, enum.Enum):
    OUTAGE = "outage"
    SURGE = "surge"


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters of one synthetic series.

    ``noise_scale`` is relative to ``base_level``: the gaussian noise standard
    deviation is ``noise_scale * base_level``; for the negative binomial the
    variance at mean m is ``m + noise_scale**2 * m**2`` (Poisson at 0).
    ``arma_color`` optionally colours the gaussian noise with an ARMA filter
    given as ``(ar_coeffs, ma_coeffs)``; the noise keeps its target variance.
    """

    base_level: float = 100.0
    daily_amp: float = 0.3
    weekly_amp: float = 0.1
    weekend_drop: float = 0.1
    daily_peak_hour: float = 14.0
    noise_model: NoiseModel = NoiseModel.GAUSSIAN
    noise_scale: float = 0.05
    arma_color: tuple[tuple[float, ...], tuple[float, ...]] | None = None
    seed: int = 0
    length_weeks: int = 12
    bin_seconds: int = 300
    epoch_start: int = DEFAULT_EPOCH
    scope: str = "country"
    code: str = "ZZ"

    def __post_init__(self):
        object.__setattr__(self, "noise_model", NoiseModel(self.noise_model))
        if self.base_level <= 0:
            raise ValueError("base_level must be positive")
        amps = (self.daily_amp, self.weekly_amp, self.weekend_drop)
        if any(a < 0 or a > 1 for a in amps) or sum(amps) > 1:
            raise ValueError("seasonal amplitudes must be in [0, 1] and sum to at most 1")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be non-negative")
        if self.length_weeks <= 0:
            raise ValueError("length_weeks must be positive")


@dataclass(frozen=True)
class InjectionSpec:
    """A multiplicative disturbance over ``duration`` bins from bin ``start``.

    Outages multiply the signal by ``1 - depth``; surges by ``1 + depth``. A
    ramp reaches full depth linearly over the window.
    """

    start: int
    duration: int
    depth: float
    shape: Shape = Shape.STEP
    kind: InjectionKind = InjectionKind.OUTAGE
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "shape", Shape(self.shape))
        object.__setattr__(self, "kind", InjectionKind(self.kind))
        if self.start < 0 or self.duration <= 0:
            raise ValueError("injection needs start >= 0 and duration > 0")
        if self.kind is InjectionKind.OUTAGE and not 0 <= self.depth <= 1:
            raise ValueError("outage depth must be in [0, 1]")
        if self.depth < 0:
            raise ValueError("depth must be non-negative")

    @property
    def stop(self) -> int:
        return self.start + self.duration


def seasonal_level(spec: GeneratorSpec, timestamps: np.ndarray) -> np.ndarray:
    ts = np.asarray(timestamps, dtype=np.int64)
    day_phase = (ts % DAY_SECONDS) / DAY_SECONDS - spec.daily_peak_hour / 24.0
    # Unix day 0 was a Thursday; Monday == 0
    weekday = (ts // DAY_SECONDS + 3) % 7
    week_phase = ((ts - 4 * DAY_SECONDS) % WEEK_SECONDS) / WEEK_SECONDS
    return spec.base_level * (
        1.0
        + spec.daily_amp * np.cos(2 * np.pi * day_phase)
        + spec.weekly_amp * np.cos(2 * np.pi * week_phase)
        - spec.weekend_drop * (weekday >= 5)
    )


def _unit_colored_noise(rng: np.random.Generator, n: int, color) -> np.ndarray:
    white = rng.standard_normal(n)
    if color is None:
        return white
    ar, ma = (np.asarray(c, dtype=float) for c in color)
    b, a = np.r_[1.0, ma], np.r_[1.0, -ar]
    impulse = np.zeros(4096)
    impulse[0] = 1.0
    gain = math.sqrt(float(np.sum(lfilter(b, a, impulse) ** 2)))
    return lfilter(b, a, white) / gain


def _check_injections(injections, n: int, test_start: int | None) -> None:
    ordered = sorted(injections, key=lambda j: j.start)
    for j in ordered:
        if j.stop > n:
            raise ValueError(f"injection [{j.start}, {j.stop}) runs past the series end ({n})")
        if test_start is not None and j.start < test_start:
            raise ValueError(f"injection at bin {j.start} precedes the test slice ({test_start})")
    for a, b in zip(ordered, ordered[1:]):
        if b.start < a.stop:
            raise ValueError(f"injections overlap at bins [{b.start}, {a.stop})")


def generate(spec: GeneratorSpec, injections=(), test_start: int | None = None
             ) -> tuple[Series, list[GroundTruthEvent]]:
    """Generate a series and the truth events of its outage injections.

    value_t = round(max(0, seasonal_t * outage_t * surge_t + noise_t)). If
    ``test_start`` is given, injections must not start before it.
    """
    grid = BinGrid(spec.epoch_start, spec.bin_seconds)
    n = spec.length_weeks * grid.bins_per_week
    injections = list(injections)
    _check_injections(injections, n, test_start)

    ts = grid.epoch_start + np.arange(n, dtype=np.int64) * grid.bin_seconds
    factor = np.ones(n)
    for j in injections:
        ramp = np.arange(1, j.duration + 1) / j.duration if j.shape is Shape.RAMP else np.ones(j.duration)
        sign = -1.0 if j.kind is InjectionKind.OUTAGE else 1.0
        factor[j.start:j.stop] *= 1.0 + sign * j.depth * ramp
    mean = seasonal_level(spec, ts) * factor

    rng = np.random.Generator(np.random.PCG64(spec.seed))
    if spec.noise_model is NoiseModel.GAUSSIAN:
        noise = spec.noise_scale * spec.base_level * _unit_colored_noise(rng, n, spec.arma_color)
        values = np.round(np.maximum(0.0, mean + noise))
    else:
        if spec.noise_scale > 0:
            r = 1.0 / spec.noise_scale ** 2
            lam = rng.gamma(r, mean / r)
        else:
            lam = mean
        values = rng.poisson(lam).astype(float)

    sid = SeriesId(spec.scope, spec.code)
    truth = [
        GroundTruthEvent(sid, grid.timestamp(j.start), grid.timestamp(j.stop), j.label or "injected outage")
        for j in sorted(injections, key=lambda j: j.start)
        if j.kind is InjectionKind.OUTAGE
    ]
    return Series(sid, grid, values), truth


def egypt_fixture(seed: int = 2011) -> tuple[Series, list[GroundTruthEvent]]:
    """Fourteen weeks shaped like a national shutdown followed by a scan surge.

    Ten weeks of training and one of calibration (from Monday 2010-11-08),
    then a 6-day 95% blackout from Thursday 2011-01-27 22:00 UTC, a 4-day +60%
    surge right after it, and normal traffic to the end.
    """
    spec = GeneratorSpec(base_level=400.0, daily_amp=0.35, weekly_amp=0.05, weekend_drop=0.08,
                         daily_peak_hour=12.0, noise_model=NoiseModel.GAUSSIAN, noise_scale=0.03,
                         seed=seed, length_weeks=14, scope="country", code="EG")
    grid = BinGrid(spec.epoch_start, spec.bin_seconds)
    day = grid.bins_per_day
    blackout_start = grid.index_floor(1296165600)  # 2011-01-27 22:00 UTC
    blackout = InjectionSpec(blackout_start, 6 * day, 0.95, label="national shutdown")
    surge = InjectionSpec(blackout.stop, 4 * day, 0.6, kind=InjectionKind.SURGE, label="scan surge")
    return generate(spec, [blackout, surge], test_start=11 * grid.bins_per_week)


@dataclass(frozen=True)
class CorpusEntry:
    series: Series
    truth: list[GroundTruthEvent]
    spec: GeneratorSpec
    injection: InjectionSpec


def make_corpus(n: int = 200, seed: int = 0, depth_range=(0.7, 1.0), duration_hours=(2.0, 24.0),
                base_range=(25.0, 1000.0), noise_range=(0.02, 0.05),
                noise_model: NoiseModel = NoiseModel.NEGATIVE_BINOMIAL, shape: Shape = Shape.STEP,
                training_weeks: int = 10, calibration_weeks: int = 1, test_weeks: int = 1
                ) -> list[CorpusEntry]:
    """Random series, each with one outage placed in its test slice.

    Base levels are log-uniform over ``base_range`` so that low-intensity
    series, where counting noise dominates, are well represented.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    log_lo, log_hi = np.log(base_range[0]), np.log(base_range[1])
    out = []
    for i in range(n):
        spec = GeneratorSpec(
            base_level=float(np.exp(rng.uniform(log_lo, log_hi))),
            daily_amp=float(rng.uniform(0.1, 0.4)),
            weekly_amp=float(rng.uniform(0.0, 0.15)),
            weekend_drop=float(rng.uniform(0.0, 0.15)),
            daily_peak_hour=float(rng.uniform(0, 24)),
            noise_model=noise_model,
            noise_scale=float(rng.uniform(*noise_range)),
            seed=int(rng.integers(2 ** 32)),
            length_weeks=training_weeks + calibration_weeks + test_weeks,
            scope="asn",
            code=str(64512 + i),
        )
        w = WEEK_SECONDS // spec.bin_seconds
        per_hour = 3600 // spec.bin_seconds
        test_start = (training_weeks + calibration_weeks) * w
        duration = int(round(rng.uniform(*duration_hours) * per_hour))
        start = test_start + int(rng.integers(0, test_weeks * w - duration))
        inj = InjectionSpec(start, duration, float(rng.uniform(*depth_range)), shape)
        series, truth = generate(spec, [inj], test_start=test_start)
        out.append(CorpusEntry(series, truth, spec, inj))
    return out


_SPEC_FIELDS = {f.name: f for f in fields(GeneratorSpec)}


def _parse_value(name: str, text: str):
    kind = _SPEC_FIELDS[name].type
    if name == "arma_color":
        ar_text, _, ma_text = text.partition("/")
        return (tuple(float(v) for v in ar_text.split()), tuple(float(v) for v in ma_text.split()))
    if "int" in kind:
        return int(text)
    if "float" in kind:
        return float(text)
    return text


def parse_spec_file(path: str | Path) -> tuple[GeneratorSpec, list[InjectionSpec]]:
    """Read a key = value generator spec.

    Keys are ``GeneratorSpec`` fields; ``arma_color`` is written as
    ``ar coeffs / ma coeffs``. Each ``inject`` line adds an injection as
    space-separated ``key=value`` pairs, e.g.
    ``inject = start=22176 duration=72 depth=0.8 shape=step kind=outage``.
    """
    values = {}
    injections = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (part.strip() for part in line.partition("="))
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        if key == "inject":
            kv = dict(item.split("=", 1) for item in value.split())
            injections.append(InjectionSpec(
                int(kv["start"]), int(kv["duration"]), float(kv["depth"]),
                kv.get("shape", "step"), kv.get("kind", "outage"), kv.get("label", "")))
        elif key in _SPEC_FIELDS:
            values[key] = _parse_value(key, value)
        else:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    return GeneratorSpec(**values), injections


def with_seed(spec: GeneratorSpec, seed: int) -> GeneratorSpec:
    return replace(spec, seed=seed)
