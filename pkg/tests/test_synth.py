import numpy as np
import pytest
from hypothesis import given, strategies as st

from ibrwatch.core import BinGrid
from ibrwatch.evaluation import truth_mask
from ibrwatch.pipeline import run_pipeline
from ibrwatch.synth import (GeneratorSpec, InjectionKind, InjectionSpec, NoiseModel, Shape, egypt_fixture,
                            generate, make_corpus, parse_spec_file, seasonal_level, with_seed)


def hourly(**kw):
    return GeneratorSpec(**{"base_level": 200.0, "bin_seconds": 3600, "length_weeks": 3, **kw})


def test_deterministic_given_seed():
    for model in NoiseModel:
        a, _ = generate(hourly(noise_model=model, seed=5))
        b, _ = generate(hourly(noise_model=model, seed=5))
        c, _ = generate(hourly(noise_model=model, seed=6))
        assert a == b and a != c


def test_blackout_window_is_zero():
    silent, _ = generate(hourly(noise_scale=0.0), [InjectionSpec(200, 10, 1.0)])
    assert np.all(silent.values[200:210] == 0)
    # additive noise leaves a non-negative floor of a few sigma
    series, truth = generate(hourly(noise_scale=0.03, seed=1), [InjectionSpec(200, 10, 1.0)])
    assert np.all(series.values[200:210] <= 5 * 0.03 * 200)
    assert np.all(series.values[190:200] > 5 * 0.03 * 200)
    assert truth[0].start == series.grid.timestamp(200) and truth[0].end == series.grid.timestamp(210)


def test_no_injection_no_truth():
    assert generate(hourly())[1] == []


def test_surge_has_no_truth_and_raises_level():
    spec = hourly(noise_scale=0.0)
    clean, _ = generate(spec)
    surged, truth = generate(spec, [InjectionSpec(100, 5, 0.6, kind=InjectionKind.SURGE)])
    assert truth == []
    np.testing.assert_allclose(surged.values[100:105], np.round(clean.values[100:105] * 1.6), atol=1)


def test_ramp_reaches_full_depth():
    spec = hourly(noise_scale=0.0)
    clean, _ = generate(spec)
    ramped, _ = generate(spec, [InjectionSpec(100, 4, 1.0, shape=Shape.RAMP)])
    assert ramped.values[103] == 0
    assert ramped.values[100] == pytest.approx(0.75 * clean.values[100], abs=1)


def test_injection_errors():
    with pytest.raises(ValueError, match="overlap"):
        generate(hourly(), [InjectionSpec(100, 10, 0.5), InjectionSpec(105, 10, 0.5)])
    with pytest.raises(ValueError):
        generate(hourly(), [InjectionSpec(10, 10, 0.5)], test_start=100)
    with pytest.raises(ValueError):
        generate(hourly(), [InjectionSpec(500, 10, 0.5)])
    with pytest.raises(ValueError):
        InjectionSpec(0, 5, 1.5)


def test_seasonality_shape():
    spec = hourly(daily_amp=0.3, weekly_amp=0.0, weekend_drop=0.1, daily_peak_hour=12.0)
    grid = BinGrid(spec.epoch_start, 3600)
    level = seasonal_level(spec, grid.epoch_start + np.arange(168) * 3600)
    # epoch is a Monday: weekday noon peaks, weekday midnight troughs, weekends lower
    assert level[12] == pytest.approx(200 * 1.3)
    assert level[0] == pytest.approx(200 * 0.7)
    assert level[5 * 24 + 12] == pytest.approx(200 * 1.2)
    assert np.all(level >= 0)


def test_negative_binomial_is_overdispersed():
    spec = hourly(noise_model=NoiseModel.NEGATIVE_BINOMIAL, noise_scale=0.1, daily_amp=0.0, weekly_amp=0.0,
                  weekend_drop=0.0, length_weeks=30, seed=3)
    v = generate(spec)[0].values
    # variance of a gamma-Poisson mixture: m + scale^2 m^2
    assert v.mean() == pytest.approx(200, rel=0.02)
    assert v.var() == pytest.approx(200 + 0.01 * 200 ** 2, rel=0.1)


@given(st.integers(0, 2 ** 31), st.lists(st.tuples(st.integers(0, 40), st.integers(1, 12)), max_size=5))
def test_truth_aligns_with_injections(seed, gaps):
    start, injections = 0, []
    for gap, dur in gaps:
        start += gap
        injections.append(InjectionSpec(start, dur, 0.9))
        start += dur
    spec = hourly(seed=seed)
    series, truth = generate(spec, injections)
    mask = truth_mask(truth, series.grid, range(len(series)))
    expected = np.zeros(len(series), dtype=bool)
    for j in injections:
        expected[j.start:j.stop] = True
    np.testing.assert_array_equal(mask, expected)


def test_egypt_fixture_shape():
    series, truth = egypt_fixture()
    assert len(series) == 14 * 2016
    (blackout,) = truth
    assert blackout.start == 1296165600
    assert blackout.end - blackout.start == 6 * 86400
    w = series.grid.bins_per_week
    assert series.grid.index_floor(blackout.start) >= 11 * w
    b0, i0 = series.grid.index_floor(blackout.start), series.grid.index_floor(blackout.end)
    before = series.values[b0 - 4 * 288:b0]
    surge = series.values[i0:i0 + 4 * 288]
    assert series.values[b0:i0].mean() < 0.1 * before.mean()
    assert surge.mean() > 1.4 * series.values[i0 + 4 * 288:].mean()


def test_corpus_is_reproducible_and_in_test_slice():
    a = make_corpus(5, seed=9)
    b = make_corpus(5, seed=9)
    assert [e.series for e in a] == [e.series for e in b]
    for e in a:
        assert e.injection.start >= 11 * 2016
        assert e.injection.stop <= len(e.series)
        assert 0.7 <= e.injection.depth <= 1.0
        assert e.spec.base_level >= 25
    assert len({str(e.series.id) for e in a}) == 5


def test_spec_file(tmp_path):
    p = tmp_path / "s.spec"
    p.write_text("# comment\nbase_level = 120\nnoise_model = negative_binomial\nseed = 4\n"
                 "arma_color = 0.5 0.2 / 0.3\n"
                 "inject = start=22200 duration=72 depth=0.8 shape=ramp kind=outage\n")
    spec, inj = parse_spec_file(p)
    assert spec.base_level == 120.0 and spec.seed == 4
    assert spec.noise_model is NoiseModel.NEGATIVE_BINOMIAL
    assert spec.arma_color == ((0.5, 0.2), (0.3,))
    assert inj == [InjectionSpec(22200, 72, 0.8, Shape.RAMP, InjectionKind.OUTAGE)]
    assert with_seed(spec, 9).seed == 9
    p.write_text("bogus = 1\n")
    with pytest.raises(ValueError):
        parse_spec_file(p)


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="a calibrated 3-sigma lower bound still trips on ~0.13% of clean bins, "
                                        "so a week of 2016 bins is rarely event-free; see the decisions ledger")
def test_clean_series_have_no_events_in_98_percent_of_seeds():
    clean = 0
    seeds = range(50)
    for seed in seeds:
        spec = GeneratorSpec(base_level=300.0, noise_scale=0.05, seed=seed, length_weeks=12)
        clean += not run_pipeline(generate(spec)[0]).events
    assert clean >= 0.98 * len(seeds)
