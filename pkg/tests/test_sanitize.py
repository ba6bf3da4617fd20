import numpy as np
import pytest
from hypothesis import given, strategies as st

from ibrwatch.sanitize import SanitizationError, dump_sanitized, sanitize_training

from conftest import make_series

W = 168
SPAN = 2 * W


def stack(intervals):
    return make_series(np.concatenate(intervals))


def clean_interval(seed=0):
    t = np.arange(SPAN)
    return np.round(50 + 20 * np.sin(2 * np.pi * t / 24) + np.random.default_rng(seed).integers(0, 5, SPAN))


def test_identical_intervals_reproduce_interval():
    base = clean_interval()
    out = sanitize_training(stack([base] * 5))
    np.testing.assert_array_equal(out.values, base)
    assert out.source_coverage.tolist() == [5] * SPAN
    assert len(out) == SPAN


def test_single_outage_suppressed():
    intervals = [np.full(SPAN, 100.0) for _ in range(5)]
    intervals[2][17] = 0.0
    out = sanitize_training(stack(intervals))
    assert out.values[17] == 100


def test_median_of_present_values():
    intervals = [np.full(SPAN, 1.0) for _ in range(5)]
    for k, v in enumerate([10, 20, 30, np.nan, np.nan]):
        intervals[k][40] = v
    out = sanitize_training(stack(intervals))
    assert out.values[40] == 20
    assert out.source_coverage[40] == 3


def test_even_count_averages_central_pair():
    intervals = [np.full(SPAN, 1.0) for _ in range(5)]
    for k, v in enumerate([10, 20, 31, 40, np.nan]):
        intervals[k][3] = v
    assert sanitize_training(stack(intervals)).values[3] == 25.5


def test_dark_bin_interpolated_within_week():
    intervals = [np.arange(SPAN, dtype=float) for _ in range(5)]
    for iv in intervals:
        iv[10] = np.nan
        iv[W] = np.nan  # first bin of second week: only a right-hand neighbour
    out = sanitize_training(stack(intervals))
    assert out.values[10] == 10
    assert out.source_coverage[10] == 0
    assert out.values[W] == W + 1
    assert not np.isnan(out.values).any()


def test_fully_dark_week_fails():
    intervals = [np.ones(SPAN) for _ in range(5)]
    for iv in intervals:
        iv[W:] = np.nan
    with pytest.raises(SanitizationError):
        sanitize_training(stack(intervals))


def test_wrong_length():
    with pytest.raises(SanitizationError):
        sanitize_training(make_series(np.ones(9 * W)))


corruption = st.sampled_from(["missing", "spike", "zero"])


@given(st.lists(st.tuples(st.integers(0, SPAN - 1), st.lists(st.integers(0, 4), min_size=1, max_size=2, unique=True),
                          corruption, corruption), max_size=30, unique_by=lambda c: c[0]),
       st.integers(0, 2 ** 16))
def test_robust_to_two_corrupted_intervals(corruptions, seed):
    base = clean_interval(seed)
    intervals = [base.copy() for _ in range(5)]
    for j, which, kind_a, kind_b in corruptions:
        for k, kind in zip(which, (kind_a, kind_b)):
            intervals[k][j] = {"missing": np.nan, "spike": 1e6, "zero": 0.0}[kind]
    out = sanitize_training(stack(intervals))
    np.testing.assert_array_equal(out.values, base)
    assert not np.isnan(out.values).any()


def test_dump(tmp_path):
    out = sanitize_training(stack([clean_interval()] * 5))
    dump_sanitized(tmp_path / "d.csv", out)
    lines = tmp_path.joinpath("d.csv").read_text().splitlines()
    assert lines[0] == "bin_index,sanitized_value,source_coverage"
    assert len(lines) == SPAN + 1
