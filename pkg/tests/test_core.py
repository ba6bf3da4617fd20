import numpy as np
import pytest
from hypothesis import given, strategies as st

from ibrwatch.core import (BinGrid, DuplicateBinError, InsufficientLengthError, ParseError, Series, SeriesId,
                           UndefinedIntensityError, load_series, save_series, split_series,
                           weekly_median_intensity)

from conftest import HOURLY, make_series

T0 = 1289174400


def write_csv(path, rows):
    path.write_text("series_scope,series_code,timestamp,unique_ips\n" + "".join(f"{r}\n" for r in rows))
    return path


def test_series_id_validation():
    assert str(SeriesId("asn", "3356")) == "asn:3356"
    with pytest.raises(ValueError):
        SeriesId("asn", "AS3356")
    with pytest.raises(ValueError):
        SeriesId("asn", "0")
    with pytest.raises(ValueError):
        SeriesId("country", "")
    with pytest.raises(ValueError):
        SeriesId("planet", "earth")


def test_bin_grid():
    g = BinGrid(T0)
    assert g.bins_per_week == 2016
    assert g.bins_per_day == 288
    assert g.index_floor(T0 + 299) == 0
    assert g.index_ceil(T0 + 1) == 1
    assert g.index_ceil(T0 + 300) == 1
    with pytest.raises(ValueError):
        BinGrid(T0, 7000)


def test_series_rejects_negative():
    with pytest.raises(ValueError):
        make_series([1, -1])


def test_load_three_rows(tmp_path):
    p = write_csv(tmp_path / "a.csv", [f"country,EG,{T0},5", f"country,EG,{T0 + 300},6", f"country,EG,{T0 + 600},7"])
    (s,) = load_series(p)
    assert len(s) == 3
    assert s.values.tolist() == [5, 6, 7]
    assert s.grid == BinGrid(T0, 300)


def test_load_materializes_gap(tmp_path):
    p = write_csv(tmp_path / "a.csv", [f"country,EG,{T0},5", f"country,EG,{T0 + 600},7"])
    (s,) = load_series(p)
    assert len(s) == 3
    assert s.missing.tolist() == [False, True, False]


def test_load_duplicate_bin(tmp_path):
    p = write_csv(tmp_path / "a.csv", [f"country,EG,{T0},5", f"country,EG,{T0},6"])
    with pytest.raises(DuplicateBinError) as exc:
        load_series(p)
    assert exc.value.line == 3


@pytest.mark.parametrize("rows, line", [
    ([f"country,EG,{T0},x"], 2),
    ([f"country,EG,{T0},-3"], 2),
    ([f"country,EG,{T0},1", f"country,EG,{T0 + 150},2"], 3),
    ([f"country,EG,{T0 + 300},1", f"country,EG,{T0},2"], 3),
    ([f"country,EG,{T0}"], 2),
])
def test_load_errors_carry_line(tmp_path, rows, line):
    p = write_csv(tmp_path / "a.csv", rows)
    with pytest.raises(ParseError) as exc:
        load_series(p)
    assert exc.value.line == line


def test_load_bad_header(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("a,b,c,d\n")
    with pytest.raises(ParseError):
        load_series(p)


def test_load_groups_by_id(tmp_path):
    p = write_csv(tmp_path / "a.csv", [f"region,1234,{T0},5", f"asn,3356,{T0},6", f"region,1234,{T0 + 300},5"])
    out = load_series(p)
    assert [str(s.id) for s in out] == ["asn:3356", "region:1234"]
    assert [len(s) for s in out] == [1, 2]


counts = st.lists(st.one_of(st.none(), st.integers(0, 10 ** 6)), min_size=1, max_size=50)


@given(counts, counts)
def test_save_load_round_trip(tmp_path_factory, a, b):
    a[0] = 1 if a[0] is None else a[0]
    b[0] = 1 if b[0] is None else b[0]
    series = [
        Series(SeriesId("asn", "7"), BinGrid(T0, 300), [np.nan if v is None else v for v in a]),
        Series(SeriesId("country", "FR"), BinGrid(T0 + 900, 300), [np.nan if v is None else v for v in b]),
    ]
    d = tmp_path_factory.mktemp("rt")
    save_series(d / "s.csv", series)
    assert load_series(d / "s.csv") == series
    save_series(d / "t.csv", load_series(d / "s.csv"))
    assert (d / "s.csv").read_bytes() == (d / "t.csv").read_bytes()


def test_save_writes_missing_as_empty(tmp_path):
    save_series(tmp_path / "s.csv", [make_series([3, np.nan])])
    assert tmp_path.joinpath("s.csv").read_text().splitlines()[2].endswith(",")


def test_split_twelve_weeks():
    s = make_series(np.ones(12 * 168))
    sp = split_series(s)
    assert (len(sp.training), len(sp.calibration), len(sp.test)) == (1680, 168, 168)
    assert sp.calibration.grid.epoch_start == HOURLY.timestamp(1680)


def test_split_eleven_weeks_warns():
    s = make_series(np.ones(11 * 168))
    with pytest.warns(UserWarning, match="empty test"):
        sp = split_series(s)
    assert len(sp.test) == 0


def test_split_too_short():
    with pytest.raises(InsufficientLengthError) as exc:
        split_series(make_series(np.ones(5 * 168)))
    assert exc.value.actual == 840
    assert exc.value.required == 11 * 168


@given(st.integers(1, 2), st.integers(1, 3 * 168))
def test_split_concatenates_to_prefix(cal_weeks, extra):
    n = (10 + cal_weeks) * 168 + extra
    values = np.arange(n, dtype=float)
    sp = split_series(make_series(values), 10, cal_weeks)
    joined = np.concatenate([sp.training.values, sp.calibration.values, sp.test.values])
    np.testing.assert_array_equal(joined, values)
    assert len(sp.calibration) == cal_weeks * 168


def test_median_intensity_examples():
    assert weekly_median_intensity(make_series([20] * 10)) == 20
    assert weekly_median_intensity(make_series([0, 0, 0, 100, 100])) == 0
    assert weekly_median_intensity(make_series([np.nan, 4, 8, np.nan])) == 6
    with pytest.raises(UndefinedIntensityError):
        weekly_median_intensity(make_series([np.nan, np.nan]))


@given(st.lists(st.integers(0, 1000), min_size=1, max_size=60), st.randoms())
def test_median_intensity_permutation_invariant(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    # sort-and-pick oracle
    v = sorted(values)
    n = len(v)
    expected = v[n // 2] if n % 2 else (v[n // 2 - 1] + v[n // 2]) / 2
    assert weekly_median_intensity(make_series(shuffled)) == expected
