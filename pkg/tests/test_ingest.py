"""Tests for band power preprocessing and sample tables."""
import logging

import numpy as np
import pytest

from mfpca.const import Band, RawFormat
from mfpca.exceptions import (
    BandPowerUndefined,
    DuplicateRow,
    GridMismatch,
    InsufficientData,
    InvalidArgument,
    RangeError,
)
from mfpca.ingest import (
    BandSpec,
    band_power,
    load_sample,
    read_signal,
    series_frame,
    write_sample,
)
from mfpca.sim import SimConfig, generate

RATE = 125.0
WINDOW = 3750

HEADER = "subject_id,visit_id,t,value\n"
WELL_FORMED = [
    "a,1,0.0,1.0",
    "a,1,0.5,2.0",
    "a,1,1.0,3.0",
    "a,2,0.0,4.0",
    "a,2,0.5,5.0",
    "a,2,1.0,6.0",
    "b,1,0.0,7.0",
    "b,1,0.5,8.0",
    "b,1,1.0,9.0",
    "b,2,0.0,10.0",
    "b,2,0.5,11.0",
    "b,2,1.0,12.0",
]


@pytest.fixture(autouse=True)
def logging_config(caplog):
    caplog.set_level(logging.DEBUG)


def tone(frequency, windows=2, amplitude=1.0):
    t = np.arange(windows * WINDOW) / RATE
    return amplitude * np.sin(2 * np.pi * frequency * t)


def write_table(path, rows, newline="\n"):
    text = newline.join([HEADER.rstrip("\n"), *rows]) + newline
    path.write_text(text, encoding="utf-8")
    return path


def test_delta_tone():
    """Test that a 2 Hz sine puts all of its power in the delta band."""
    series = band_power(tone(2.0, windows=3))
    assert series.n_windows == 3
    assert np.all(series.values >= 0.99)
    np.testing.assert_allclose(series.times, np.array([15, 45, 75]) / 3600)
    assert series.undefined == ()


def test_alpha_tone():
    """Test that a 10 Hz sine has no delta power."""
    series = band_power(tone(10.0))
    assert np.all(series.values <= 0.01)
    alpha = band_power(tone(10.0), target="alpha")
    assert np.all(alpha.values >= 0.99)


def test_amplitude_invariance():
    """Test that scaling the signal leaves the normalized power unchanged."""
    rng = np.random.default_rng(0)
    signal = rng.standard_normal(2 * WINDOW)
    base = band_power(signal, target="theta")
    for factor in (5.0, -0.01):
        scaled = band_power(factor * signal, target="theta")
        np.testing.assert_allclose(scaled.values, base.values, rtol=1e-9)
    assert np.all((base.values > 0) & (base.values < 1))


def test_taper_keeps_a_pure_tone_in_band():
    """Test the optional Hann taper on a delta tone."""
    series = band_power(tone(2.0), taper=True)
    assert np.all(series.values >= 0.99)


def test_constant_signal_is_undefined(caplog):
    """Test that windows without in-band power are missing, or raise when strict."""
    signal = np.full(2 * WINDOW, 3.0)
    series = band_power(signal)
    assert np.all(np.isnan(series.values))
    assert series.undefined == (0, 1)
    assert "2 of 2 windows have no in-band power" in caplog.text
    assert series_frame(series, "s1", "v1").empty
    with pytest.raises(BandPowerUndefined) as excinfo:
        band_power(signal, strict=True)
    assert excinfo.value.window_index == 0


def test_partial_window_is_dropped(caplog):
    """Test that trailing samples short of a window are dropped and reported."""
    signal = np.concatenate([tone(2.0), np.zeros(100)])
    series = band_power(signal)
    assert series.n_windows == 2
    assert series.dropped_samples == 100
    assert "Dropping 100 trailing samples" in caplog.text
    assert series.report()["dropped_samples"] == 100
    with pytest.raises(InsufficientData):
        band_power(np.ones(WINDOW - 1))


def test_max_hours_truncates():
    """Test truncating a recording to its first hours."""
    series = band_power(tone(2.0, windows=80), max_hours=0.5)
    assert series.n_windows == 2
    assert series.truncated_samples == 20 * WINDOW


def test_series_frame():
    """Test the functional data rows of a band power series."""
    frame = series_frame(band_power(tone(2.0)), "s1", "v1")
    assert list(frame.columns) == ["subject_id", "visit_id", "t", "value"]
    assert list(frame["subject_id"]) == ["s1", "s1"]


def test_band_spec_validation():
    """Test band ordering, window and sampling rate checks."""
    delta, theta = Band("delta", 0.8, 4.0), Band("theta", 3.0, 8.0)
    with pytest.raises(InvalidArgument):
        BandSpec(bands=(delta, theta))
    with pytest.raises(InvalidArgument):
        BandSpec(bands=())
    with pytest.raises(InvalidArgument):
        BandSpec(window_seconds=0.3)
    with pytest.raises(InvalidArgument):
        BandSpec(sampling_rate=30.0)
    with pytest.raises(InvalidArgument):
        BandSpec().band("gamma")
    assert BandSpec().window_samples == WINDOW
    assert BandSpec(bands=[delta]).bands == (delta,)


def test_read_text_signal(tmp_path):
    """Test one number per line with comments."""
    path = tmp_path / "signal.txt"
    path.write_text("# channel C3\n1.5\n-2\n3e-1\n")
    np.testing.assert_array_equal(read_signal(path), [1.5, -2.0, 0.3])
    bad = tmp_path / "bad.txt"
    bad.write_text("1\nfoo\n")
    with pytest.raises(InvalidArgument):
        read_signal(bad)
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    with pytest.raises(InsufficientData):
        read_signal(empty)


def test_read_float32_signal(tmp_path):
    """Test little endian float32 input."""
    path = tmp_path / "signal.f32"
    np.array([0.5, -1.25, 8.0], dtype="<f4").tofile(path)
    data = read_signal(path, RawFormat.F32LE)
    np.testing.assert_array_equal(data, [0.5, -1.25, 8.0])
    odd = tmp_path / "odd.f32"
    odd.write_bytes(b"\x00" * 5)
    with pytest.raises(InvalidArgument):
        read_signal(odd, "f32le")


def test_load_well_formed_sample(tmp_path):
    """Test two subjects with two visits on three points."""
    sample = load_sample(write_table(tmp_path / "data.csv", WELL_FORMED))
    assert (sample.n_subjects, sample.n_visits, sample.n_points) == (2, 2, 3)
    assert sample.subject_ids == ("a", "b")
    assert sample.visit_ids == ("1", "2")
    np.testing.assert_array_equal(sample.grid.points, [0.0, 0.5, 1.0])
    np.testing.assert_array_equal(sample.values[1, 0], [7.0, 8.0, 9.0])
    assert sample.is_balanced


def test_load_crlf_and_several_files(tmp_path):
    """Test CRLF line endings and tables split over two files."""
    first = write_table(tmp_path / "a.csv", WELL_FORMED[:6], newline="\r\n")
    second = write_table(tmp_path / "b.csv", WELL_FORMED[6:])
    sample = load_sample([first, second])
    assert sample.subject_ids == ("a", "b")
    np.testing.assert_array_equal(sample.values[0, 1], [4.0, 5.0, 6.0])


def test_missing_visit_is_masked(tmp_path):
    """Test that an absent curve is recorded in the mask."""
    sample = load_sample(write_table(tmp_path / "data.csv", WELL_FORMED[:9]))
    np.testing.assert_array_equal(sample.mask, [[True, True], [True, False]])
    assert sample.n_present == 3


def test_duplicate_row(tmp_path):
    """Test that a repeated (subject, visit, t) names its line."""
    rows = WELL_FORMED[:4] + ["a,1,0.5,2.5"] + WELL_FORMED[4:]
    with pytest.raises(DuplicateRow) as excinfo:
        load_sample(write_table(tmp_path / "data.csv", rows))
    assert excinfo.value.line_number == 6
    assert "line 6" in str(excinfo.value)


def test_t_range(tmp_path):
    """Test rescaling t and rejecting points outside [0, 1]."""
    rows = [
        row.replace(",1.0,", ",2.0,").replace(",0.5,", ",1.0,") for row in WELL_FORMED
    ]
    path = write_table(tmp_path / "hours.csv", rows)
    with pytest.raises(RangeError):
        load_sample(path)
    sample = load_sample(path, t_range=(0.0, 2.0))
    np.testing.assert_array_equal(sample.grid.points, [0.0, 0.5, 1.0])
    with pytest.raises(InvalidArgument):
        load_sample(path, t_range=(2.0, 2.0))


def test_ragged_grid(tmp_path):
    """Test that curves on different points are rejected."""
    rows = [row for row in WELL_FORMED if row != "b,2,0.5,11.0"]
    with pytest.raises(GridMismatch):
        load_sample(write_table(tmp_path / "data.csv", rows))


def test_malformed_tables(tmp_path):
    """Test missing columns, non-numeric values and empty tables."""
    no_value = tmp_path / "no_value.csv"
    no_value.write_text("subject_id,visit_id,t\na,1,0.0\n")
    with pytest.raises(InvalidArgument):
        load_sample(no_value)
    text = write_table(tmp_path / "text.csv", WELL_FORMED[:2] + ["a,1,1.0,high"])
    with pytest.raises(InvalidArgument) as excinfo:
        load_sample(text)
    assert "line 4" in str(excinfo.value)
    header_only = tmp_path / "header.csv"
    header_only.write_text(HEADER)
    with pytest.raises(InsufficientData):
        load_sample(header_only)


def test_write_then_load_round_trip(tmp_path):
    """Test that a written sample loads back unchanged."""
    sample, _ = generate(SimConfig(n_subjects=4, n_visits=3, n_points=11, sigma=0.1))
    path = write_sample(sample, tmp_path / "sample.csv")
    loaded = load_sample(path)
    np.testing.assert_array_equal(loaded.values, sample.values)
    np.testing.assert_array_equal(loaded.grid.points, sample.grid.points)
    assert loaded.subject_ids == sample.subject_ids
    assert loaded.visit_ids == sample.visit_ids
