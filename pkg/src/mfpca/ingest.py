"""Normalized band power from raw signals and functional data tables."""
from __future__ import annotations

import dataclasses
import logging
import os
from collections.abc import Sequence
from pathlib import Path

import numpy as np
import numpy.typing as npt
import pandas as pd

from .const import (
    BAND_POWER_RELATIVE_TOL,
    DEFAULT_SAMPLING_RATE,
    DEFAULT_WINDOW_SECONDS,
    EEG_BANDS,
    SAMPLE_COLUMNS,
    Band,
    RawFormat,
)
from .exceptions import (
    BandPowerUndefined,
    DuplicateRow,
    GridMismatch,
    InsufficientData,
    InvalidArgument,
    RangeError,
)
from .fd import FloatArray, MultilevelSample, SampledGrid
from .results import write_frame

_LOGGER = logging.getLogger(__name__)

SECONDS_PER_HOUR = 3600.0

# Rescaled t within this of [0, 1] is clipped instead of rejected
_RANGE_TOL = 1e-12


@dataclasses.dataclass(frozen=True)
class BandSpec:
    """Frequency bands (Hz), window length (s) and sampling rate (Hz)."""

    bands: tuple[Band, ...] = tuple(EEG_BANDS.values())
    window_seconds: float = DEFAULT_WINDOW_SECONDS
    sampling_rate: float = DEFAULT_SAMPLING_RATE

    def __post_init__(self) -> None:
        object.__setattr__(self, "bands", tuple(self.bands))
        if not self.bands:
            raise InvalidArgument("at least one band is required")
        if not self.sampling_rate > 0 or not self.window_seconds > 0:
            raise InvalidArgument("sampling rate and window length must be positive")
        previous = None
        for band in self.bands:
            if not 0 <= band.low <= band.high:
                raise InvalidArgument(
                    f"band {band.name} has edges {band.low}..{band.high}"
                )
            if previous is not None and band.low <= previous.high:
                raise InvalidArgument(
                    f"bands {previous.name} and {band.name} overlap or are out of order"
                )
            previous = band
        if len({band.name for band in self.bands}) != len(self.bands):
            raise InvalidArgument("band names must be unique")
        samples = self.window_seconds * self.sampling_rate
        whole = abs(samples - round(samples)) <= 1e-9 * max(1.0, samples)
        if not whole or round(samples) < 1:
            raise InvalidArgument(
                f"{self.window_seconds} s at {self.sampling_rate} Hz "
                "is not a whole number of samples"
            )
        if self.sampling_rate <= 2 * self.bands[-1].high:
            raise InvalidArgument(
                f"sampling rate {self.sampling_rate} Hz "
                f"cannot resolve {self.bands[-1].high} Hz"
            )

    @property
    def window_samples(self) -> int:
        return int(round(self.window_seconds * self.sampling_rate))

    def band(self, name: str) -> Band:
        for band in self.bands:
            if band.name == name:
                return band
        raise InvalidArgument(
            f"unknown band {name!r}, "
            f"expected one of {[band.name for band in self.bands]}"
        )


@dataclasses.dataclass(frozen=True, eq=False)
class BandPowerSeries:
    """Normalized power of one band per window.

    times are window midpoints in hours; undefined windows hold nan and are listed in
    undefined.
    """

    band: str
    times: FloatArray
    values: FloatArray
    undefined: tuple[int, ...] = ()
    dropped_samples: int = 0
    truncated_samples: int = 0

    @property
    def n_windows(self) -> int:
        return int(self.values.size)

    def report(self) -> dict[str, object]:
        return {
            "band": self.band,
            "windows": self.n_windows,
            "undefined_windows": list(self.undefined),
            "dropped_samples": self.dropped_samples,
            "truncated_samples": self.truncated_samples,
        }


def band_power(
    signal: npt.ArrayLike,
    spec: BandSpec | None = None,
    target: str = "delta",
    *,
    taper: bool = False,
    max_hours: float | None = None,
    strict: bool = False,
) -> BandPowerSeries:
    """Fraction of the in-band power that falls in target, per adjacent window.

    Each window is transformed with the DFT; a bin belongs to a band when its
    frequency lies in the closed band interval. Windows without in-band power are
    reported as nan, or raise BandPowerUndefined with strict.
    """
    spec = spec or BandSpec()
    target_band = spec.band(target)
    data = np.asarray(signal, dtype=float).ravel()
    if not np.all(np.isfinite(data)):
        raise InvalidArgument("signal contains non-finite samples")
    truncated = 0
    if max_hours is not None:
        if not max_hours > 0:
            raise InvalidArgument(f"max_hours must be positive, got {max_hours}")
        keep = int(np.floor(max_hours * SECONDS_PER_HOUR * spec.sampling_rate))
        truncated = max(data.size - keep, 0)
        data = data[:keep]
    size = spec.window_samples
    n_windows = data.size // size
    if n_windows == 0:
        raise InsufficientData(
            f"{data.size} samples do not fill one {spec.window_seconds} s window"
        )
    dropped = data.size - n_windows * size
    if dropped:
        _LOGGER.warning("Dropping %d trailing samples of a partial window", dropped)

    windows = data[: n_windows * size].reshape(n_windows, size)
    if taper:
        windows = windows * np.hanning(size)
    power = np.abs(np.fft.rfft(windows, axis=1)) ** 2
    freqs = np.fft.rfftfreq(size, d=1.0 / spec.sampling_rate)

    def in_band(band: Band) -> FloatArray:
        return power[:, (freqs >= band.low) & (freqs <= band.high)].sum(axis=1)

    total = np.sum([in_band(band) for band in spec.bands], axis=0)
    energy = size * np.sum(windows**2, axis=1)
    defined = total > BAND_POWER_RELATIVE_TOL * energy
    values = np.full(n_windows, np.nan)
    values[defined] = in_band(target_band)[defined] / total[defined]
    undefined = tuple(int(index) for index in np.flatnonzero(~defined))
    if undefined:
        if strict:
            raise BandPowerUndefined(
                f"window {undefined[0]} has no power in any band",
                window_index=undefined[0],
            )
        _LOGGER.warning(
            "%d of %d windows have no in-band power", len(undefined), n_windows
        )
    times = (np.arange(n_windows) + 0.5) * spec.window_seconds / SECONDS_PER_HOUR
    return BandPowerSeries(
        band=target,
        times=times,
        values=values,
        undefined=undefined,
        dropped_samples=int(dropped),
        truncated_samples=int(truncated),
    )


def read_signal(
    path: str | os.PathLike[str], raw_format: RawFormat = RawFormat.TEXT
) -> FloatArray:
    """Read one channel as text (one number per line) or float32 little endian."""
    raw_format = RawFormat(raw_format)
    path = Path(path)
    if raw_format is RawFormat.F32LE:
        size = path.stat().st_size
        if size % 4:
            raise InvalidArgument(
                f"{path} is {size} bytes, not a whole number of float32 samples"
            )
        data = np.fromfile(path, dtype="<f4").astype(float)
    else:
        try:
            frame = pd.read_csv(
                path, header=None, comment="#", float_precision="round_trip"
            )
        except pd.errors.EmptyDataError:
            raise InsufficientData(f"{path} holds no samples") from None
        if frame.shape[1] > 1:
            raise InvalidArgument(f"{path} has {frame.shape[1]} columns, expected one")
        data = pd.to_numeric(frame.iloc[:, 0], errors="coerce").to_numpy(dtype=float)
        if np.isnan(data).any():
            raise InvalidArgument(f"{path} contains non-numeric samples")
    if data.size == 0:
        raise InsufficientData(f"{path} holds no samples")
    return data


def series_frame(
    series: BandPowerSeries, subject_id: str, visit_id: str
) -> pd.DataFrame:
    """Defined windows as rows of the functional data table, t in hours."""
    keep = ~np.isnan(series.values)
    return pd.DataFrame(
        {
            "subject_id": subject_id,
            "visit_id": visit_id,
            "t": series.times[keep],
            "value": series.values[keep],
        }
    )


def _parse_range(t_range: tuple[float, float] | None) -> tuple[float, float] | None:
    if t_range is None:
        return None
    low, high = (float(value) for value in t_range)
    if not high > low:
        raise InvalidArgument(f"t range {low}:{high} is empty")
    return low, high


def _read_table(path: Path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(
            path,
            dtype={"subject_id": str, "visit_id": str},
            keep_default_na=False,
            float_precision="round_trip",
        )
    except pd.errors.EmptyDataError:
        raise InsufficientData(f"{path} is empty") from None
    missing = [column for column in SAMPLE_COLUMNS if column not in frame.columns]
    if missing:
        raise InvalidArgument(f"{path} lacks columns {missing}")
    if frame.empty:
        raise InsufficientData(f"{path} has a header but no rows")
    frame = frame[list(SAMPLE_COLUMNS)].copy()
    for column in ("t", "value"):
        numeric = pd.to_numeric(frame[column], errors="coerce")
        bad = numeric.isna().to_numpy()
        if bad.any():
            raise InvalidArgument(
                f"{path} line {int(np.flatnonzero(bad)[0]) + 2}: "
                f"{column} is not a number"
            )
        frame[column] = numeric.astype(float)
    frame["line"] = np.arange(len(frame)) + 2
    frame["source"] = str(path)
    return frame


def load_sample(
    paths: str | os.PathLike[str] | Sequence[str | os.PathLike[str]],
    t_range: tuple[float, float] | None = None,
) -> MultilevelSample:
    """Assemble a sample from one or more subject_id,visit_id,t,value tables.

    With t_range = (lo, hi), t is rescaled by (t - lo) / (hi - lo) before it is checked
    against [0, 1]. Every curve must be observed on the same set of t values. Subjects
    and visits keep their order of first appearance.
    """
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    if not paths:
        raise InvalidArgument("no input tables given")
    frame = pd.concat([_read_table(Path(path)) for path in paths], ignore_index=True)

    duplicated = frame.duplicated(subset=["subject_id", "visit_id", "t"])
    if duplicated.any():
        row = frame[duplicated].iloc[0]
        raise DuplicateRow(
            f"{row['source']} line {row['line']}: duplicate row for subject "
            f"{row['subject_id']} visit {row['visit_id']} t={row['t']!r}",
            line_number=int(row["line"]),
        )

    bounds = _parse_range(t_range)
    t = frame["t"].to_numpy(dtype=float)
    if bounds is not None:
        t = (t - bounds[0]) / (bounds[1] - bounds[0])
    outside = (t < -_RANGE_TOL) | (t > 1 + _RANGE_TOL)
    if outside.any():
        row = frame[outside].iloc[0]
        raise RangeError(
            f"{row['source']} line {row['line']}: t={row['t']!r} lies outside [0, 1] "
            "after rescaling"
        )
    frame["t"] = np.clip(t, 0.0, 1.0)

    points = np.unique(frame["t"].to_numpy())
    sizes = frame.groupby(["subject_id", "visit_id"], sort=False).size()
    ragged = sizes[sizes != points.size]
    if not ragged.empty:
        subject, visit = ragged.index[0]
        raise GridMismatch(
            f"subject {subject} visit {visit} has {ragged.iloc[0]} points, "
            f"the common grid has {points.size}"
        )

    subject_ids = tuple(pd.unique(frame["subject_id"]))
    visit_ids = tuple(pd.unique(frame["visit_id"]))
    rows = pd.Index(subject_ids).get_indexer(frame["subject_id"])
    cols = pd.Index(visit_ids).get_indexer(frame["visit_id"])
    positions = np.searchsorted(points, frame["t"].to_numpy())
    values = np.zeros((len(subject_ids), len(visit_ids), points.size))
    mask = np.zeros((len(subject_ids), len(visit_ids)), dtype=bool)
    values[rows, cols, positions] = frame["value"].to_numpy()
    mask[rows, cols] = True
    _LOGGER.debug(
        "Loaded %d curves (%d subjects, %d visits, %d points)",
        int(mask.sum()),
        len(subject_ids),
        len(visit_ids),
        points.size,
    )
    return MultilevelSample(
        grid=SampledGrid.from_points(points),
        values=values,
        mask=mask,
        subject_ids=subject_ids,
        visit_ids=visit_ids,
    )


def sample_frame(sample: MultilevelSample) -> pd.DataFrame:
    subjects, visits = np.nonzero(sample.mask)
    size = sample.n_points
    return pd.DataFrame(
        {
            "subject_id": np.repeat([sample.subject_ids[i] for i in subjects], size),
            "visit_id": np.repeat([sample.visit_ids[j] for j in visits], size),
            "t": np.tile(sample.grid.points, subjects.size),
            "value": sample.values[subjects, visits].ravel(),
        }
    )


def write_sample(sample: MultilevelSample, path: str | os.PathLike[str]) -> Path:
    """Write the observed curves with 17 significant digits."""
    return write_frame(Path(path), sample_frame(sample))
