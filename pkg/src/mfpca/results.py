"""Result directories: CSV tables and a JSON summary written atomically."""
from __future__ import annotations

import json
import logging
import math
import os
import re
import tempfile
from collections.abc import Mapping
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from . import __version__
from .const import CSV_FLOAT_FORMAT, Estimator, ScoreMethod
from .eigen import EigenSystem, MfpcaFit, PipelineConfig
from .exceptions import InvalidArgument, ShapeError
from .fd import Curve, FloatArray, SampledGrid
from .moments import MeanEstimate
from .scores import ScoreSet
from .smooth import SmoothedCov

_LOGGER = logging.getLogger(__name__)

SUMMARY = "summary.json"
MEANS = "means.csv"


def write_text(path: Path, text: str) -> Path:
    """Write text next to its destination, then rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    _LOGGER.debug("Wrote %s", path)
    return path


def write_frame(path: Path, frame: pd.DataFrame) -> Path:
    text = frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return write_text(path, text)


def _jsonable(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(key): _jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, os.PathLike):
        return os.fspath(value)
    return value


def write_json(path: Path, data: Mapping[str, Any]) -> Path:
    return write_text(path, json.dumps(_jsonable(data), indent=2) + "\n")


def read_json(path: Path) -> dict[str, Any]:
    with open(path, encoding="utf-8") as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as err:
            raise InvalidArgument(f"{path} is not valid JSON: {err}") from None
    if not isinstance(data, dict):
        raise InvalidArgument(f"{path} does not hold a JSON object")
    return data


def _numbered(prefix: str, count: int) -> list[str]:
    return [f"{prefix}_{k + 1}" for k in range(count)]


def means_frame(means: MeanEstimate) -> pd.DataFrame:
    frame = pd.DataFrame({"t": means.grid.points, "mu": means.mu.values})
    for index, shift in enumerate(means.eta):
        frame[f"eta_{index + 1}"] = shift.values
    return frame


def eigenfunctions_frame(system: EigenSystem) -> pd.DataFrame:
    columns = _numbered("phi", system.n_components)
    frame = pd.DataFrame(system.functions.T, columns=columns)
    frame.insert(0, "t", system.grid.points)
    return frame


def surface_frame(surface: FloatArray, grid: SampledGrid) -> pd.DataFrame:
    frame = pd.DataFrame(surface, columns=_numbered("s", len(grid)))
    frame.insert(0, "t", grid.points)
    return frame


def scores_frames(
    scores: ScoreSet, subject_ids: tuple[str, ...], visit_ids: tuple[str, ...]
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Level 1 scores per subject and level 2 scores per present subject-visit pair."""
    level1 = pd.DataFrame({"subject_id": list(subject_ids)})
    for k in range(scores.n1):
        level1[f"xi_{k + 1}"] = scores.xi[:, k]
    for k in range(scores.n1):
        level1[f"xi_sd_{k + 1}"] = scores.xi_sd[:, k]

    present = ~np.isnan(scores.zeta).any(axis=2)
    if scores.n2 == 0:
        present = np.zeros(scores.zeta.shape[:2], dtype=bool)
    subjects, visits = np.nonzero(present)
    level2 = pd.DataFrame(
        {
            "subject_id": [subject_ids[i] for i in subjects],
            "visit_id": [visit_ids[j] for j in visits],
        }
    )
    for k in range(scores.n2):
        level2[f"zeta_{k + 1}"] = scores.zeta[subjects, visits, k]
    for k in range(scores.n2):
        level2[f"zeta_sd_{k + 1}"] = scores.zeta_sd[subjects, visits, k]
    return level1, level2


def fit_summary(
    fit: MfpcaFit,
    scores: ScoreSet | None = None,
    config: Mapping[str, Any] | None = None,
) -> dict[str, Any]:
    summary: dict[str, Any] = {
        "version": __version__,
        "sigma2": fit.sigma2,
        "rho_w": fit.rho_w,
        "n_components": [fit.level1.n_selected, fit.level2.n_selected],
        "selection_rule": fit.config.rule.value,
        "p1": fit.config.p1,
        "p2": fit.config.p2,
        "smoother": fit.config.smoother.as_dict(),
        "pipeline": fit.config.as_dict(),
        "grid": {"points": fit.grid.points, "weights": fit.grid.weights},
        "subject_ids": list(fit.subject_ids),
        "visit_ids": list(fit.visit_ids),
        "mask": np.asarray(fit.mask).astype(int),
    }
    if scores is not None:
        summary["scores"] = {
            "method": scores.method.value,
            "estimator": scores.estimator.value,
            "residual_variances": dict(scores.residual_variances),
            "diagnostics": scores.diagnostics.as_dict() if scores.diagnostics else None,
        }
    if config is not None:
        summary["config"] = dict(config)
    return summary


def write_fit(
    out_dir: Path,
    fit: MfpcaFit,
    scores: ScoreSet | None = None,
    config: Mapping[str, Any] | None = None,
) -> list[Path]:
    """Write every table of a fit; summary.json goes last."""
    out_dir = Path(out_dir)
    written = [write_frame(out_dir / MEANS, means_frame(fit.means))]
    for level, system in ((1, fit.level1), (2, fit.level2)):
        path = out_dir / f"eigenvalues_level{level}.csv"
        written.append(write_frame(path, system.explained))
        path = out_dir / f"eigenfunctions_level{level}.csv"
        written.append(write_frame(path, eigenfunctions_frame(system)))
    for name, surface in (("total", fit.cov.total), ("between", fit.cov.between)):
        path = out_dir / f"covariance_{name}.csv"
        written.append(write_frame(path, surface_frame(surface, fit.grid)))
    if scores is not None:
        level1, level2 = scores_frames(scores, fit.subject_ids, fit.visit_ids)
        written.append(write_frame(out_dir / "scores_level1.csv", level1))
        written.append(write_frame(out_dir / "scores_level2.csv", level2))
    written.append(write_json(out_dir / SUMMARY, fit_summary(fit, scores, config)))
    return written


def _read_csv(path: Path) -> pd.DataFrame:
    return pd.read_csv(
        path,
        float_precision="round_trip",
        dtype={"subject_id": str, "visit_id": str},
    )


def _columns(frame: pd.DataFrame, prefix: str) -> FloatArray:
    pattern = re.compile(rf"{prefix}_\d+")
    names = [name for name in frame.columns if pattern.fullmatch(name)]
    names.sort(key=lambda name: int(name.rsplit("_", 1)[1]))
    return frame[names].to_numpy(dtype=float)


def _optional_float(value: Any) -> float:
    return float("nan") if value is None else float(value)


def read_fit(out_dir: Path) -> tuple[MfpcaFit, ScoreSet | None]:
    """Rebuild a fit, and its scores when present, from the output of write_fit."""
    out_dir = Path(out_dir)
    summary = read_json(out_dir / SUMMARY)
    grid = SampledGrid(
        points=np.asarray(summary["grid"]["points"], dtype=float),
        weights=np.asarray(summary["grid"]["weights"], dtype=float),
    )
    means_table = _read_csv(out_dir / MEANS)
    if not np.array_equal(means_table["t"].to_numpy(dtype=float), grid.points):
        raise ShapeError(f"{MEANS} does not match the grid in {SUMMARY}")
    means = MeanEstimate(
        mu=Curve(grid, means_table["mu"].to_numpy(dtype=float)),
        eta=tuple(Curve(grid, column) for column in _columns(means_table, "eta").T),
    )
    systems = []
    for level, count in zip((1, 2), summary["n_components"]):
        values = _read_csv(out_dir / f"eigenvalues_level{level}.csv")["eigenvalue"]
        table = _read_csv(out_dir / f"eigenfunctions_level{level}.csv")
        functions = _columns(table, "phi").T
        systems.append(
            EigenSystem(
                level=level,
                eigenvalues=values.to_numpy(dtype=float),
                functions=functions,
                grid=grid,
                n_selected=int(count),
            )
        )
    sigma2 = float(summary["sigma2"])
    fit = MfpcaFit(
        means=means,
        level1=systems[0],
        level2=systems[1],
        sigma2=sigma2,
        rho_w=_optional_float(summary["rho_w"]),
        cov=SmoothedCov(
            total=_columns(_read_csv(out_dir / "covariance_total.csv"), "s"),
            between=_columns(_read_csv(out_dir / "covariance_between.csv"), "s"),
            sigma2=sigma2,
        ),
        mask=np.asarray(summary["mask"], dtype=bool),
        subject_ids=tuple(summary["subject_ids"]),
        visit_ids=tuple(summary["visit_ids"]),
        config=PipelineConfig.from_dict(summary["pipeline"]),
    )
    return fit, _read_scores(out_dir, fit, summary.get("scores"))


def _read_scores(
    out_dir: Path, fit: MfpcaFit, meta: Mapping[str, Any] | None
) -> ScoreSet | None:
    path1, path2 = out_dir / "scores_level1.csv", out_dir / "scores_level2.csv"
    if meta is None or not path1.exists() or not path2.exists():
        return None
    level1 = _read_csv(path1)
    level2 = _read_csv(path2)
    if tuple(level1["subject_id"]) != fit.subject_ids:
        raise ShapeError(f"{path1.name} subjects differ from {SUMMARY}")
    n1, n2 = fit.level1.n_selected, fit.level2.n_selected
    shape = (fit.n_subjects, fit.n_visits, n2)
    zeta, zeta_sd = np.full(shape, np.nan), np.full(shape, np.nan)
    subject_index = {label: i for i, label in enumerate(fit.subject_ids)}
    visit_index = {label: j for j, label in enumerate(fit.visit_ids)}
    rows = [subject_index[label] for label in level2["subject_id"]]
    cols = [visit_index[label] for label in level2["visit_id"]]
    zeta[rows, cols] = _columns(level2, "zeta")[:, :n2]
    zeta_sd[rows, cols] = _columns(level2, "zeta_sd")[:, :n2]
    variances = {
        name: _optional_float(value)
        for name, value in meta["residual_variances"].items()
    }
    return ScoreSet(
        xi=_columns(level1, "xi")[:, :n1],
        zeta=zeta,
        xi_sd=_columns(level1, "xi_sd")[:, :n1],
        zeta_sd=zeta_sd,
        residual_variances=variances,
        method=ScoreMethod(meta["method"]),
        estimator=Estimator(meta["estimator"]),
    )
