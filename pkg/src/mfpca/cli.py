"""Command line interface: preprocess, fit, simulate, bootstrap and regress."""
from __future__ import annotations

import argparse
import contextlib
import logging
import sys
from collections.abc import Callable, Iterator, Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from . import __version__
from .const import (
    DEFAULT_P1,
    DEFAULT_SAMPLING_RATE,
    DEFAULT_WINDOW_SECONDS,
    GIBBS_BURN_IN,
    GIBBS_CHAINS,
    GIBBS_ITERATIONS,
    GIBBS_THIN,
    SIM_GRID_SIZE,
    Estimator,
    Hypothesis,
    LambdaRule,
    RawFormat,
    ScoreMethod,
    SelectionRule,
    VarianceMode,
)
from .eigen import EigenSystem, PipelineConfig, fit_mfpca
from .exceptions import InvalidArgument, MfpcaError
from .glm import RegressionSpec, encode_categorical, fit_logistic
from .ingest import BandSpec, band_power, load_sample, read_signal, series_frame
from .plots import plot_fit
from .results import read_fit, read_json, write_fit, write_frame, write_json
from .sampler import GibbsConfig
from .scores import estimate_scores
from .sim import SimConfig, bootstrap_rho, simulate_study
from .smooth import SmootherConfig

_LOGGER = logging.getLogger(__name__)

GLOBAL_DEFAULTS: dict[str, Any] = {"seed": 0, "threads": 1, "out_dir": "."}

_SMOOTHING_DEFAULTS: dict[str, Any] = {
    "smooth": True,
    "presmooth": False,
    "p1": DEFAULT_P1,
    "p2": None,
    "rule": SelectionRule.EITHER.value,
    "n1": None,
    "n2": None,
    "n_basis": None,
    "surface_n_basis": None,
    "penalty_order": 2,
    "lambda_rule": LambdaRule.GCV.value,
    "lambda_value": None,
}

_SCORING_DEFAULTS: dict[str, Any] = {
    "method": ScoreMethod.PCP.value,
    "estimator": Estimator.BLUP.value,
    "variance_mode": VarianceMode.MOMENTS.value,
    "sigma2s": None,
    "iterations": GIBBS_ITERATIONS,
    "burn_in": GIBBS_BURN_IN,
    "thin": GIBBS_THIN,
    "chains": GIBBS_CHAINS,
    "fix_variances": False,
}

COMMAND_DEFAULTS: dict[str, dict[str, Any]] = {
    "preprocess": {
        "inputs": [],
        "raw_format": RawFormat.TEXT.value,
        "rate": DEFAULT_SAMPLING_RATE,
        "window": DEFAULT_WINDOW_SECONDS,
        "band": "delta",
        "taper": False,
        "max_hours": None,
    },
    "fit": {
        "input": [],
        "t_range": None,
        "plots": False,
        **_SMOOTHING_DEFAULTS,
        **_SCORING_DEFAULTS,
    },
    "simulate": {
        "case": 1,
        "subjects": 200,
        "visits": 2,
        "points": SIM_GRID_SIZE,
        "sigma": 0.0,
        "reps": 10,
        "components": [4, 4],
        **_SMOOTHING_DEFAULTS,
        **_SCORING_DEFAULTS,
    },
    "bootstrap": {
        "fit_dir": None,
        "hypothesis": Hypothesis.H1.value,
        "n": 200,
        "level": 0.95,
    },
    "regress": {
        "fit_dir": None,
        "outcomes": None,
        "outcome_column": "outcome",
        "covariates": [],
        "categorical": [],
        "components": None,
        "standardize": False,
    },
}


class StageError(Exception):
    """A library or I/O error raised while a named stage of a command was running."""

    def __init__(self, stage: str, error: Exception) -> None:
        super().__init__(f"{stage}: {error}")
        self.stage = stage
        self.error = error

    @property
    def exit_code(self) -> int:
        return self.error.exit_code if isinstance(self.error, MfpcaError) else 1


@contextlib.contextmanager
def stage(name: str) -> Iterator[None]:
    _LOGGER.info("Stage %s", name)
    try:
        yield
    except (MfpcaError, OSError) as err:
        raise StageError(name, err) from err


def _t_range(text: str) -> tuple[float, float]:
    low, sep, high = text.partition(":")
    try:
        if not sep:
            raise ValueError(text)
        return float(low), float(high)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {text!r}") from None


def _global_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    group = parser.add_argument_group("global options")
    group.add_argument("--seed", type=int, help="random seed (default 0)")
    group.add_argument("--threads", type=int, help="worker threads (default 1)")
    group.add_argument("--out-dir", help="output directory (default .)")
    group.add_argument("--config", type=Path, help="flat JSON file of option defaults")
    group.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="logging level (default WARNING)",
    )
    group.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v info, -vv debug"
    )
    return parser


def _switch(group: argparse._ArgumentGroup, flag: str, text: str | None = None) -> None:
    group.add_argument(
        flag, action=argparse.BooleanOptionalAction, default=None, help=text
    )


def _add_smoothing(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("decomposition")
    _switch(group, "--smooth", "penalized spline smoothing of means and surfaces")
    _switch(group, "--presmooth", "smooth each curve before the moments")
    group.add_argument(
        "--p1",
        type=float,
        help=f"cumulative variance threshold (default {DEFAULT_P1})",
    )
    group.add_argument(
        "--p2", type=float, help="individual variance threshold (default 1/T)"
    )
    group.add_argument("--rule", choices=[rule.value for rule in SelectionRule])
    group.add_argument("--n1", type=int, help="fixed number of level 1 components")
    group.add_argument("--n2", type=int, help="fixed number of level 2 components")
    group.add_argument("--n-basis", type=int)
    group.add_argument("--surface-n-basis", type=int)
    group.add_argument("--penalty-order", type=int)
    group.add_argument("--lambda-rule", choices=[rule.value for rule in LambdaRule])
    group.add_argument("--lambda", dest="lambda_value", type=float)


def _add_scoring(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("scores")
    group.add_argument("--method", choices=[method.value for method in ScoreMethod])
    group.add_argument("--estimator", choices=[est.value for est in Estimator])
    group.add_argument("--variance-mode", choices=[mode.value for mode in VarianceMode])
    group.add_argument("--sigma2s", type=float, nargs=2, metavar=("S1", "S2"))
    group.add_argument("--iterations", type=int)
    group.add_argument("--burn-in", type=int)
    group.add_argument("--thin", type=int)
    group.add_argument("--chains", type=int)
    _switch(group, "--fix-variances", "keep the residual variances at their start")


def build_parser() -> argparse.ArgumentParser:
    common = _global_parser()
    parser = argparse.ArgumentParser(prog="mfpca", description=__doc__)
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    preprocess = commands.add_parser(
        "preprocess",
        parents=[common],
        help="normalized band power curves from raw signals",
    )
    preprocess.add_argument(
        "inputs",
        nargs="*",
        default=None,
        help="raw signal files as PATH or SUBJECT:VISIT=PATH",
    )
    preprocess.add_argument("--raw-format", choices=[fmt.value for fmt in RawFormat])
    preprocess.add_argument("--rate", type=float, help="sampling rate in Hz")
    preprocess.add_argument("--window", type=float, help="window length in seconds")
    preprocess.add_argument("--band", help="target band name")
    preprocess.add_argument(
        "--taper", action=argparse.BooleanOptionalAction, default=None
    )
    preprocess.add_argument("--max-hours", type=float)

    fit = commands.add_parser(
        "fit", parents=[common], help="two-level decomposition and scores"
    )
    fit.add_argument("--input", nargs="+", help="functional data CSV files")
    fit.add_argument("--t-range", type=_t_range, help="rescale t from lo:hi to [0, 1]")
    fit.add_argument("--plots", action=argparse.BooleanOptionalAction, default=None)
    _add_smoothing(fit)
    _add_scoring(fit)

    simulate = commands.add_parser(
        "simulate", parents=[common], help="score accuracy study"
    )
    simulate.add_argument("--case", type=int, choices=[1, 2])
    simulate.add_argument("--subjects", type=int)
    simulate.add_argument("--visits", type=int)
    simulate.add_argument("--points", type=int)
    simulate.add_argument("--sigma", type=float)
    simulate.add_argument("--reps", type=int)
    simulate.add_argument("--components", type=int, nargs=2, metavar=("N1", "N2"))
    _add_smoothing(simulate)
    _add_scoring(simulate)

    bootstrap = commands.add_parser(
        "bootstrap", parents=[common], help="rho_W interval"
    )
    bootstrap.add_argument("--fit-dir", help="output directory of a fit run")
    bootstrap.add_argument("--hypothesis", choices=[h.value for h in Hypothesis])
    bootstrap.add_argument("--n", type=int, help="bootstrap replicates")
    bootstrap.add_argument("--level", type=float, help="confidence level")

    regress = commands.add_parser(
        "regress", parents=[common], help="logistic regression on scores"
    )
    regress.add_argument("--fit-dir", help="output directory of a fit run")
    regress.add_argument(
        "--outcomes", help="CSV with subject_id, the outcome and covariates"
    )
    regress.add_argument("--outcome-column")
    regress.add_argument("--covariates", nargs="*")
    regress.add_argument("--categorical", nargs="*")
    regress.add_argument("--components", type=int, help="leading level 1 scores to use")
    regress.add_argument(
        "--standardize", action=argparse.BooleanOptionalAction, default=None
    )
    return parser


_NOT_OPTIONS = {"command", "config", "log_level", "verbose"}


def resolve_options(args: argparse.Namespace) -> dict[str, Any]:
    """Explicit flags over the --config file over built-in defaults."""
    options = {**GLOBAL_DEFAULTS, **COMMAND_DEFAULTS[args.command]}
    if args.config is not None:
        for key, value in read_json(args.config).items():
            name = key.replace("-", "_")
            if name not in options:
                _LOGGER.warning("Ignoring unknown config key %r", key)
                continue
            options[name] = value
    for name, value in vars(args).items():
        if name not in _NOT_OPTIONS and value not in (None, []):
            options[name] = value
    return options


def _pipeline(options: Mapping[str, Any]) -> PipelineConfig:
    return PipelineConfig(
        smooth=bool(options["smooth"]),
        smoother=SmootherConfig(
            n_basis=options["n_basis"],
            penalty_order=int(options["penalty_order"]),
            lambda_rule=LambdaRule(options["lambda_rule"]),
            lambda_value=options["lambda_value"],
            surface_n_basis=options["surface_n_basis"],
        ),
        p1=float(options["p1"]),
        p2=options["p2"],
        rule=SelectionRule(options["rule"]),
        n_components=(options["n1"], options["n2"]),
        presmooth=bool(options["presmooth"]),
    )


def _gibbs(options: Mapping[str, Any]) -> GibbsConfig:
    return GibbsConfig(
        iterations=int(options["iterations"]),
        burn_in=int(options["burn_in"]),
        thin=int(options["thin"]),
        chains=int(options["chains"]),
        fix_variances=bool(options["fix_variances"]),
        threads=int(options["threads"]),
    )


def _sigma2s(options: Mapping[str, Any]) -> tuple[float, float] | None:
    values = options["sigma2s"]
    return None if values is None else (float(values[0]), float(values[1]))


def _check_common(options: Mapping[str, Any]) -> None:
    if int(options["threads"]) < 1:
        raise InvalidArgument("--threads must be at least 1")


def _parse_input(item: str) -> tuple[str, str, Path]:
    label, sep, path = item.partition("=")
    if not sep:
        return Path(item).stem, "1", Path(item)
    subject, _, visit = label.partition(":")
    return subject, visit or "1", Path(path)


def cmd_preprocess(options: Mapping[str, Any]) -> list[Path]:
    with stage("config"):
        spec = BandSpec(
            window_seconds=float(options["window"]),
            sampling_rate=float(options["rate"]),
        )
        spec.band(options["band"])
        inputs = [_parse_input(item) for item in options["inputs"]]
        if not inputs:
            raise InvalidArgument("no raw signal files given")
    out_dir = Path(options["out_dir"])
    written: list[Path] = []
    reports = []
    for subject, visit, path in inputs:
        with stage(f"preprocess {path}"):
            signal = read_signal(path, RawFormat(options["raw_format"]))
            series = band_power(
                signal,
                spec,
                options["band"],
                taper=bool(options["taper"]),
                max_hours=options["max_hours"],
            )
            target = out_dir / f"{subject}_{visit}.csv"
            written.append(write_frame(target, series_frame(series, subject, visit)))
        labels = {"subject_id": subject, "visit_id": visit}
        files = {"input": str(path), "output": str(target)}
        reports.append(labels | files | series.report())
    windows = max(int(report["windows"]) for report in reports)
    hours = windows * spec.window_seconds / 3600
    with stage("report"):
        written.append(
            write_json(
                out_dir / "preprocess.json",
                {"t_range": [0.0, hours], "files": reports, "config": dict(options)},
            )
        )
    return written


def cmd_fit(options: Mapping[str, Any]) -> list[Path]:
    with stage("config"):
        cfg = _pipeline(options)
        gibbs = _gibbs(options)
        if not options["input"]:
            raise InvalidArgument("no input tables given")
    with stage("load"):
        sample = load_sample(options["input"], options["t_range"])
    with stage("decompose"):
        fit = fit_mfpca(sample, cfg)
    with stage("scores"):
        scores = estimate_scores(
            sample,
            fit,
            ScoreMethod(options["method"]),
            Estimator(options["estimator"]),
            variance_mode=VarianceMode(options["variance_mode"]),
            sigma2s=_sigma2s(options),
            gibbs=gibbs,
            seed=int(options["seed"]),
        )
    out_dir = Path(options["out_dir"])
    with stage("write"):
        written = write_fit(out_dir, fit, scores, options)
        if options["plots"]:
            written.extend(plot_fit(fit, out_dir))
    return written


def cmd_simulate(options: Mapping[str, Any]) -> list[Path]:
    with stage("config"):
        sim = SimConfig(
            case=int(options["case"]),
            n_subjects=int(options["subjects"]),
            n_visits=int(options["visits"]),
            n_points=int(options["points"]),
            sigma=float(options["sigma"]),
            seed=int(options["seed"]),
            n_components=tuple(int(count) for count in options["components"]),
        )
        cfg = _pipeline(options)
        gibbs = _gibbs(options)
    with stage("simulate"):
        study = simulate_study(
            sim,
            cfg,
            ScoreMethod(options["method"]),
            Estimator(options["estimator"]),
            int(options["reps"]),
            gibbs=gibbs,
            threads=int(options["threads"]),
        )
    out_dir = Path(options["out_dir"])
    eigenvalues = pd.DataFrame(
        np.column_stack([study.eigenvalues1, study.eigenvalues2, study.rho]),
        columns=[f"lambda1_{k + 1}" for k in range(study.eigenvalues1.shape[1])]
        + [f"lambda2_{k + 1}" for k in range(study.eigenvalues2.shape[1])]
        + ["rho_w"],
    )
    eigenvalues.insert(0, "replicate", np.arange(len(study.replicates)))
    pooled = study.pooled
    with stage("write"):
        return [
            write_frame(out_dir / "simulation_rmse.csv", study.frame()),
            write_frame(out_dir / "simulation_eigenvalues.csv", eigenvalues),
            write_json(
                out_dir / "simulation.json",
                {
                    "pooled_rmse": {"level1": pooled.level1, "level2": pooled.level2},
                    "simulation": sim.as_dict(),
                    "pipeline": cfg.as_dict(),
                    "config": dict(options),
                },
            ),
        ]


def _fit_dir(options: Mapping[str, Any]) -> Path:
    if not options["fit_dir"]:
        raise InvalidArgument("--fit-dir is required")
    return Path(options["fit_dir"])


def cmd_bootstrap(options: Mapping[str, Any]) -> list[Path]:
    with stage("config"):
        n_boot = int(options["n"])
        if n_boot < 1:
            raise InvalidArgument(f"--n must be at least 1, got {n_boot}")
        fit_dir = _fit_dir(options)
    with stage("load"):
        fit, _ = read_fit(fit_dir)
    with stage("bootstrap"):
        result = bootstrap_rho(
            fit,
            Hypothesis(options["hypothesis"]),
            n_boot,
            int(options["seed"]),
            threads=int(options["threads"]),
            level=float(options["level"]),
        )
    replicates = pd.DataFrame(
        {"replicate": np.arange(n_boot), "rho_w": result.replicates}
    )
    summary = result.as_dict() | {"config": dict(options)}
    out_dir = Path(options["out_dir"])
    with stage("write"):
        return [
            write_frame(out_dir / "bootstrap_replicates.csv", replicates),
            write_json(out_dir / "bootstrap.json", summary),
        ]


def _regression_spec(
    options: Mapping[str, Any], fit_dir: Path
) -> tuple[RegressionSpec, EigenSystem]:
    fit, scores = read_fit(fit_dir)
    if scores is None:
        raise InvalidArgument(f"{fit_dir} holds no scores")
    if not options["outcomes"]:
        raise InvalidArgument("--outcomes is required")
    table = pd.read_csv(options["outcomes"], dtype={"subject_id": str})
    column = options["outcome_column"]
    wanted = [column, *options["covariates"], *options["categorical"]]
    missing = [name for name in ["subject_id", *wanted] if name not in table.columns]
    if missing:
        raise InvalidArgument(f"{options['outcomes']} lacks columns {missing}")
    count = scores.n1 if options["components"] is None else int(options["components"])
    if not 1 <= count <= scores.n1:
        raise InvalidArgument(f"--components must be in 1..{scores.n1}")
    score_columns = [f"xi_{k + 1}" for k in range(count)]
    frame = pd.DataFrame(scores.xi[:, :count], columns=score_columns)
    frame.insert(0, "subject_id", list(fit.subject_ids))
    merged = frame.merge(table, on="subject_id", how="inner", validate="one_to_one")
    if len(merged) < len(frame):
        _LOGGER.warning("%d subjects have no outcome row", len(frame) - len(merged))
    covariates = [merged[options["covariates"]].to_numpy(dtype=float)]
    names = list(options["covariates"])
    for name in options["categorical"]:
        indicators, labels = encode_categorical(merged[name].astype(str), name)
        covariates.append(indicators)
        names.extend(labels)
    spec = RegressionSpec(
        outcome=merged[column].to_numpy(dtype=float),
        scores=merged[score_columns].to_numpy(dtype=float),
        covariates=np.column_stack(covariates) if names else None,
        score_names=tuple(score_columns),
        covariate_names=tuple(names),
        standardize=bool(options["standardize"]),
    )
    return spec, fit.level1.with_selection(count)


def cmd_regress(options: Mapping[str, Any]) -> list[Path]:
    with stage("load"):
        spec, level1 = _regression_spec(options, _fit_dir(options))
    with stage("regress"):
        result = fit_logistic(spec)
        beta = result.beta_curve(level1)
    curve = pd.DataFrame({"t": beta.grid.points, "beta": beta.values})
    out_dir = Path(options["out_dir"])
    with stage("write"):
        return [
            write_frame(out_dir / "regression.csv", result.frame()),
            write_frame(out_dir / "regression_table.csv", result.table()),
            write_frame(out_dir / "beta_curve.csv", curve),
            write_json(
                out_dir / "regression.json",
                {
                    "converged": result.converged,
                    "iterations": result.iterations,
                    "log_likelihood": result.log_likelihood,
                    "n": spec.n_rows,
                    "config": dict(options),
                },
            ),
        ]


COMMANDS: dict[str, Callable[[Mapping[str, Any]], list[Path]]] = {
    "preprocess": cmd_preprocess,
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "bootstrap": cmd_bootstrap,
    "regress": cmd_regress,
}


def _log_level(args: argparse.Namespace) -> int:
    if args.log_level:
        return int(getattr(logging, args.log_level))
    return {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=_log_level(args), format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )
    try:
        with stage("config"):
            options = resolve_options(args)
            _check_common(options)
        written = COMMANDS[args.command](options)
    except StageError as err:
        _LOGGER.error("%s failed", args.command)
        print(f"mfpca {args.command}: {err}", file=sys.stderr)
        return err.exit_code
    for path in written:
        _LOGGER.info("Wrote %s", path)
    return 0


__all__ = ["build_parser", "main", "resolve_options", "stage", "StageError"]
