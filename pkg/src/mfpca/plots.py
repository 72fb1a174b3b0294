"""SVG line charts of fitted means and eigenfunctions."""
from __future__ import annotations

import io
import logging
from pathlib import Path

from matplotlib.figure import Figure

from .eigen import EigenSystem, MfpcaFit, perturbation_curves
from .fd import Curve
from .moments import MeanEstimate
from .results import write_text

_LOGGER = logging.getLogger(__name__)


def _save(figure: Figure, path: Path) -> Path:
    buffer = io.StringIO()
    figure.savefig(buffer, format="svg")
    return write_text(path, buffer.getvalue())


def plot_means(
    means: MeanEstimate, path: Path, visit_ids: tuple[str, ...] = ()
) -> Path:
    figure = Figure(figsize=(6, 4))
    axes = figure.add_subplot()
    t = means.grid.points
    axes.plot(t, means.mu.values, color="black", label="overall")
    for index in range(means.n_visits):
        label = visit_ids[index] if index < len(visit_ids) else str(index + 1)
        axes.plot(t, means.visit_mean(index), linestyle="--", label=f"visit {label}")
    axes.set_xlabel("t")
    axes.legend()
    return _save(figure, path)


def plot_eigenfunctions(system: EigenSystem, path: Path) -> Path:
    figure = Figure(figsize=(6, 4))
    axes = figure.add_subplot()
    for index in range(system.n_selected):
        axes.plot(
            system.grid.points,
            system.functions[index],
            label=f"phi {index + 1} ({100 * system.proportions[index]:.1f}%)",
        )
    axes.axhline(0.0, color="grey", linewidth=0.5)
    axes.set_title(f"Level {system.level} eigenfunctions")
    axes.set_xlabel("t")
    if system.n_selected:
        axes.legend()
    return _save(figure, path)


def plot_perturbations(
    mean: Curve, system: EigenSystem, path: Path, multiple: float = 2.0
) -> Path:
    """One panel per retained component: mean and mean -/+ multiple sqrt(lambda) phi."""
    count = max(system.n_selected, 1)
    figure = Figure(figsize=(4 * count, 3.5))
    for index in range(system.n_selected):
        axes = figure.add_subplot(1, count, index + 1)
        lower, upper = perturbation_curves(mean, system, index, multiple)
        t = mean.grid.points
        axes.plot(t, mean.values, color="black")
        axes.plot(t, lower.values, color="tab:blue", linestyle="--", label="-")
        axes.plot(t, upper.values, color="tab:red", linestyle=":", label="+")
        axes.set_title(f"Level {system.level}, component {index + 1}")
        axes.set_xlabel("t")
    return _save(figure, path)


def plot_fit(fit: MfpcaFit, out_dir: Path, multiple: float = 2.0) -> list[Path]:
    """Every chart of a fit as SVG files in out_dir."""
    out_dir = Path(out_dir)
    written = [plot_means(fit.means, out_dir / "means.svg", fit.visit_ids)]
    for system in (fit.level1, fit.level2):
        level = system.level
        path = out_dir / f"eigenfunctions_level{level}.svg"
        written.append(plot_eigenfunctions(system, path))
        path = out_dir / f"perturbations_level{level}.svg"
        written.append(plot_perturbations(fit.means.mu, system, path, multiple))
    _LOGGER.debug("Wrote %d plots to %s", len(written), out_dir)
    return written
