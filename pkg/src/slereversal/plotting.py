"""Static SVG diagnostics: sampled curves, their reversed J-images, and weight histograms."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .loewner import CurveTrace  # noqa: E402
from .params import LEFT, RIGHT, SleParams  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "lines.linewidth": 0.8,
    "svg.fonttype": "none",
}


def _mark_force_points(ax, p: SleParams, color: str) -> None:
    xs = [float(x) for q in (LEFT, RIGHT) for x in p.points(q)]
    if xs:
        ax.plot(xs, np.zeros(len(xs)), "o", ms=4, color=color, mfc="white", zorder=5)
    ax.plot([0.0], [0.0], "o", ms=3, color=color, zorder=5)


def _draw(ax, traces: Sequence[np.ndarray], color: str, label: str) -> None:
    for k, pts in enumerate(traces):
        ax.plot(pts.real, pts.imag, color=color, alpha=0.6, label=label if k == 0 else None)


def _window(ax, extent: float) -> None:
    ax.set_xlim(-extent, extent)
    ax.set_ylim(0, extent)
    ax.axhline(0, color="0.3", lw=0.6)
    ax.set_aspect("equal")
    ax.set_xlabel("Re z")
    ax.set_ylabel("Im z")


def save_svg(fig, path: str | Path, digest: str = "") -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Description": f"config_digest={digest}"})
    plt.close(fig)
    return path


def plot_curves(
    path: str | Path,
    forward: Sequence[CurveTrace],
    reversed_images: Sequence[np.ndarray],
    hatted: Sequence[CurveTrace],
    p: SleParams,
    p_hat: SleParams,
    extent: float = 3.0,
    digest: str = "",
) -> Path:
    """Left panel: forward curves. Right panel: J-images of them walked backwards against hatted curves."""
    with plt.rc_context(STYLE):
        fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(8.0, 3.6))
        _draw(ax0, [t.points for t in forward], "C0", "forward")
        _mark_force_points(ax0, p, "C0")
        _window(ax0, extent)
        ax0.set_title("sampled curves")
        _draw(ax1, list(reversed_images), "C0", "reversed J-image")
        _draw(ax1, [t.points for t in hatted], "C3", "hatted")
        _mark_force_points(ax1, p_hat, "C3")
        _window(ax1, extent)
        ax1.set_title("reversal vs hatted process")
        ax1.legend(loc="upper right", frameon=False)
        fig.tight_layout()
        return save_svg(fig, path, digest)


def plot_log_weights(path: str | Path, log_weights: np.ndarray, ess_value: float, digest: str = "") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 3.0))
        ax.hist(log_weights, bins=50, color="C3", alpha=0.8)
        ax.set_xlabel("log-weight")
        ax.set_ylabel("count")
        ax.set_title(f"ESS = {ess_value:.0f} of {log_weights.size}")
        fig.tight_layout()
        return save_svg(fig, path, digest)
