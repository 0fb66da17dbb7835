"""Reparametrization-invariant curve functionals used for law comparisons.

Two evaluation routes share one grid:

* from a traced curve (:func:`evaluate`), polyline geometry;
* from flowed probe points of a sampled ensemble (:func:`flow_observables`),
  which needs no curve tracing: left passage is read off the side of W_T on
  which g_T(z) sits, the conformal radius of the complement at z is
  2 Im g_T(z) / |g_T'(z)|, and an interval (a, b) is touched when its inner
  end is swallowed strictly before its outer end.

A curve's image under J(z) = -1/z, walked backwards, is handled by
evaluating the forward curve at J of every probe.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .loewner import CurveTrace
from .params import LEFT, RIGHT, SleParams
from .sampler import EnsembleResult


def default_reference_points() -> tuple[complex, ...]:
    return tuple(
        complex(r * math.cos(th), r * math.sin(th))
        for th in (math.pi / 4, math.pi / 2, 3 * math.pi / 4)
        for r in (0.5, 1.0, 2.0)
    )


BASE_INTERVALS = ((0.5, 1.0), (1.0, 2.0), (-1.0, -0.5), (-2.0, -1.0))


def force_point_intervals(p: SleParams) -> list[tuple[float, float]]:
    """Intervals between consecutive force points, plus one on each outer flank."""
    out = []
    for q in (LEFT, RIGHT):
        pts = [float(x) for x in p.points(q)]
        if not pts:
            continue
        out.append(tuple(sorted((pts[0] / 2, pts[0]))))
        for a, b in zip(pts, pts[1:]):
            out.append(tuple(sorted((a, b))))
        out.append(tuple(sorted((pts[-1], 2 * pts[-1]))))
    return out


@dataclass(frozen=True)
class ObservableGrid:
    reference_points: tuple[complex, ...] = field(default_factory=default_reference_points)
    reach_height: float = 1.0
    marked_points: tuple[complex, ...] = (1 + 0j, -1 + 0j)
    intervals: tuple[tuple[float, float], ...] = BASE_INTERVALS

    def __post_init__(self) -> None:
        for a, b in self.intervals:
            if not (0 < a < b or a < b < 0):
                raise ValueError(f"interval ({a}, {b}) must lie on one side of 0")
        for z in self.reference_points:
            if not z.imag > 0:
                raise ValueError("reference points must lie in the open upper half-plane")

    @classmethod
    def for_params(cls, p: SleParams, **kwargs) -> "ObservableGrid":
        seen, ivs = set(), []
        for iv in list(BASE_INTERVALS) + force_point_intervals(p):
            if iv not in seen:
                seen.add(iv)
                ivs.append(iv)
        return cls(intervals=tuple(ivs), **kwargs)

    def j_image(self) -> "ObservableGrid":
        """The same grid pulled back through J (J is an involution)."""
        return ObservableGrid(
            tuple(-1 / z for z in self.reference_points),
            self.reach_height,
            tuple(-1 / z if z != 0 else z for z in self.marked_points),
            tuple(tuple(sorted((-1 / a, -1 / b))) for a, b in self.intervals),
        )

    def flow_names(self) -> list[str]:
        names = [f"left_{_zlabel(z)}" for z in self.reference_points]
        names += [f"logcr_{_zlabel(z)}" for z in self.reference_points]
        names += [f"touch_{a:g}_{b:g}" for a, b in self.intervals]
        return names


def _zlabel(z: complex) -> str:
    return f"{z.real:+.3f}{z.imag:+.3f}i"


@dataclass(frozen=True)
class ObservableVector:
    left_passage: np.ndarray
    first_reach_re: float
    min_dist: np.ndarray
    touched_intervals: np.ndarray
    hit_tolerance: float = 0.0

    @property
    def reached(self) -> bool:
        return not math.isnan(self.first_reach_re)

    def as_row(self) -> np.ndarray:
        return np.concatenate(
            (
                self.left_passage.astype(float),
                [self.first_reach_re],
                self.min_dist,
                self.touched_intervals.astype(float),
            )
        )


def vector_names(grid: ObservableGrid) -> list[str]:
    return (
        [f"left_{_zlabel(z)}" for z in grid.reference_points]
        + ["first_reach_re"]
        + [f"dist_{_zlabel(z)}" for z in grid.marked_points]
        + [f"touch_{a:g}_{b:g}" for a, b in grid.intervals]
    )


def _closed_polyline(pts: np.ndarray) -> np.ndarray:
    """Curve completed by a vertical ray from the tip, cut off far above everything."""
    top = max(float(np.max(pts.imag)), 1.0) * 1e6
    return np.append(pts, pts[-1].real + 1j * top)


def passes_left(pts: np.ndarray, z: complex) -> bool:
    """True when the curve (completed upward from its tip) leaves z on its right.

    Counts crossings of the horizontal ray from z toward +infinity: an odd
    count puts z on the left of the curve.
    """
    poly = _closed_polyline(pts)
    a, b = poly[:-1], poly[1:]
    ya, yb = a.imag - z.imag, b.imag - z.imag
    straddle = (ya > 0) != (yb > 0)
    if not np.any(straddle):
        return True
    a, b, ya, yb = a[straddle], b[straddle], ya[straddle], yb[straddle]
    xc = a.real + (b.real - a.real) * (ya / (ya - yb))
    crossings = int(np.count_nonzero(xc > z.real))
    return crossings % 2 == 0


def first_reach_re(pts: np.ndarray, height: float) -> float:
    """Re of the curve where it first reaches Im = height (linear interpolation), NaN if never."""
    above = np.flatnonzero(pts.imag >= height)
    if above.size == 0:
        return math.nan
    k = int(above[0])
    if k == 0:
        return float(pts[0].real)
    a, b = pts[k - 1], pts[k]
    s = (height - a.imag) / (b.imag - a.imag)
    return float(a.real + s * (b.real - a.real))


def min_distance(pts: np.ndarray, z: complex) -> float:
    """Distance from z to the polyline through ``pts``."""
    if pts.size == 1:
        return float(abs(pts[0] - z))
    a, b = pts[:-1], pts[1:]
    d = b - a
    L2 = np.abs(d) ** 2
    s = np.where(L2 > 0, ((z - a) * np.conj(d)).real / np.where(L2 > 0, L2, 1), 0.0)
    s = np.clip(s, 0.0, 1.0)
    return float(np.min(np.abs(a + s * d - z)))


def hit_tolerance(trace: CurveTrace) -> float:
    """Twice the largest step between consecutive points close to the real axis."""
    pts = trace.points
    if pts.size < 2:
        return 0.0
    steps = np.abs(np.diff(pts))
    low = np.minimum(pts[:-1].imag, pts[1:].imag) <= 2 * steps.max()
    return 2.0 * float(steps[low].max() if np.any(low) else steps.max())


def interval_hit(trace: CurveTrace, a: float, b: float, tol: float | None = None) -> bool:
    """Does the curve come within the hit tolerance of the real interval (a, b)?"""
    if not (0 < a < b or a < b < 0):
        raise ValueError("interval must lie on one side of 0")
    if tol is None:
        tol = hit_tolerance(trace)
    pts = trace.points[1:]
    if pts.size == 0:
        return False
    x = np.clip(pts.real, a, b)
    d = np.hypot(pts.real - x, pts.imag)
    return bool(np.any(d <= tol))


def evaluate(trace: CurveTrace, grid: ObservableGrid) -> ObservableVector:
    if len(trace) == 0:
        raise ValueError("empty trace")
    pts = trace.points
    tol = hit_tolerance(trace)
    return ObservableVector(
        np.array([passes_left(pts, z) for z in grid.reference_points]),
        first_reach_re(pts, grid.reach_height),
        np.array([min_distance(pts, z) for z in grid.marked_points]),
        np.array([interval_hit(trace, a, b, tol) for a, b in grid.intervals]),
        tol,
    )


@dataclass(frozen=True)
class FlowProbes:
    """Probe points to flow with the sampler for a grid, possibly through J."""

    grid: ObservableGrid
    through_j: bool = False

    @property
    def complex_points(self) -> np.ndarray:
        zs = np.array(self.grid.reference_points, dtype=complex)
        return -1.0 / zs if self.through_j else zs

    @property
    def real_points(self) -> np.ndarray:
        ends = np.array([e for iv in self.grid.intervals for e in iv], dtype=float)
        return -1.0 / ends if self.through_j else ends


def flow_observables(res: EnsembleResult, probes: FlowProbes, checkpoint: int = -1) -> np.ndarray:
    """Observable matrix (samples x columns in ``grid.flow_names()`` order).

    With ``probes.through_j`` the ensemble is read as the J-image of the
    sampled curves walked backwards: left and right swap, conformal radii
    pick up |J'|, and every interval is tested through its J-preimage.
    """
    W = res.W[:, checkpoint][:, None]
    g = res.Z[:, checkpoint, :]
    logd = res.logdZ[:, checkpoint, :]
    zs = probes.complex_points
    if zs.size and not np.allclose(res.probes_complex[: zs.size], zs):
        raise ValueError("ensemble was not run with these complex probes")
    left_fwd = np.angle(g - W) < math.pi / 2
    with np.errstate(divide="ignore", invalid="ignore"):
        logcr = math.log(2.0) + np.log(g.imag) - logd
    # Im g and g' both underflow when the curve passes within rounding of z
    logcr = np.where(g.imag > 0, logcr, -np.inf)
    if probes.through_j:
        left = ~left_fwd
        # CR of the J-image at z = -1/w equals CR(w) / |w|^2
        logcr = logcr - 2.0 * np.log(np.abs(zs))[None, :]
    else:
        left = left_fwd
    T = res.checkpoints[checkpoint]
    sw = res.probe_swallow
    touched = []
    for k in range(len(probes.grid.intervals)):
        e0, e1 = sw[:, 2 * k], sw[:, 2 * k + 1]
        x0, x1 = probes.real_points[2 * k], probes.real_points[2 * k + 1]
        # the endpoint nearer to the origin is reached first by any hit
        near, far = (e0, e1) if abs(x0) < abs(x1) else (e1, e0)
        touched.append((near <= T) & (near < far))
    cols = [left.astype(float), logcr]
    if touched:
        cols.append(np.column_stack(touched).astype(float))
    return np.column_stack(cols) if cols else np.zeros((res.n, 0))


def write_observable_csv(
    path: str | Path,
    names: Sequence[str],
    matrix: np.ndarray,
    log_weights: np.ndarray | None = None,
    sample_ids: Sequence[int] | None = None,
    header: dict[str, str] | None = None,
) -> None:
    ids = range(matrix.shape[0]) if sample_ids is None else sample_ids
    with open(path, "w", newline="") as fh:
        for key, val in (header or {}).items():
            fh.write(f"# {key}={val}\n")
        writer = csv.writer(fh)
        writer.writerow(["sample_id"] + list(names) + (["log_weight"] if log_weights is not None else []))
        for r, sid in enumerate(ids):
            row = [int(sid)] + [repr(float(v)) for v in matrix[r]]
            if log_weights is not None:
                row.append(repr(float(log_weights[r])))
            writer.writerow(row)
