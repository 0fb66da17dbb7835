"""Curve transforms and the normalized conformal maps behind the weight factors.

For a force point x that the curve has not swallowed, the component of
H minus the curve containing x is the unbounded one on x's side.  Its
normalized map is

    psi(z) = sign * (g_T(z) - g_T(sigma)) / (g_T(x) - g_T(sigma)),

which sends (sigma, x, infinity) to (0, +-1, infinity); g_T(sigma) is the
image of the prime end 0+ (or 0-), carried along the hull boundary.  The
weight factor is |x * psi'(x)| = |x| g_T'(x) / |g_T(x) - g_T(sigma)|.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Protocol

import numpy as np

from .loewner import CurveTrace, LoewnerChain, forward_map_real, hull_swallow_time
from .params import RIGHT, SleParams

TRUNCATION_RTOL = 1e-3
MAX_DOUBLINGS = 6


class UnsupportedGeometry(RuntimeError):
    """The component containing a force point is outside the supported topology."""


def apply_j(trace: CurveTrace) -> CurveTrace:
    """Pointwise z -> -1/z.  A sample at the origin (mapped to infinity) is dropped."""
    pts = trace.points
    keep = pts != 0
    return CurveTrace(-1.0 / pts[keep], trace.times[keep])


@dataclass(frozen=True)
class ReversedCurve:
    """J applied to a trace walked backwards; timestamps are dropped."""

    points: np.ndarray
    source: CurveTrace

    def as_trace(self) -> CurveTrace:
        return CurveTrace(self.points)


def reverse_curve(trace: CurveTrace) -> ReversedCurve:
    pts = trace.points[::-1]
    pts = pts[pts != 0]
    return ReversedCurve(-1.0 / pts, trace)


@dataclass(frozen=True)
class ComponentRecord:
    side: str
    index: int
    x: float
    sigma: float
    xi: float
    derivative_factor: float
    truncation_error_estimate: float
    capacity: float

    def csv_row(self, sample_id: int) -> list:
        return [sample_id, self.side, self.index, repr(self.derivative_factor), repr(self.truncation_error_estimate)]


COMPONENT_CSV_HEADER = ["sample_id", "side", "index", "factor", "trunc_err"]


def write_component_csv(path: str | Path, rows: Iterable[tuple[int, ComponentRecord]], header: dict[str, str] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        for key, val in (header or {}).items():
            fh.write(f"# {key}={val}\n")
        writer = csv.writer(fh)
        writer.writerow(COMPONENT_CSV_HEADER)
        for sample_id, rec in rows:
            writer.writerow(rec.csv_row(sample_id))


def weight_factor_from_images(x: float, gx: float, dgx: float, g_sigma: float) -> float:
    """|x psi'(x)| from the flowed force point, its derivative and the prime-end image."""
    return abs(x) * dgx / abs(gx - g_sigma)


def _factor_at(chain: LoewnerChain, x: float, sign: int, t: float) -> float:
    gx, dgx = forward_map_real(chain, x, t)
    g_sigma, _ = forward_map_real(chain, 0.0, t, side=sign, prime_end=True)
    return weight_factor_from_images(x, gx, dgx, g_sigma)


def _touch_extent(trace: CurveTrace | None, sign: int, x: float, chain: LoewnerChain) -> float:
    """Outermost real point between 0 and x that the hull has reached (0 if none)."""
    if trace is None or len(trace) == 0:
        return 0.0
    tol = 2.0 * math.sqrt(float(np.max(chain.dt))) if len(chain) else 0.0
    pts = trace.points
    near = pts[(pts.imag <= tol) & (sign * pts.real > 0) & (sign * pts.real < sign * x)]
    if near.size == 0:
        return 0.0
    return float(near.real[np.argmax(sign * near.real)])


def _check_unswallowed(chain: LoewnerChain, x: float, sign: int, T: float, label: str) -> None:
    tau = hull_swallow_time(chain.truncated(T), x, side=sign)
    if tau is not None:
        raise UnsupportedGeometry(
            f"force point {label} = {x:g} is swallowed at capacity {tau:.6g}; "
            "components cut off from infinity are not supported"
        )


def component_weight_factor(
    chain: LoewnerChain,
    trace: CurveTrace | None,
    p: SleParams,
    i: int,
    q: str,
    T: float | None = None,
) -> ComponentRecord:
    """Base factor |x psi'(x)| for force point x^{i,q}, with the curve truncated at capacity T.

    The error estimate is |factor(2T) - factor(T)| when the chain reaches
    2T, else |factor(T) - factor(T/2)|.
    """
    if i < 1:
        raise ValueError("degenerate points carry no weight factor")
    x = float(p.points(q)[i - 1])
    sign = 1 if q == RIGHT else -1
    label = f"x^{{{i},{q}}}"
    T = chain.total_capacity if T is None else float(T)
    if T <= 0 or len(chain) == 0:
        return ComponentRecord(q, i, x, 0.0, math.inf, 1.0, 0.0, 0.0)
    _check_unswallowed(chain, x, sign, T, label)
    value = _factor_at(chain, x, sign, T)
    if 2 * T <= chain.total_capacity * (1 + 1e-12) and hull_swallow_time(chain.truncated(2 * T), x, sign) is None:
        err = abs(_factor_at(chain, x, sign, 2 * T) - value)
    else:
        err = abs(value - _factor_at(chain, x, sign, T / 2))
    sigma = _touch_extent(trace, sign, x, chain)
    return ComponentRecord(q, i, x, sigma, math.inf, value, err, T)


def converged_weight_factor(chain: LoewnerChain, p: SleParams, i: int, q: str, T: float) -> ComponentRecord:
    """Double the truncation capacity from T until the factor moves by less than
    ``TRUNCATION_RTOL`` relative (or the chain or ``MAX_DOUBLINGS`` runs out).

    The record carries the last value and the last doubling's change.
    """
    rec = component_weight_factor(chain, None, p, i, q, T)
    sign = 1 if q == RIGHT else -1
    t, value, err = T, rec.derivative_factor, rec.truncation_error_estimate
    for _ in range(MAX_DOUBLINGS):
        if 2 * t > chain.total_capacity * (1 + 1e-12):
            break
        try:
            _check_unswallowed(chain, rec.x, sign, 2 * t, f"x^{{{i},{q}}}")
        except UnsupportedGeometry:
            break
        nxt = _factor_at(chain, rec.x, sign, 2 * t)
        err = abs(nxt - value)
        value, t = nxt, 2 * t
        if err < TRUNCATION_RTOL * abs(value):
            break
    return ComponentRecord(q, i, rec.x, rec.sigma, math.inf, value, err, t)


def factor_sequence(chain: LoewnerChain, x: float, side: str, capacities: Iterable[float]) -> np.ndarray:
    """Weight factors of the point x at several truncation capacities."""
    sign = 1 if side == RIGHT else -1
    return np.array([_factor_at(chain, x, sign, t) for t in capacities])


class ConformalMapData(Protocol):
    marked: float

    def value(self, z: float) -> float: ...

    def derivative(self, z: float) -> float: ...


@dataclass(frozen=True)
class ClosedFormMap:
    """A boundary map given by formulas, with the point it sends to +-1."""

    f: Callable[[float], float]
    df: Callable[[float], float]
    marked: float

    def value(self, z: float) -> float:
        return self.f(z)

    def derivative(self, z: float) -> float:
        return self.df(z)


@dataclass(frozen=True)
class NormalizedMap:
    """psi for the unbounded component after a chain, normalized at ``marked``.

    ``origin`` is the real point whose prime end (on ``side``) plays the role
    of sigma; for a curve started at the origin it is 0.
    """

    chain: LoewnerChain
    marked: float
    side: str = RIGHT
    origin: float = 0.0

    @property
    def sign(self) -> int:
        return 1 if self.side == RIGHT else -1

    def _sigma_image(self) -> float:
        return forward_map_real(self.chain, self.origin, side=self.sign, prime_end=True)[0]

    def value(self, z: float) -> float:
        a = self._sigma_image()
        b = forward_map_real(self.chain, self.marked, side=self.sign)[0]
        g = forward_map_real(self.chain, z, side=self.sign)[0]
        return self.sign * (g - a) / (b - a)

    def derivative(self, z: float) -> float:
        a = self._sigma_image()
        b = forward_map_real(self.chain, self.marked, side=self.sign)[0]
        dg = forward_map_real(self.chain, z, side=self.sign)[1]
        return self.sign * dg / (b - a)


def chain_rule_check(outer: ConformalMapData, inner: ConformalMapData, x: float, composite: ConformalMapData) -> float:
    """Relative gap between composite'(x) and outer'(inner(x)) * inner'(x).

    ``outer`` must be normalized at the image of ``inner``'s marked point.
    """
    y = inner.value(inner.marked)
    if not math.isclose(outer.marked, y, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"incompatible nesting: outer is marked at {outer.marked!r}, inner sends its point to {y!r}")
    direct = composite.derivative(x)
    product = outer.derivative(inner.value(x)) * inner.derivative(x)
    return abs(direct - product) / abs(direct)


def nested_hull_residual(first: LoewnerChain, second: LoewnerChain, points: tuple[float, ...], i: int, side: str = RIGHT) -> float:
    """Chain-rule residual for a curve grown in two pieces.

    ``first`` grows the initial piece, ``second`` continues from its end
    (as a chain in the original mapped-out coordinates).  With j the
    innermost force point and y = psi_first^j(x^i), compares

        (psi_full^i)'(x^i)  against  (psi_second|first)'(y) * |y| * (psi_first^i)'(x^i).

    The continuation map is built on the second chain conjugated by the
    affine normalization of the first map, independently of the full chain.
    """
    sign = 1 if side == RIGHT else -1
    xi, xj = points[i - 1], points[0]
    full = first.concat(second)
    inner_j = NormalizedMap(first, xj, side)
    inner_i = NormalizedMap(first, xi, side)
    a1 = inner_j._sigma_image()
    b1 = forward_map_real(first, xj, side=sign)[0]
    scale = 1.0 / abs(b1 - a1)
    shift = -a1 * scale
    # psi_first^j = scale * (g_first - a1) on both sides, an affine image of g_first
    moved = second.affine(scale, shift)
    y = inner_j.value(xi)
    outer = NormalizedMap(moved, y, side, origin=0.0)
    direct = NormalizedMap(full, xi, side).derivative(xi)
    product = outer.derivative(y) * abs(y) * inner_i.derivative(xi)
    return abs(direct - product) / abs(direct)
