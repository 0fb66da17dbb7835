"""Deterministic Loewner machinery on piecewise-constant driving functions.

A :class:`LoewnerChain` is a list of steps ``(dt_k, W_k)``; over step k the
driving value is frozen at ``W_k`` and the mapping-out function advances by
the exact vertical-slit map of capacity ``dt_k``.  Composition of these maps
gives g_t; pulling the last slit tip back through the inverse maps in reverse
order gives the curve.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels as K

COLLIDE_C = 2.0


class SwallowedPointError(ValueError):
    """The queried point entered the hull before the requested time."""

    def __init__(self, point, time: float):
        self.point = point
        self.time = time
        super().__init__(f"point {point!r} is swallowed at capacity {time:.6g}")


class BranchError(ArithmeticError):
    def __init__(self, step: int, value: complex):
        self.step = step
        self.value = value
        super().__init__(f"inverse slit map left the closed upper half-plane at step {step}: {value!r}")


@dataclass(frozen=True)
class LoewnerChain:
    """Capacity increments and the driving value held over each of them.

    ``w_final`` is the driving value right after the last step; it defaults
    to the last frozen value.
    """

    dt: np.ndarray
    w: np.ndarray
    w_final: float | None = None

    def __post_init__(self) -> None:
        dt = np.ascontiguousarray(self.dt, dtype=float).reshape(-1)
        w = np.ascontiguousarray(self.w, dtype=float).reshape(-1)
        if dt.shape != w.shape:
            raise ValueError("dt and w must have equal length")
        if dt.size and not np.all(dt > 0):
            raise ValueError("capacity increments must be positive")
        object.__setattr__(self, "dt", dt)
        object.__setattr__(self, "w", w)
        if self.w_final is None:
            object.__setattr__(self, "w_final", float(w[-1]) if w.size else 0.0)
        object.__setattr__(self, "_times", np.concatenate(([0.0], np.cumsum(dt))))

    @classmethod
    def constant(cls, value: float, total: float, nsteps: int) -> "LoewnerChain":
        return cls(np.full(nsteps, total / nsteps), np.full(nsteps, float(value)))

    @classmethod
    def from_driving(cls, times: Sequence[float], w: Sequence[float]) -> "LoewnerChain":
        times = np.asarray(times, dtype=float)
        w = np.asarray(w, dtype=float)
        return cls(np.diff(times), w[:-1], float(w[-1]) if w.size else 0.0)

    def __len__(self) -> int:
        return self.dt.size

    @property
    def times(self) -> np.ndarray:
        """Step boundary times 0 = t_0 < t_1 < ... < t_n."""
        return self._times

    @property
    def total_capacity(self) -> float:
        return float(self._times[-1])

    @property
    def w_after(self) -> np.ndarray:
        """Driving value right after each step."""
        return np.append(self.w[1:], self.w_final)

    def driving_at(self, t: float) -> float:
        if t >= self.total_capacity:
            return float(self.w_final)
        k = int(np.searchsorted(self._times, t, side="right")) - 1
        return float(self.w[max(k, 0)])

    def split(self, t: float) -> tuple[int, float]:
        """(number of whole steps before t, leftover capacity in the next step)."""
        if t < 0:
            raise ValueError("capacity time must be nonnegative")
        total = self.total_capacity
        if t > total * (1 + 1e-12) + 1e-300:
            raise ValueError(f"t={t} exceeds the chain capacity {total}")
        n = int(np.searchsorted(self._times, t, side="right")) - 1
        n = min(max(n, 0), len(self))
        rest = t - self._times[n]
        if n == len(self) or rest <= 1e-14 * max(1.0, t):
            rest = 0.0
        return n, rest

    def truncated(self, t: float) -> "LoewnerChain":
        n, rest = self.split(t)
        dt = self.dt[:n]
        w = self.w[:n]
        if rest > 0:
            dt = np.append(dt, rest)
            w = np.append(w, self.w[n])
            return LoewnerChain(dt, w, float(self.w[n]))
        w_final = float(self.w[n]) if n < len(self) else float(self.w_final)
        return LoewnerChain(dt, w, w_final)

    def concat(self, other: "LoewnerChain") -> "LoewnerChain":
        return LoewnerChain(np.concatenate((self.dt, other.dt)), np.concatenate((self.w, other.w)), other.w_final)

    def affine(self, scale: float, shift: float = 0.0) -> "LoewnerChain":
        """Chain of z -> scale * z + shift: capacities scale by scale**2."""
        return LoewnerChain(self.dt * scale**2, self.w * scale + shift, self.w_final * scale + shift)

    def coarsened(self, boundaries: np.ndarray) -> "LoewnerChain":
        """Merge steps between the given step indices into single slits.

        The merged driving value is the capacity-weighted mean, which keeps
        the 1/z and 1/z^2 coefficients of the composite map at infinity.
        """
        b = np.unique(np.concatenate(([0], np.asarray(boundaries, dtype=int), [len(self)])))
        cs = np.concatenate(([0.0], np.cumsum(self.dt)))
        cw = np.concatenate(([0.0], np.cumsum(self.dt * self.w)))
        dt = cs[b[1:]] - cs[b[:-1]]
        w = (cw[b[1:]] - cw[b[:-1]]) / dt
        return LoewnerChain(dt, w, self.w_final)

    def to_csv(self, path: str | Path, header: dict[str, str] | None = None) -> None:
        with open(path, "w", newline="") as fh:
            for key, val in (header or {}).items():
                fh.write(f"# {key}={val}\n")
            writer = csv.writer(fh)
            writer.writerow(["dt", "w"])
            for a, b in zip(self.dt, self.w):
                writer.writerow([repr(float(a)), repr(float(b))])

    @classmethod
    def from_csv(cls, path: str | Path) -> "LoewnerChain":
        rows = _read_csv_rows(path)
        return cls([float(r["dt"]) for r in rows], [float(r["w"]) for r in rows])


@dataclass(frozen=True)
class CurveTrace:
    """Curve points with their capacity timestamps (strictly increasing)."""

    points: np.ndarray
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=complex).reshape(-1)
        times = np.asarray(self.times, dtype=float).reshape(-1)
        if times.size == 0:
            times = np.arange(pts.size, dtype=float)
        if times.size != pts.size:
            raise ValueError("points and times must have equal length")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("trace times must be strictly increasing")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "times", times)

    def __len__(self) -> int:
        return self.points.size

    def scaled(self, a: float) -> "CurveTrace":
        return CurveTrace(self.points * a, self.times * a * a)

    def to_csv(self, path: str | Path, header: dict[str, str] | None = None) -> None:
        with open(path, "w", newline="") as fh:
            for key, val in (header or {}).items():
                fh.write(f"# {key}={val}\n")
            writer = csv.writer(fh)
            writer.writerow(["t", "re", "im"])
            for t, z in zip(self.times, self.points):
                writer.writerow([repr(float(t)), repr(float(z.real)), repr(float(z.imag))])

    @classmethod
    def from_csv(cls, path: str | Path) -> "CurveTrace":
        rows = _read_csv_rows(path)
        pts = [complex(float(r["re"]), float(r["im"])) for r in rows]
        return cls(pts, [float(r["t"]) for r in rows])


def _read_csv_rows(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _capacity(chain: LoewnerChain, t: float | None) -> float:
    return chain.total_capacity if t is None else float(t)


def forward_map(chain: LoewnerChain, z: complex, t: float | None = None) -> complex:
    """g_t(z) for z in the closed upper half-plane, not swallowed before t."""
    g, _ = forward_map_and_derivative(chain, z, t)
    return g


def forward_map_and_derivative(chain: LoewnerChain, z: complex, t: float | None = None) -> tuple[complex, complex]:
    t = _capacity(chain, t)
    if t == 0 or len(chain) == 0:
        return complex(z), 1 + 0j
    n, rest = chain.split(t)
    w = chain.w if n < len(chain) else np.append(chain.w, chain.w_final)
    g, d, k = K.chain_forward_complex(chain.dt, w, n, rest, complex(z), COLLIDE_C)
    if k >= 0:
        raise SwallowedPointError(z, float(chain.times[k]))
    return complex(g), complex(d)


def forward_map_real(
    chain: LoewnerChain,
    x: float,
    t: float | None = None,
    side: int | None = None,
    prime_end: bool = False,
) -> tuple[float, float]:
    """Image and derivative of a real boundary point.

    ``side`` (+1 or -1) picks the prime end when x sits on the driving
    point, e.g. ``x=0, side=+1`` is ``0+``.  With ``prime_end=True`` the point
    is carried along the hull boundary after a collision instead of raising.
    """
    t = _capacity(chain, t)
    if side is None:
        side = 1 if x >= 0 else -1
    if t == 0 or len(chain) == 0:
        return float(x), 1.0
    n, rest = chain.split(t)
    w = chain.w if n < len(chain) else np.append(chain.w, chain.w_final)
    w_after = np.append(chain.w[1:], chain.w_final)
    if rest > 0:
        w_after = w_after.copy()
        w_after[n] = chain.w[n]
    degenerate = prime_end or x == 0
    g, logd, k = K.chain_forward_real(chain.dt, w, w_after, n, rest, float(x), float(side), degenerate, COLLIDE_C)
    if k >= 0:
        raise SwallowedPointError(x, float(chain.times[k + 1]) if k < len(chain) else t)
    return float(g), float(math.exp(logd)) if np.isfinite(logd) else 0.0


def forward_map_derivative(chain: LoewnerChain, x: float, t: float | None = None) -> tuple[float, float]:
    """(g_t(x), g_t'(x)) for a real point that is still outside the hull."""
    return forward_map_real(chain, x, t)


def hull_swallow_time(chain: LoewnerChain, x: float, side: int | None = None) -> float | None:
    """First capacity time at which g_t(x) meets the driving point, or None."""
    if side is None:
        side = 1 if x >= 0 else -1
    if x == 0:
        return 0.0
    if len(chain) == 0:
        return None
    w_after = np.append(chain.w[1:], chain.w_final)
    _, _, k = K.chain_forward_real(chain.dt, chain.w, w_after, len(chain), 0.0, float(x), float(side), False, COLLIDE_C)
    return None if k < 0 else float(chain.times[k + 1])


def tip_indices(chain: LoewnerChain, max_points: int | None = None) -> np.ndarray:
    n = len(chain)
    if max_points is None or n + 1 <= max_points:
        return np.arange(n + 1)
    return np.unique(np.linspace(0, n, max_points).round().astype(np.int64))


def trace_chain(chain: LoewnerChain, steps: np.ndarray | None = None) -> CurveTrace:
    """Tips after the given numbers of whole steps (all of them by default).

    Each tip costs one pass over the earlier steps, so all n tips cost
    O(n^2); pass ``steps`` (or coarsen the chain) for long chains.
    """
    if len(chain) == 0:
        return CurveTrace([0j], [0.0])
    if steps is None:
        steps = np.arange(len(chain) + 1)
    steps = np.asarray(steps, dtype=np.int64)
    pts = K.trace_tips(chain.dt, chain.w, steps)
    bad = np.flatnonzero(~np.isfinite(pts))
    if bad.size:
        raise BranchError(int(steps[bad[0]]), complex(pts[bad[0]]))
    return CurveTrace(pts, chain.times[steps])


def trace_curve(driving, max_points: int | None = None) -> CurveTrace:
    """Curve generated by a driving path (``DrivingPath`` or ``LoewnerChain``)."""
    chain = driving if isinstance(driving, LoewnerChain) else driving.to_chain()
    return trace_chain(chain, tip_indices(chain, max_points))
