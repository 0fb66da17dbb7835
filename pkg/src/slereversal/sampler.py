"""Euler-Maruyama sampling of the SLE_kappa(rho) driving system.

The driving value follows

    dW = sqrt(kappa) dB + sum_i rho_i / (W - V_i) dt,

while every force-point image V_i (and any passive probe) moves by the exact
Loewner flow with the driving value frozen over the step.  Step sizes shrink
as ``gamma * gap**2`` near the closest force point.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _kernels as K
from .loewner import LoewnerChain
from .params import LEFT, RIGHT, SIDES, SleParams, merge_collided_points, validate_params


@dataclass(frozen=True)
class SamplerConfig:
    T: float = 25.0
    dt_max: float = 1e-3
    gamma: float = 0.1
    epsilon0: float | None = None
    delta_sing: float = 1e-9
    dt_floor_ratio: float = 1e-6
    collide_c: float = 2.0
    seed: int = 0
    n_samples: int = 2000

    def __post_init__(self) -> None:
        for name in ("T", "dt_max", "gamma", "delta_sing", "dt_floor_ratio", "collide_c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.epsilon0 is not None and not self.epsilon0 > 0:
            raise ValueError("epsilon0 must be positive")
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")

    @property
    def dt_rule(self) -> str:
        return f"min(dt_max, {self.gamma:g}*gap^2) floored at {self.dt_floor_ratio:g}*dt_max"

    def resolved_epsilon0(self, p: SleParams) -> float:
        if self.epsilon0 is not None:
            return float(self.epsilon0)
        near = p.nearest_point_distance()
        return 1e-4 * min(1.0, near if near is not None else 1.0)

    def with_(self, **changes) -> "SamplerConfig":
        return replace(self, **changes)


def stream(seed: int, index: int, tag: int = 0) -> np.random.Generator:
    """Counter-based generator for trajectory ``index`` under master ``seed``.

    ``tag`` separates ensembles that share a master seed (e.g. the two sides
    of a comparison).
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(tag), int(index)])))


@dataclass(frozen=True)
class ForcePointLayout:
    """Flat arrays describing the force points as the compiled stepper sees them."""

    labels: tuple[tuple[str, int], ...]
    start: np.ndarray
    rho: np.ndarray
    degenerate: np.ndarray
    partial: np.ndarray
    side: np.ndarray
    order_left: np.ndarray
    order_right: np.ndarray
    anchor: np.ndarray

    @classmethod
    def from_params(cls, p: SleParams, epsilon0: float) -> "ForcePointLayout":
        labels, start, rho, deg, part, side, anchor = [], [], [], [], [], [], []
        orders = {}
        for q in SIDES:
            sign = -1.0 if q == LEFT else 1.0
            pts = (None,) + p.points(q)
            idx = []
            first = len(labels)
            for i, (x, s) in enumerate(zip(pts, p.partial_sums(q))):
                idx.append(len(labels))
                anchor.append(first)
                labels.append((q, i))
                start.append(sign * epsilon0 if i == 0 else float(x))
                rho.append(float(p.weights(q)[i]))
                deg.append(i == 0)
                part.append(float(s))
                side.append(sign)
            orders[q] = np.array(idx, dtype=np.int64)
        return cls(
            tuple(labels),
            np.array(start),
            np.array(rho),
            np.array(deg, dtype=np.bool_),
            np.array(part),
            np.array(side),
            orders[LEFT],
            orders[RIGHT],
            np.array(anchor, dtype=np.int64),
        )

    def index(self, side: str, i: int) -> int:
        return self.labels.index((side, i))

    def column_names(self) -> list[str]:
        return [f"v_{q}{i}" for q, i in self.labels]


@dataclass(frozen=True)
class DrivingPath:
    """Sampled driving function and force-point images on the adaptive grid."""

    times: np.ndarray
    w: np.ndarray
    v: np.ndarray
    labels: tuple[tuple[str, int], ...] = ()
    stopped_at: float | None = None
    seed: tuple[int, int] | None = None

    def __len__(self) -> int:
        return max(self.times.size - 1, 0)

    def to_chain(self) -> LoewnerChain:
        return path_to_chain(self)

    def to_csv(self, path: str | Path, header: dict[str, str] | None = None) -> None:
        with open(path, "w", newline="") as fh:
            for key, val in (header or {}).items():
                fh.write(f"# {key}={val}\n")
            writer = csv.writer(fh)
            writer.writerow(["t", "w"] + [f"v_{q}{i}" for q, i in self.labels])
            for row in range(self.times.size):
                writer.writerow([repr(float(self.times[row])), repr(float(self.w[row]))] + [repr(float(x)) for x in self.v[row]])


class _Run:
    """Buffers and state for one trajectory driven through ``advance``."""

    def __init__(
        self,
        layout: ForcePointLayout,
        cfg: SamplerConfig,
        checkpoints: np.ndarray,
        probes_real: np.ndarray,
        probes_side: np.ndarray,
        probes_complex: np.ndarray,
        record: bool,
        probes_nohit: np.ndarray | None = None,
    ):
        self.layout = layout
        self.prm = np.array(
            [0.0, cfg.T, cfg.dt_max, cfg.dt_max * cfg.dt_floor_ratio, cfg.gamma, cfg.delta_sing, cfg.collide_c]
        )
        m = layout.start.size
        self.checkpoints = checkpoints
        ncp = checkpoints.size
        self.state = np.zeros(8)
        self.V = layout.start.copy()
        self.logdV = np.zeros(m)
        self.fswallow = np.full(m, -1.0)
        sep = np.abs(layout.start - layout.start[layout.anchor])
        with np.errstate(divide="ignore"):
            self.logsep = np.where(sep > 0, np.log(np.where(sep > 0, sep, 1.0)), 0.0)
        self.cp_logsep = np.zeros((ncp, m))
        self.PV = np.array(probes_real, dtype=float)
        self.pside = np.array(probes_side, dtype=float)
        self.pswallow = np.full(self.PV.size, -1.0)
        self.pnohit = np.zeros(self.PV.size, dtype=np.bool_) if probes_nohit is None else np.asarray(probes_nohit, dtype=np.bool_)
        self.Z = np.array(probes_complex, dtype=complex)
        self.logdZ = np.zeros(self.Z.size)
        self.cp_t = np.zeros(ncp)
        self.cp_W = np.zeros(ncp)
        self.cp_V = np.zeros((ncp, m))
        self.cp_logdV = np.zeros((ncp, m))
        self.cp_Z = np.zeros((ncp, self.Z.size), dtype=complex)
        self.cp_logdZ = np.zeros((ncp, self.Z.size))
        self.chunk = int(cfg.T / cfg.dt_max * 1.05) + 256
        self.record = record
        self.rec_chunks: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []

    def run(self, kappa: float, rng: np.random.Generator) -> None:
        self.prm[K.P_KAPPA] = kappa
        L = self.layout
        while self.state[K.S_STATUS] == K.STATUS_RUNNING:
            normals = rng.standard_normal(self.chunk)
            self.state[K.S_USED] = 0
            if self.record:
                rt = np.empty(self.chunk)
                rw = np.empty(self.chunk)
                rv = np.empty((self.chunk, L.start.size))
            else:
                rt = rw = np.empty(0)
                rv = np.empty((0, 0))
            K.advance(
                self.prm, L.order_left, L.order_right, L.rho, L.degenerate, L.partial, L.side, self.pside,
                self.checkpoints, normals, self.state, self.V, self.logdV, self.fswallow, L.anchor,
                self.logsep, self.cp_logsep, self.PV,
                self.pswallow, self.pnohit, self.Z, self.logdZ, self.cp_W, self.cp_V, self.cp_logdV, self.cp_Z,
                self.cp_logdZ, self.cp_t, rt, rw, rv,
            )
            if self.record:
                n = int(self.state[K.S_NREC])
                self.rec_chunks.append((rt[:n], rw[:n], rv[:n]))

    @property
    def stopped_at(self) -> float | None:
        return float(self.state[K.S_STOP]) if self.state[K.S_STATUS] == K.STATUS_THRESHOLD else None


def sample_driving(
    p: SleParams,
    cfg: SamplerConfig,
    rng: np.random.Generator | None = None,
    index: int = 0,
) -> DrivingPath:
    """One driving path on [0, min(T, continuation threshold)], fully recorded."""
    validate_params(p).raise_for_status()
    return _sample_unchecked(p, cfg, rng, index)


def _sample_unchecked(p, cfg, rng=None, index=0) -> DrivingPath:
    layout = ForcePointLayout.from_params(p, cfg.resolved_epsilon0(p))
    run = _Run(layout, cfg, np.array([cfg.T]), np.zeros(0), np.zeros(0), np.zeros(0, dtype=complex), True)
    run.run(float(p.kappa), rng if rng is not None else stream(cfg.seed, index))
    times = np.concatenate([[0.0]] + [c[0] for c in run.rec_chunks])
    w = np.concatenate([[0.0]] + [c[1] for c in run.rec_chunks])
    v = np.vstack([layout.start[None, :]] + [c[2] for c in run.rec_chunks])
    return DrivingPath(times, w, v, layout.labels, run.stopped_at, (cfg.seed, index) if rng is None else None)


def detect_threshold(path: DrivingPath, p: SleParams, collide_c: float = 2.0) -> float | None:
    """First grid time at which W meets a force-point cluster whose partial sum is <= -2.

    A cluster is the run of points, scanned outward from the origin on one
    side, whose images lie within ``collide_c * sqrt(dt)`` of W (or past it).
    """
    partial = {q: p.partial_sums(q) for q in SIDES}
    cols = {q: [path.labels.index((q, i)) for i in range(len(partial[q]))] for q in SIDES}
    for row in range(1, path.times.size):
        tol = collide_c * math.sqrt(path.times[row] - path.times[row - 1])
        for q in SIDES:
            sign = -1.0 if q == LEFT else 1.0
            worst = math.inf
            for i, col in enumerate(cols[q]):
                if (path.v[row, col] - path.w[row]) * sign >= tol:
                    break
                worst = min(worst, float(partial[q][i]))
            if worst <= -2:
                return float(path.times[row])
    return None


def path_to_chain(path: DrivingPath) -> LoewnerChain:
    if path.times.size < 2:
        return LoewnerChain(np.zeros(0), np.zeros(0), float(path.w[0]) if path.w.size else 0.0)
    return LoewnerChain.from_driving(path.times, path.w)


def restart_params(p: SleParams, w: float, v: Sequence[float], labels: Sequence[tuple[str, int]]) -> SleParams:
    """Parameters of the curve after a stopping time, seen through g_tau - W_tau.

    Every old point (the degenerate ones included) becomes an ordinary force
    point at its image ``v - w``; the new degenerate points 0-/0+ carry
    weight 0.  Points that have met W or each other are merged.
    """
    pos = dict(zip(labels, (float(x) - float(w) for x in v)))
    sides = {}
    for q in SIDES:
        sign = -1.0 if q == LEFT else 1.0
        n = len(p.weights(q))
        # absorbed images sit on W up to rounding; clamp them onto their side
        shifted = [sign * max(sign * pos[(q, i)], 0.0) for i in range(n)]
        sides[q] = (tuple(shifted), (0,) + tuple(p.weights(q)))
    raw = SleParams(p.kappa, (-1,) * len(sides[LEFT][0]), (1,) * len(sides[RIGHT][0]), sides[LEFT][1], sides[RIGHT][1])
    return merge_collided_points(raw, (0.0,) + sides[LEFT][0], (0.0,) + sides[RIGHT][0])


@dataclass
class EnsembleResult:
    """Per-trajectory end states of an ensemble run.

    Arrays are indexed ``[sample, checkpoint, ...]``; the last checkpoint is
    the final capacity T.  Earlier checkpoints are recorded at the end of the
    first step reaching them, at capacity ``checkpoint_times``.
    """

    params: SleParams
    config: SamplerConfig
    layout: ForcePointLayout
    indices: np.ndarray
    checkpoints: np.ndarray
    checkpoint_times: np.ndarray
    W: np.ndarray
    V: np.ndarray
    logdV: np.ndarray
    logsep: np.ndarray
    Z: np.ndarray
    logdZ: np.ndarray
    force_swallow: np.ndarray
    probe_swallow: np.ndarray
    stopped_at: np.ndarray
    probes_real: np.ndarray = field(default_factory=lambda: np.zeros(0))
    probes_complex: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))

    @property
    def n(self) -> int:
        return self.indices.size

    @property
    def threshold_fraction(self) -> float:
        return float(np.mean(np.isfinite(self.stopped_at))) if self.n else 0.0


def probe_in_nonhitting_stretch(p: SleParams, xs: np.ndarray) -> np.ndarray:
    """True for real probes lying where the curve cannot touch the boundary.

    A probe between x^{j,q} (inclusive) and x^{j+1,q} is reachable only when
    the partial sum of rho up to j is below kappa/2 - 2.
    """
    bound = p.kappa / 2 - 2
    out = np.zeros(xs.size, dtype=np.bool_)
    for k, x in enumerate(xs):
        q = RIGHT if x > 0 else LEFT
        j = sum(1 for y in p.points(q) if abs(float(y)) <= abs(x))
        out[k] = p.partial_sums(q)[j] >= bound
    return out


def run_ensemble(
    p: SleParams,
    cfg: SamplerConfig,
    probes_complex: Sequence[complex] = (),
    probes_real: Sequence[float] = (),
    checkpoints: Iterable[float] | None = None,
    indices: Sequence[int] | None = None,
    tag: int = 0,
) -> EnsembleResult:
    """Sample ``cfg.n_samples`` trajectories and keep only their flowed probes.

    Complex probes carry g_t(z) and log|g_t'(z)|; real probes record the
    capacity at which they are swallowed (``inf`` if never).  Trajectory
    ``j`` uses the stream ``(cfg.seed, tag, indices[j])``.
    """
    validate_params(p).raise_for_status()
    layout = ForcePointLayout.from_params(p, cfg.resolved_epsilon0(p))
    cps = np.array(sorted(set([cfg.T] if checkpoints is None else list(checkpoints) + [cfg.T])), dtype=float)
    if cps[0] <= 0 or cps[-1] > cfg.T:
        raise ValueError("checkpoints must lie in (0, T]")
    idx = np.arange(cfg.n_samples) if indices is None else np.asarray(indices, dtype=np.int64)
    zs = np.asarray(probes_complex, dtype=complex)
    xs = np.asarray(probes_real, dtype=float)
    if np.any(xs == 0):
        raise ValueError("real probes must be nonzero")
    pside = np.where(xs > 0, 1.0, -1.0)
    nohit = probe_in_nonhitting_stretch(p, xs)
    n, m, ncp = idx.size, layout.start.size, cps.size
    res = EnsembleResult(
        p, cfg, layout, idx, cps,
        checkpoint_times=np.zeros((n, ncp)),
        W=np.zeros((n, ncp)),
        V=np.zeros((n, ncp, m)),
        logdV=np.zeros((n, ncp, m)),
        logsep=np.zeros((n, ncp, m)),
        Z=np.zeros((n, ncp, zs.size), dtype=complex),
        logdZ=np.zeros((n, ncp, zs.size)),
        force_swallow=np.zeros((n, m)),
        probe_swallow=np.zeros((n, xs.size)),
        stopped_at=np.full(n, np.inf),
        probes_real=xs,
        probes_complex=zs,
    )
    kappa = float(p.kappa)
    for row, j in enumerate(idx):
        run = _Run(layout, cfg, cps, xs, pside, zs, False, nohit)
        run.run(kappa, stream(cfg.seed, int(j), tag))
        res.checkpoint_times[row] = run.cp_t
        res.W[row] = run.cp_W
        res.V[row] = run.cp_V
        res.logdV[row] = run.cp_logdV
        res.logsep[row] = run.cp_logsep
        res.Z[row] = run.cp_Z
        res.logdZ[row] = run.cp_logdZ
        res.force_swallow[row] = np.where(run.fswallow < 0, np.inf, run.fswallow)
        res.probe_swallow[row] = np.where(run.pswallow < 0, np.inf, run.pswallow)
        if run.stopped_at is not None:
            res.stopped_at[row] = run.stopped_at
    return res
