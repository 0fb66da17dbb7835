"""Weighted ensembles: importance weights, ESS, weighted KS with a bootstrap, Z.

All comparisons use self-normalized weights, so the unknown normalizing
constant of a tilted law never enters a test; it is only reported.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geometry import ComponentRecord

ESS_FLOOR = 100.0
BOOTSTRAP_REPS = 500
FAMILY_LEVEL = 0.05


class InsufficientESS(RuntimeError):
    def __init__(self, ess_a: float, ess_b: float, floor: float):
        self.ess_a, self.ess_b, self.floor = ess_a, ess_b, floor
        super().__init__(f"effective sample sizes {ess_a:.1f} / {ess_b:.1f} below the floor {floor:g}")


def config_digest(cfg: Mapping[str, object]) -> str:
    blob = json.dumps({k: str(v) for k, v in sorted(cfg.items())}, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class WeightedEnsemble:
    observables: np.ndarray
    log_weights: np.ndarray | None = None
    seeds: np.ndarray | None = None
    params_digest: str = ""
    names: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.observables = np.asarray(self.observables, dtype=float)
        if self.observables.ndim == 1:
            self.observables = self.observables[:, None]
        n = self.observables.shape[0]
        if self.log_weights is None:
            self.log_weights = np.zeros(n)
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        if self.log_weights.shape != (n,):
            raise ValueError("one log-weight per sample is required")
        if not np.all(np.isfinite(self.log_weights)):
            raise ValueError("log-weights must be finite")

    @property
    def n(self) -> int:
        return self.observables.shape[0]

    def normalized_weights(self) -> np.ndarray:
        lw = self.log_weights - np.max(self.log_weights)
        w = np.exp(lw)
        return w / w.sum()

    def column(self, j: int) -> np.ndarray:
        return self.observables[:, j]


def rn_log_weight(records: Iterable[ComponentRecord], alphas: Mapping[tuple[str, int], float]) -> float:
    """Sum of alpha * log(factor) over force points with nonzero alpha."""
    by_key = {(r.side, r.index): r for r in records}
    total = 0.0
    for key, a in alphas.items():
        if a == 0:
            continue
        if key not in by_key:
            raise KeyError(f"no component record for force point {key}")
        total += float(a) * math.log(by_key[key].derivative_factor)
    return total


def ess(ens: WeightedEnsemble | np.ndarray) -> float:
    """(sum w)^2 / sum w^2, computed stably from log-weights."""
    lw = ens.log_weights if isinstance(ens, WeightedEnsemble) else np.log(np.asarray(ens, dtype=float))
    lw = lw - np.max(lw)
    w = np.exp(lw)
    return float(w.sum() ** 2 / np.sum(w * w))


def estimate_Z(ens: WeightedEnsemble, reps: int = BOOTSTRAP_REPS, seed: int = 0) -> tuple[float, float]:
    """Mean raw weight and its bootstrap standard error."""
    w = np.exp(ens.log_weights)
    if not np.any(w > 0):
        raise ValueError("all weights are zero")
    z = float(np.mean(w))
    if np.all(w == w[0]):
        return z, 0.0
    rng = np.random.default_rng(seed)
    boots = np.array([np.mean(w[rng.integers(0, w.size, w.size)]) for _ in range(reps)])
    return z, float(np.std(boots, ddof=1))


def weighted_cdf_distance(xa: np.ndarray, wa: np.ndarray, xb: np.ndarray, wb: np.ndarray) -> float:
    """sup_x |F_a(x) - F_b(x)| for weighted empirical laws (weights summing to 1)."""
    values = np.concatenate((xa, xb))
    mass = np.concatenate((wa, -wb))
    order = np.argsort(values, kind="mergesort")
    v, m = values[order], mass[order]
    cum = np.cumsum(m)
    # only compare at the last position of each run of tied values
    last = np.append(v[1:] != v[:-1], True)
    return float(min(1.0, np.max(np.abs(cum[last]))))


@dataclass(frozen=True)
class KSResult:
    statistic: float
    p_value: float
    ess_a: float
    ess_b: float


def weighted_ks(
    a: WeightedEnsemble,
    b: WeightedEnsemble,
    j: int,
    reps: int = BOOTSTRAP_REPS,
    seed: int = 0,
    ess_floor: float = ESS_FLOOR,
) -> KSResult:
    """Weighted two-sample KS distance for observable ``j`` with a bootstrap p-value.

    Under the null both samples come from one law, estimated by pooling the
    two weighted empirical laws (each with its own total mass 1/2).  Each
    replicate draws round(ESS) points per side from that pooled law, so the
    replicate statistics have the spread of an unweighted comparison of the
    effective sizes.  p = (1 + #{D* >= D}) / (reps + 1).
    """
    ea, eb = ess(a), ess(b)
    if ea < ess_floor or eb < ess_floor:
        raise InsufficientESS(ea, eb, ess_floor)
    xa, xb = a.column(j), b.column(j)
    wa, wb = a.normalized_weights(), b.normalized_weights()
    # -inf is a legitimate extreme value; only undefined entries are dropped
    keep_a, keep_b = ~np.isnan(xa), ~np.isnan(xb)
    if not (keep_a.all() and keep_b.all()):
        xa, wa = xa[keep_a], wa[keep_a] / wa[keep_a].sum()
        xb, wb = xb[keep_b], wb[keep_b] / wb[keep_b].sum()
    d = weighted_cdf_distance(xa, wa, xb, wb)
    # pooled law on the sorted distinct values; replicates are drawn as ranks
    values, inverse = np.unique(np.concatenate((xa, xb)), return_inverse=True)
    k = values.size
    mass = np.bincount(inverse, weights=np.concatenate((wa, wb)) / 2.0, minlength=k)
    cdf = np.cumsum(mass)
    cdf[-1] = 1.0
    na, nb = max(2, int(round(ea))), max(2, int(round(eb)))
    rng = np.random.default_rng(seed)
    count = 0
    block = max(1, min(reps, 4_000_000 // (k + na + nb)))
    done = 0
    while done < reps:
        r = min(block, reps - done)
        offs = (np.arange(r) * k)[:, None]
        ra = np.searchsorted(cdf, rng.random((r, na)), side="right").clip(max=k - 1) + offs
        rb = np.searchsorted(cdf, rng.random((r, nb)), side="right").clip(max=k - 1) + offs
        diff = (np.bincount(ra.ravel(), minlength=r * k) / na - np.bincount(rb.ravel(), minlength=r * k) / nb).reshape(r, k)
        dstar = np.max(np.abs(np.cumsum(diff, axis=1)), axis=1)
        count += int(np.count_nonzero(dstar >= d - 1e-12))
        done += r
    return KSResult(d, (1 + count) / (reps + 1), ea, eb)


def holm(p_values: Sequence[float]) -> np.ndarray:
    """Holm step-down adjusted p-values (monotone, capped at 1)."""
    p = np.asarray(p_values, dtype=float)
    m = p.size
    order = np.argsort(p, kind="mergesort")
    adj = np.empty(m)
    running = 0.0
    for rank, idx in enumerate(order):
        running = max(running, min(1.0, (m - rank) * p[idx]))
        adj[idx] = running
    return adj


@dataclass
class ComparisonReport:
    names: list[str]
    statistics: np.ndarray
    p_values: np.ndarray
    adjusted: np.ndarray
    ess_a: float
    ess_b: float
    verdict: str
    level: float = FAMILY_LEVEL
    diagnostic: str = ""

    @property
    def rejected(self) -> bool:
        return self.verdict == "fail"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "level": self.level,
            "ess_a": self.ess_a,
            "ess_b": self.ess_b,
            "diagnostic": self.diagnostic,
            "observables": [
                {"name": n, "statistic": float(s), "p": float(p), "p_holm": float(q)}
                for n, s, p, q in zip(self.names, self.statistics, self.p_values, self.adjusted)
            ],
        }


def compare_ensembles(
    a: WeightedEnsemble,
    b: WeightedEnsemble,
    names: Sequence[str] | None = None,
    reps: int = BOOTSTRAP_REPS,
    seed: int = 0,
    ess_floor: float = ESS_FLOOR,
    level: float = FAMILY_LEVEL,
) -> ComparisonReport:
    """Weighted KS on every observable with Holm control of the family.

    Columns that take a single value across both ensembles carry no
    information; they get statistic 0, p = 1 and are left out of the Holm
    family.
    """
    m = a.observables.shape[1]
    names = list(names) if names is not None else [f"obs{j}" for j in range(m)]
    ea, eb = ess(a), ess(b)
    if ea < ess_floor or eb < ess_floor:
        return ComparisonReport(
            names, np.full(m, np.nan), np.full(m, np.nan), np.full(m, np.nan), ea, eb, "inconclusive", level,
            f"ESS {ea:.1f} / {eb:.1f} below floor {ess_floor:g}",
        )
    stats, ps, adj = np.zeros(m), np.ones(m), np.ones(m)
    tested = []
    for j in range(m):
        col = np.concatenate((a.column(j), b.column(j)))
        fin = col[~np.isnan(col)]
        if fin.size == 0 or np.all(fin == fin[0]):
            continue
        r = weighted_ks(a, b, j, reps, seed + 7919 * j, ess_floor)
        stats[j], ps[j] = r.statistic, r.p_value
        tested.append(j)
    if tested:
        adj[tested] = holm(ps[tested])
    verdict = "fail" if np.any(adj < level) else "pass"
    return ComparisonReport(names, stats, ps, adj, ea, eb, verdict, level)
