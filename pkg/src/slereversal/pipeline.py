"""End-to-end reversal check: forward curves through J versus weighted hatted curves.

Ensemble A samples eta ~ SLE_kappa(rho) and reads its observables as those
of J(eta) walked backwards.  Ensemble B samples the hatted process and
carries log-weights sum alpha * log|x psi'(x)| from its force points.  The
two are compared observable by observable with the weighted KS test.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import UnsupportedGeometry
from .observables import FlowProbes, ObservableGrid, flow_observables
from .params import SleParams, TiltedParams, reverse_params, validate_params
from .sampler import EnsembleResult, SamplerConfig, run_ensemble
from .stats import (
    BOOTSTRAP_REPS,
    ESS_FLOOR,
    FAMILY_LEVEL,
    ComparisonReport,
    WeightedEnsemble,
    compare_ensembles,
    estimate_Z,
)

TAG_FORWARD = 1
TAG_HATTED = 2


@dataclass
class WeightFactors:
    """log|x psi'(x)| per sample for each weighted force point, at T and T/2."""

    keys: list[tuple[str, int]]
    log_factor: np.ndarray
    log_factor_half: np.ndarray

    def log_weights(self, alphas: dict[tuple[str, int], float]) -> np.ndarray:
        lw = np.zeros(self.log_factor.shape[0])
        for c, key in enumerate(self.keys):
            a = float(alphas.get(key, 0.0))
            if a:
                lw += a * self.log_factor[:, c]
        return lw

    def truncation_error(self, alphas: dict[tuple[str, int], float]) -> float:
        """Largest change of any log-weight between capacity T/2 and T."""
        if not self.keys:
            return 0.0
        a = np.array([float(alphas.get(k, 0.0)) for k in self.keys])
        diff = (self.log_factor - self.log_factor_half) @ a
        return float(np.max(np.abs(diff)))


def ensemble_weight_factors(res: EnsembleResult, keys: list[tuple[str, int]]) -> WeightFactors:
    """Weight factors read off the flowed force points of a sampled ensemble.

    Raises :class:`UnsupportedGeometry` if any weighted point was swallowed.
    """
    n = res.n
    lf = np.zeros((n, len(keys)))
    lf_half = np.zeros((n, len(keys)))
    half = 0 if res.checkpoints.size > 1 else -1
    for c, (q, i) in enumerate(keys):
        col = res.layout.index(q, i)
        swallowed = np.isfinite(res.force_swallow[:, col])
        if np.any(swallowed):
            raise UnsupportedGeometry(
                f"force point ({q}, {i}) was swallowed in {int(swallowed.sum())} of {n} samples; "
                "weights need the point to stay in the unbounded component"
            )
        x = res.layout.start[col]
        for out, cp in ((lf, -1), (lf_half, half)):
            # log(|x| g'(x) / |g(x) - g(sigma)|) with the separation tracked in log form
            out[:, c] = np.log(abs(x)) + res.logdV[:, cp, col] - res.logsep[:, cp, col]
    return WeightFactors(list(keys), lf, lf_half)


@dataclass
class VerificationData:
    params: SleParams
    tilted: TiltedParams
    config: SamplerConfig
    grid: ObservableGrid
    names: list[str]
    obs_forward: np.ndarray
    obs_hatted: np.ndarray
    factors: WeightFactors
    seeds: dict = field(default_factory=dict)

    def alphas(self, sign: float = 1.0) -> dict[tuple[str, int], float]:
        return {(q, i): sign * float(a) for q, i, a in self.tilted.nonzero_alphas()}

    def hatted_ensemble(self, alpha_sign: float = 1.0) -> WeightedEnsemble:
        lw = self.factors.log_weights(self.alphas(alpha_sign))
        return WeightedEnsemble(self.obs_hatted, lw, names=self.names)

    def forward_ensemble(self) -> WeightedEnsemble:
        return WeightedEnsemble(self.obs_forward, None, names=self.names)

    def compare(
        self,
        alpha_sign: float = 1.0,
        reps: int = BOOTSTRAP_REPS,
        ess_floor: float = ESS_FLOOR,
        level: float = FAMILY_LEVEL,
    ) -> ComparisonReport:
        return compare_ensembles(
            self.forward_ensemble(),
            self.hatted_ensemble(alpha_sign),
            self.names,
            reps=reps,
            seed=self.config.seed,
            ess_floor=ess_floor,
            level=level,
        )

    def z_estimate(self, alpha_sign: float = 1.0) -> tuple[float, float]:
        return estimate_Z(self.hatted_ensemble(alpha_sign), seed=self.config.seed)


def check_supported(p: SleParams) -> None:
    if p.kappa > 4:
        raise UnsupportedGeometry(
            f"kappa = {float(p.kappa):g} > 4: curves touch themselves and the boundary, "
            "so probe points can be swallowed; only kappa <= 4 is supported"
        )


def collect(p: SleParams, cfg: SamplerConfig, grid: ObservableGrid | None = None) -> VerificationData:
    """Sample both ensembles for ``p`` and keep observables plus weight factors."""
    validate_params(p).raise_for_status()
    check_supported(p)
    tilted = reverse_params(p)
    grid = grid or ObservableGrid.for_params(tilted.base)
    keys = [(q, i) for q, i, _ in tilted.nonzero_alphas()]

    probes_a = FlowProbes(grid, through_j=True)
    res_a = run_ensemble(p, cfg, probes_a.complex_points, probes_a.real_points, tag=TAG_FORWARD)
    _check_no_stop(res_a)
    obs_a = flow_observables(res_a, probes_a)

    probes_b = FlowProbes(grid)
    res_b = run_ensemble(
        tilted.base, cfg, probes_b.complex_points, probes_b.real_points, checkpoints=[cfg.T / 2], tag=TAG_HATTED
    )
    _check_no_stop(res_b)
    obs_b = flow_observables(res_b, probes_b)
    factors = ensemble_weight_factors(res_b, keys)
    return VerificationData(
        p, tilted, cfg, grid, grid.flow_names(), obs_a, obs_b, factors,
        {"seed": cfg.seed, "forward_tag": TAG_FORWARD, "hatted_tag": TAG_HATTED, "n": cfg.n_samples},
    )


def _check_no_stop(res: EnsembleResult) -> None:
    frac = res.threshold_fraction
    if frac > 0:
        raise UnsupportedGeometry(f"continuation threshold reached in {frac:.1%} of samples")


@dataclass
class VerificationOutcome:
    data: VerificationData
    report: ComparisonReport
    z: float
    z_se: float
    alpha_sign: float = 1.0

    @property
    def verdict(self) -> str:
        return self.report.verdict

    def to_dict(self) -> dict:
        d = self.report.to_dict()
        t = self.data.tilted
        d.update(
            {
                "z_estimate": self.z,
                "z_se": self.z_se,
                "alpha_sign": self.alpha_sign,
                "alphas": {f"{q}{i}": float(a) * self.alpha_sign for q, i, a in t.nonzero_alphas()},
                "weight_truncation_error": self.data.factors.truncation_error(self.data.alphas(self.alpha_sign)),
                "truncation_note": "weights use curves stopped at capacity T; error is the log-weight change from T/2 to T",
                "seeds": self.data.seeds,
            }
        )
        return d


def verify(
    p: SleParams,
    cfg: SamplerConfig,
    grid: ObservableGrid | None = None,
    alpha_sign: float = 1.0,
    reps: int = BOOTSTRAP_REPS,
    ess_floor: float = ESS_FLOOR,
) -> VerificationOutcome:
    data = collect(p, cfg, grid)
    report = data.compare(alpha_sign, reps=reps, ess_floor=ess_floor)
    z, se = data.z_estimate(alpha_sign)
    return VerificationOutcome(data, report, z, se, alpha_sign)
