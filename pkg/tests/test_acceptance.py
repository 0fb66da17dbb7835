"""Acceptance suite: one group of tests per criterion, summarized at the end of the run.

The Monte Carlo criteria share sampled ensembles through a session cache, so
the negative control reuses the weighted runs and the robustness check only
adds the refined variants.
"""

from __future__ import annotations

import cmath
import math
from fractions import Fraction as F

import numpy as np
import pytest

from slereversal.geometry import (
    ClosedFormMap,
    chain_rule_check,
    component_weight_factor,
    factor_sequence,
    nested_hull_residual,
)
from slereversal.loewner import LoewnerChain, forward_map, forward_map_and_derivative
from slereversal.params import LEFT, RIGHT, SleParams, reverse_params, validate_params
from slereversal.pipeline import VerificationData, collect
from slereversal.sampler import SamplerConfig, sample_driving

N_SAMPLES = 2000
T_CAP = 25.0
DT_MAX = 1e-3
SEEDS = range(5)
MIN_PASSING = 4
ESS_REQUIRED = 200

PLAIN_CASES = {
    "k2_rho00": SleParams.build(2),
    "k2_rho10": SleParams.build(2, (1,), (0,)),
    "k3_rho00": SleParams.build(3),
    "k3_rho10": SleParams.build(3, (1,), (0,)),
}
WEIGHTED = SleParams.build(2, (0,), (0, 1), (), (1,))
WEIGHTED_FAR = SleParams.build(2, (0,), (0, 1), (), (2,))
UNIT_WEIGHT = SleParams.build(4, (0,), (0, 1), (), (1,))
WEIGHTED_CASES = {"k2_x1": WEIGHTED, "k4_x1": UNIT_WEIGHT}


def _eps0(p: SleParams) -> float:
    cfg = SamplerConfig()
    return min(cfg.resolved_epsilon0(p), cfg.resolved_epsilon0(reverse_params(p).base))


def sampler_config(p: SleParams, seed: int, variant: str) -> SamplerConfig:
    cfg = SamplerConfig(T=T_CAP, dt_max=DT_MAX, n_samples=N_SAMPLES, seed=seed)
    if variant == "half_dt":
        return cfg.with_(dt_max=DT_MAX / 2)
    if variant == "half_eps":
        return cfg.with_(epsilon0=_eps0(p) / 2)
    return cfg


class EnsembleCache:
    def __init__(self):
        self._data: dict[tuple, VerificationData] = {}

    def get(self, name: str, p: SleParams, seed: int, variant: str = "base") -> VerificationData:
        key = (name, seed, variant)
        if key not in self._data:
            self._data[key] = collect(p, sampler_config(p, seed, variant))
        return self._data[key]


@pytest.fixture(scope="session")
def ensembles() -> EnsembleCache:
    return EnsembleCache()


def plain_case_passes(cache: EnsembleCache, name: str, variant: str) -> tuple[bool, list[str]]:
    verdicts = [cache.get(name, PLAIN_CASES[name], s, variant).compare().verdict for s in SEEDS]
    return sum(v == "pass" for v in verdicts) >= MIN_PASSING, verdicts


def weighted_case_passes(cache: EnsembleCache, name: str, variant: str) -> tuple[bool, list[str], list[float]]:
    reports = [cache.get(name, WEIGHTED_CASES[name], s, variant).compare() for s in SEEDS]
    verdicts = [r.verdict for r in reports]
    ess = [r.ess_b for r in reports]
    ok = sum(r.verdict == "pass" and r.ess_b >= ESS_REQUIRED for r in reports) >= MIN_PASSING
    return ok, verdicts, ess


def control_rejects(cache: EnsembleCache, variant: str) -> tuple[bool, list[str]]:
    verdicts = [cache.get("k2_x1", WEIGHTED, s, variant).compare(alpha_sign=-1.0).verdict for s in SEEDS]
    return sum(v == "fail" for v in verdicts) >= MIN_PASSING, verdicts


def criterion_verdicts(cache: EnsembleCache, variant: str) -> dict[str, bool]:
    out = {f"6:{name}": plain_case_passes(cache, name, variant)[0] for name in PLAIN_CASES}
    out.update({f"7:{name}": weighted_case_passes(cache, name, variant)[0] for name in WEIGHTED_CASES})
    out["8"] = control_rejects(cache, variant)[0]
    return out


# deterministic transform


@pytest.mark.criterion(1)
def test_reverse_params_worked_example(record_property):
    p = SleParams.build(2, (F(1, 2), 1), (0, F(1, 2), 1), (-2,), (1, 3))
    t = reverse_params(p)
    b = t.base
    assert b.left_weights == (F(3, 2), -1, F(-1, 2))
    assert b.right_weights == (F(3, 2), -1)
    assert b.left_points == (F(-1, 3), -1)
    assert b.right_points == (F(1, 2),)
    assert t.alpha_left == (F(1, 2), F(1, 4))
    assert t.alpha_right == (F(1, 2),)
    assert reverse_params(b).base == p
    assert validate_params(b).ok
    record_property("detail", "worked example exact, double reversal is the identity")


# Loewner oracle


def _slit(z: complex, t: float, w: float) -> complex:
    s = cmath.sqrt((z - w) ** 2 + 4 * t)
    if s.imag < 0 or (s.imag == 0 and (z - w).real < 0):
        s = -s
    return s + w


@pytest.mark.criterion(2)
def test_loewner_oracle(record_property):
    chain = LoewnerChain.constant(0.5, 2.0, 64)
    xs, ys = np.meshgrid(np.linspace(-3, 3, 10), np.linspace(0.1, 3, 10))
    rel = max(abs(forward_map(chain, z) - _slit(z, 2.0, 0.5)) / abs(_slit(z, 2.0, 0.5)) for z in (xs + 1j * ys).ravel())
    rng = np.random.default_rng(3)
    rough = LoewnerChain(np.full(200, 0.005), np.cumsum(rng.normal(0, 0.05, 200)))
    h = 1e-5
    drel = 0.0
    for z in (0.3 + 1.2j, -1 + 0.5j, 2 + 2j):
        _, d = forward_map_and_derivative(rough, z)
        fd = (forward_map(rough, z + h) - forward_map(rough, z - h)) / (2 * h)
        drel = max(drel, abs(d - fd) / abs(d))
    t = rough.total_capacity
    hydro = max(abs(forward_map(rough, z) - z - 2 * t / z) for z in 1e4 * np.exp(1j * np.linspace(0.1, 3.0, 7)))
    record_property("detail", f"map {rel:.1e}, derivative {drel:.1e}, hydrodynamic {hydro:.1e}")
    assert rel <= 1e-10
    assert drel <= 1e-6
    assert hydro <= 1e-4


# conformal factor oracle


def _truncated(T: float) -> float:
    r = math.sqrt(1 + 4 * T)
    return (1 / r) / (r - 2 * math.sqrt(T))


@pytest.mark.criterion(3)
def test_conformal_factor_oracle(record_property):
    chain = LoewnerChain.constant(0.0, 6400.0, 400)
    rec = component_weight_factor(chain, None, WEIGHTED, 1, RIGHT, 100.0)
    caps = [100.0 * 2**k for k in range(7)]
    vals = np.array(factor_sequence(chain, 1.0, RIGHT, caps))
    record_property("detail", f"factor at T=100 {rec.derivative_factor:.6f}, at T=6400 {vals[-1]:.6f}")
    assert abs(rec.derivative_factor - 1.99875) <= 1e-4
    assert np.all(np.diff(vals) > 0) and np.all(vals < 2)
    assert np.all(np.diff(np.abs(2 - vals)) < 0)
    assert 2 - vals[-1] < 1e-4


# chain rule


@pytest.mark.criterion(4)
def test_chain_rule_closed_form(record_property):
    a = 1.3
    inner = ClosedFormMap(lambda z: (z / a) ** 2, lambda z: 2 * z / a**2, a)
    outer = ClosedFormMap(lambda z: z**3, lambda z: 3 * z**2, 1.0)
    comp = ClosedFormMap(lambda z: (z / a) ** 6, lambda z: 6 * z**5 / a**6, a)
    worst = max(chain_rule_check(outer, inner, x, comp) for x in (0.4, 1.3, 2.9))
    record_property("detail", f"closed form {worst:.1e}")
    assert worst <= 1e-10


@pytest.mark.criterion(4)
def test_chain_rule_sampled_hulls(record_property):
    p = SleParams.build(2, (0, 1), (0, 1, 1), (-1,), (1, 2))
    worst = 0.0
    for index in range(4):
        chain = sample_driving(p, SamplerConfig(T=3.0, seed=17), index=index).to_chain()
        n = len(chain) // 2
        first = LoewnerChain(chain.dt[:n], chain.w[:n], float(chain.w[n]))
        second = LoewnerChain(chain.dt[n:], chain.w[n:], chain.w_final)
        worst = max(
            worst,
            nested_hull_residual(first, second, (1.0, 2.0), 2, RIGHT),
            nested_hull_residual(first, second, (-1.0, -2.5), 2, LEFT),
        )
    record_property("detail", f"sampled hulls {worst:.1e}")
    assert worst <= 1e-4


# dilation invariance


@pytest.mark.criterion(5)
def test_dilation_invariance(record_property):
    p = SleParams.build(2, (0, 1), (0, 1, 1), (-1,), (1, 2))
    T = 4.0
    worst = 0.0
    for index in range(4):
        chain = sample_driving(p, SamplerConfig(T=T, seed=17), index=index).to_chain()
        big = chain.affine(2.0)
        for q, i in ((LEFT, 1), (RIGHT, 1), (RIGHT, 2)):
            a = component_weight_factor(chain, None, p, i, q, T).derivative_factor
            b = component_weight_factor(big, None, p.scaled(2), i, q, 4 * T).derivative_factor
            worst = max(worst, abs(a - b) / abs(a))
    record_property("detail", f"max relative change {worst:.1e}")
    assert worst <= 1e-8


# Monte Carlo reversal checks


@pytest.mark.slow
@pytest.mark.criterion(6)
@pytest.mark.parametrize("name", list(PLAIN_CASES))
def test_unweighted_reversal(ensembles, name, record_property):
    ok, verdicts = plain_case_passes(ensembles, name, "base")
    record_property("detail", f"{name}: {verdicts.count('pass')}/5 pass")
    assert ok, verdicts


@pytest.mark.slow
@pytest.mark.criterion(7)
@pytest.mark.parametrize("name", list(WEIGHTED_CASES))
def test_weighted_reversal(ensembles, name, record_property):
    ok, verdicts, ess = weighted_case_passes(ensembles, name, "base")
    record_property("detail", f"{name}: {verdicts.count('pass')}/5 pass, min ESS {min(ess):.0f}")
    assert ok, (verdicts, ess)


@pytest.mark.slow
@pytest.mark.criterion(8)
def test_flipped_weights_are_detected(ensembles, record_property):
    ok, verdicts = control_rejects(ensembles, "base")
    record_property("detail", f"flipped weights rejected in {verdicts.count('fail')}/5")
    assert ok, verdicts


@pytest.mark.slow
@pytest.mark.criterion(9)
@pytest.mark.parametrize("variant", ["half_dt", "half_eps"])
def test_refinement_keeps_verdicts(ensembles, variant, record_property):
    base = criterion_verdicts(ensembles, "base")
    refined = criterion_verdicts(ensembles, variant)
    changed = sorted(k for k in base if base[k] != refined[k])
    record_property("detail", f"{variant}: " + (f"changed {changed}" if changed else "no verdict changed"))
    assert not changed, (base, refined)


@pytest.mark.slow
@pytest.mark.criterion(10)
def test_normalizer_does_not_depend_on_location(ensembles, record_property):
    z1, se1 = ensembles.get("k2_x1", WEIGHTED, 0).z_estimate()
    z2, se2 = ensembles.get("k2_x2", WEIGHTED_FAR, 1000).z_estimate()
    gap = abs(z1 - z2) / math.hypot(se1, se2)
    record_property("detail", f"Z(1)={z1:.4f}+-{se1:.4f}, Z(2)={z2:.4f}+-{se2:.4f}, {gap:.2f} SE apart")
    assert gap <= 2.0
