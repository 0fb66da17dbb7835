from __future__ import annotations

from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slereversal.params import (
    LEFT,
    RIGHT,
    ParamsError,
    SleParams,
    ThresholdViolation,
    merge_collided_points,
    params_from_config,
    reverse_params,
    validate_params,
)

WORKED = SleParams.build(2, (F(1, 2), 1), (0, F(1, 2), 1), (-2,), (1, 3))


def test_valid_nonnegative_weights():
    assert validate_params(SleParams.build(2, (0,), (0, 1), (), (1,))).ok


def test_threshold_violation_kappa6():
    rep = validate_params(SleParams.build(6, (0,), (F(-12, 10),)))
    assert rep.kind == "threshold"
    assert (rep.side, rep.index) == (RIGHT, 0)
    assert rep.bound == -1
    with pytest.raises(ThresholdViolation):
        rep.raise_for_status()


def test_just_above_minus_two():
    assert validate_params(SleParams.build(3, (F(-19, 10),), (0,))).ok


def test_boundary_is_strict():
    rep = validate_params(SleParams.build(2, (-2,), (0,)))
    assert rep.kind == "threshold" and rep.side == LEFT


def test_malformed_reported_separately():
    rep = validate_params(SleParams.build(2, (0,), (0, 1, 1), (), (3, 1)))
    assert rep.kind == "malformed"
    rep = validate_params(SleParams.build(2, (0,), (0, 1), (), ()))
    assert rep.kind == "malformed"
    rep = validate_params(SleParams.build(9, (0,), (0,)))
    assert rep.kind == "malformed"
    with pytest.raises(ParamsError):
        rep.raise_for_status()


def test_left_scanned_first():
    rep = validate_params(SleParams.build(2, (-3,), (-3,)))
    assert rep.side == LEFT


def test_worked_example_reversal():
    t = reverse_params(WORKED)
    b = t.base
    assert b.left_weights == (F(3, 2), -1, F(-1, 2))
    assert b.right_weights == (F(3, 2), -1)
    assert b.left_points == (F(-1, 3), -1)
    assert b.right_points == (F(1, 2),)
    assert t.alpha_left == (F(1, 2), F(1, 4))
    assert t.alpha_right == (F(1, 2),)


def test_kappa4_has_no_alphas():
    p = SleParams.build(4, (1, F(-1, 2)), (0, 2), (-1,), (F(3, 2),))
    assert reverse_params(p).is_unweighted()


def test_no_force_points_swaps_sides():
    t = reverse_params(SleParams.build(3, (1,), (F(1, 2),)))
    assert t.base.left_weights == (F(1, 2),)
    assert t.base.right_weights == (1,)
    assert t.nonzero_alphas() == []


def test_reverse_rejects_invalid():
    with pytest.raises(ThresholdViolation):
        reverse_params(SleParams.build(2, (-3,), (0,)))


def test_merge_two_points():
    p = SleParams.build(2, (0,), (0, F(1, 2), F(1, 4)), (), (1, 2))
    m = merge_collided_points(p, right_positions=(0, 1, 1))
    assert m.right_points == (1,)
    assert m.right_weights == (0, F(3, 4))


def test_merge_identity_and_triple():
    p = SleParams.build(2, (0,), (0, 1, 2, 3), (), (1, 2, 3))
    assert merge_collided_points(p) == p
    m = merge_collided_points(p, right_positions=(0, 5, 5, 5))
    assert m.right_points == (5,) and m.right_weights == (0, 6)


def test_merge_into_degenerate_point():
    p = SleParams.build(2, (1, 2), (0,), (-1,), ())
    m = merge_collided_points(p, left_positions=(0, 0))
    assert m.left_points == () and m.left_weights == (3,)


def test_merge_rejects_disorder():
    p = SleParams.build(2, (0,), (0, 1, 2), (), (1, 2))
    with pytest.raises(ParamsError):
        merge_collided_points(p, right_positions=(0, 2, 1))


def test_config_round_trip():
    assert params_from_config(WORKED.as_config()) == WORKED
    with pytest.raises(ParamsError):
        params_from_config({"rho_left": "0"})
    with pytest.raises(ParamsError):
        params_from_config({"kappa": "2", "x_right": "a"})


@st.composite
def valid_params(draw):
    kappa = F(draw(st.integers(1, 16)), 2)
    bound = max(F(-2), kappa / 2 - 4)
    sides = {}
    for side in (LEFT, RIGHT):
        n = draw(st.integers(0, 3))
        gaps = draw(st.lists(st.integers(1, 8), min_size=n, max_size=n))
        pts, acc = [], F(0)
        for g in gaps:
            acc += F(g, 2)
            pts.append(-acc if side == LEFT else acc)
        weights, total = [], F(0)
        for _ in range(n + 1):
            # keep every partial sum strictly above the bound
            lo = int((bound - total) * 4) + 1
            w = F(draw(st.integers(lo, lo + 12)), 4)
            total += w
            weights.append(w)
        sides[side] = (tuple(pts), tuple(weights))
    return SleParams(kappa, sides[LEFT][0], sides[RIGHT][0], sides[LEFT][1], sides[RIGHT][1])


@settings(max_examples=200, deadline=None)
@given(valid_params())
def test_reversal_is_involution_and_preserves_validity(p):
    assert validate_params(p).ok
    t = reverse_params(p)
    assert validate_params(t.base).ok
    assert reverse_params(t.base).base == p
    if p.kappa == 4:
        assert t.is_unweighted()
    for side in (LEFT, RIGHT):
        for a, r in zip(t.alphas(side), t.base.weights(side)[1:]):
            assert a == r * (p.kappa - 4) / (2 * p.kappa)
