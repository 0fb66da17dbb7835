from __future__ import annotations

import cmath
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from slereversal.loewner import (
    BranchError,
    CurveTrace,
    LoewnerChain,
    SwallowedPointError,
    forward_map,
    forward_map_and_derivative,
    forward_map_derivative,
    hull_swallow_time,
    trace_chain,
    trace_curve,
)


def slit(z: complex, t: float, w: float = 0.0) -> complex:
    """Closed-form vertical slit map, branch with nonnegative imaginary part."""
    s = cmath.sqrt((z - w) ** 2 + 4 * t)
    if s.imag < 0 or (s.imag == 0 and (z - w).real < 0):
        s = -s
    return s + w


def test_sqrt5():
    chain = LoewnerChain.constant(0.0, 1.0, 37)
    assert abs(forward_map(chain, 1 + 0j) - math.sqrt(5)) < 1e-12


def test_identity_at_time_zero():
    chain = LoewnerChain.constant(0.3, 1.0, 10)
    assert forward_map(chain, 0.4 + 0.7j, 0.0) == 0.4 + 0.7j
    assert forward_map_derivative(chain, 2.0, 0.0) == (2.0, 1.0)


def test_tip_maps_to_driving_value():
    chain = LoewnerChain.constant(0.0, 1.0, 100)
    assert abs(forward_map(chain, 2j)) < 1e-6


def test_point_on_slit_is_swallowed():
    chain = LoewnerChain.constant(0.0, 1.0, 100)
    with pytest.raises(SwallowedPointError):
        forward_map(chain, 1j)


def test_real_derivative_oracle():
    chain = LoewnerChain.constant(0.0, 1.0, 50)
    g, d = forward_map_derivative(chain, 2.0)
    assert g == pytest.approx(math.sqrt(8), rel=1e-12)
    assert d == pytest.approx(2 / math.sqrt(8), rel=1e-12)


def test_grid_against_closed_form():
    chain = LoewnerChain.constant(0.5, 2.0, 64)
    xs, ys = np.meshgrid(np.linspace(-3, 3, 10), np.linspace(0.1, 3, 10))
    worst = 0.0
    for z in (xs + 1j * ys).ravel():
        exact = slit(z, 2.0, 0.5)
        worst = max(worst, abs(forward_map(chain, z) - exact) / abs(exact))
    assert worst <= 1e-10


def test_complex_derivative_vs_finite_differences():
    rng = np.random.default_rng(3)
    w = np.cumsum(rng.normal(0, 0.05, 200))
    chain = LoewnerChain(np.full(200, 0.005), w)
    h = 1e-5
    for z in (0.3 + 1.2j, -1 + 0.5j, 2 + 2j):
        _, d = forward_map_and_derivative(chain, z)
        fd = (forward_map(chain, z + h) - forward_map(chain, z - h)) / (2 * h)
        assert abs(d - fd) / abs(d) <= 1e-6


def test_hydrodynamic_normalization():
    rng = np.random.default_rng(4)
    chain = LoewnerChain(np.full(500, 0.002), np.cumsum(rng.normal(0, 0.045, 500)))
    t = chain.total_capacity
    for theta in np.linspace(0.1, math.pi - 0.1, 7):
        z = 1e4 * cmath.exp(1j * theta)
        assert abs(forward_map(chain, z) - z - 2 * t / z) <= 1e-4


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=30), st.floats(-1, 1), st.floats(-3, 3), st.floats(0.05, 3))
def test_any_partition_matches_closed_form(parts, w, x, y):
    dt = np.array(parts)
    # points on the slit (tip included) are in the hull
    assume(abs(x - w) > 1e-3)
    chain = LoewnerChain(dt, np.full(dt.size, w))
    z = complex(x, y)
    exact = slit(z, float(dt.sum()), w)
    assert abs(forward_map(chain, z) - exact) <= 1e-10 * abs(exact)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(5, 80), st.integers(5, 80))
def test_concatenation_composes(seed, n1, n2):
    rng = np.random.default_rng(seed)
    a = LoewnerChain(np.full(n1, 0.01), np.cumsum(rng.normal(0, 0.1, n1)))
    b = LoewnerChain(np.full(n2, 0.01), a.w[-1] + np.cumsum(rng.normal(0, 0.1, n2)))
    z = complex(rng.uniform(-2, 2), rng.uniform(0.5, 2))
    two = forward_map(b, forward_map(a, z))
    one = forward_map(a.concat(b), z)
    assert abs(one - two) <= 1e-10 * abs(one)
    assert a.concat(b).total_capacity == pytest.approx(a.total_capacity + b.total_capacity, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 3), st.floats(0.1, 3))
def test_boundary_order_preserved(seed, x1, gap):
    rng = np.random.default_rng(seed)
    chain = LoewnerChain(np.full(100, 0.005), np.cumsum(rng.normal(0, 0.07, 100)))
    lo, hi = x1 + 5, x1 + 5 + gap  # well outside the hull
    assert forward_map_derivative(chain, lo)[0] < forward_map_derivative(chain, hi)[0]
    assert forward_map_derivative(chain, lo)[1] > 0


def test_vertical_trace():
    chain = LoewnerChain.constant(0.0, 1.0, 10_000)
    tr = trace_curve(chain, 50)
    assert tr.points[0] == 0
    np.testing.assert_allclose(tr.points, 2j * np.sqrt(tr.times), atol=1e-6)


def test_empty_chain_traces_to_origin():
    tr = trace_chain(LoewnerChain(np.zeros(0), np.zeros(0)))
    assert len(tr) == 1 and tr.points[0] == 0


def test_linear_driving_curve_is_simple_and_follows_drift():
    n = 2000
    dt = np.full(n, 5e-4)
    t = np.concatenate(([0.0], np.cumsum(dt)))[:-1]
    chain = LoewnerChain(dt, 0.5 * t)
    pts = trace_curve(chain, 200).points
    assert pts[-1].real > 0
    # non-adjacent segment midpoints stay apart
    mids = (pts[1:] + pts[:-1]) / 2
    d = np.abs(mids[:, None] - mids[None, :])
    far = np.abs(np.subtract.outer(np.arange(mids.size), np.arange(mids.size))) > 2
    assert d[far].min() > 0


def test_swallow_times():
    still = LoewnerChain.constant(0.0, 5.0, 500)
    assert hull_swallow_time(still, 1.0) is None
    assert hull_swallow_time(still, 0.0) == 0.0
    assert hull_swallow_time(LoewnerChain.constant(0.0, 0.01, 10), 50.0) is None
    rng = np.random.default_rng(11)
    n = 20_000
    dt = np.full(n, 1e-4)
    brownian = LoewnerChain(dt, np.concatenate(([0.0], np.cumsum(rng.normal(0, math.sqrt(6e-4), n - 1)))))
    tau = hull_swallow_time(brownian, 0.5)
    assert tau is not None and 0 < tau < brownian.total_capacity
    with pytest.raises(SwallowedPointError):
        forward_map_derivative(brownian, 0.5)
    assert forward_map_derivative(brownian, 0.5, tau * 0.9)[1] > 0


def test_split_and_truncate():
    chain = LoewnerChain.constant(1.0, 1.0, 4)
    assert chain.split(0.5) == (2, 0.0)
    n, rest = chain.split(0.6)
    assert n == 2 and rest == pytest.approx(0.1)
    assert chain.truncated(0.6).total_capacity == pytest.approx(0.6)
    with pytest.raises(ValueError):
        chain.split(2.0)


def test_affine_conjugation():
    rng = np.random.default_rng(9)
    chain = LoewnerChain(np.full(100, 0.01), np.cumsum(rng.normal(0, 0.1, 100)))
    a, b, z = 2.0, 0.5, 0.3 + 0.8j
    lhs = forward_map(chain.affine(a, b), a * z + b)
    assert lhs == pytest.approx(a * forward_map(chain, z) + b, rel=1e-12)


def test_coarsened_keeps_capacity():
    rng = np.random.default_rng(2)
    chain = LoewnerChain(rng.uniform(0.001, 0.01, 300), rng.normal(size=300))
    c = chain.coarsened(np.arange(0, 300, 10))
    assert len(c) == 30
    assert c.total_capacity == pytest.approx(chain.total_capacity, rel=1e-12)


def test_csv_round_trips(tmp_path):
    rng = np.random.default_rng(1)
    chain = LoewnerChain(rng.uniform(0.01, 0.02, 20), rng.normal(size=20))
    chain.to_csv(tmp_path / "c.csv", {"config_digest": "x"})
    back = LoewnerChain.from_csv(tmp_path / "c.csv")
    np.testing.assert_array_equal(back.dt, chain.dt)
    np.testing.assert_array_equal(back.w, chain.w)
    tr = trace_curve(chain)
    tr.to_csv(tmp_path / "t.csv")
    back_tr = CurveTrace.from_csv(tmp_path / "t.csv")
    np.testing.assert_array_equal(back_tr.points, tr.points)


def test_trace_rejects_bad_times():
    with pytest.raises(ValueError):
        CurveTrace([0, 1j], [0.0, 0.0])


def test_branch_error_carries_step():
    err = BranchError(7, 1 - 1j)
    assert err.step == 7 and "step 7" in str(err)
