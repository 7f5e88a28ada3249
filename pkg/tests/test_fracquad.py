import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracdelay.fracquad import ConvolutionWeights, caputo_residual, pr_weights, pt_weights, rl_integral_grid
from fracdelay.model import Trajectory, build_grid
from fracdelay.picard import solve_picard
from oracles import linear_exact, linear_problem, pure_delay_exact, pure_delay_problem, rl_power


def _dense_trapezoid_table(alpha, h, n):
    """Product-trapezoid weights from the textbook formula, row by row, in 40 digits."""
    import mpmath as mp

    with mp.workdps(40):
        a = mp.mpf(alpha)
        c = mp.mpf(h) ** a / mp.gamma(a + 2)
        w = np.zeros((n + 1, n + 1))
        for i in range(1, n + 1):
            w[i, 0] = c * ((i - 1) ** (a + 1) - (i - 1 - a) * mp.mpf(i) ** a)
            for j in range(1, i):
                k = mp.mpf(i - j)
                w[i, j] = c * ((k + 1) ** (a + 1) - 2 * k ** (a + 1) + (k - 1) ** (a + 1))
            w[i, i] = c
    return w


@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
def test_trapezoid_table_matches_formula(alpha):
    w = pt_weights(alpha, 0.1, 12).table()
    assert np.allclose(w, _dense_trapezoid_table(alpha, 0.1, 12), rtol=1e-13, atol=0)


def test_rectangle_row_structure():
    w = pr_weights(0.5, 0.2, 6)
    row = w.row(4)
    assert row[4] == 0.0
    c = 0.2**0.5 / math.gamma(1.5)
    expect = [c * ((4 - j) ** 0.5 - (3 - j) ** 0.5) for j in range(4)]
    assert np.allclose(row[:4], expect, rtol=1e-14)


@pytest.mark.parametrize("alpha", [0.2, 0.5, 0.8])
def test_row_sums_integrate_constants(alpha):
    h, n = 0.01, 400
    t = h * np.arange(n + 1)
    for w in (pt_weights(alpha, h, n), pr_weights(alpha, h, n)):
        sums = np.array([w.row(i).sum() for i in range(n + 1)])
        assert np.allclose(sums, t**alpha / math.gamma(alpha + 1), rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.7])
def test_trapezoid_exact_for_linear_samples(alpha):
    h, n = 0.05, 300
    t = h * np.arange(n + 1)
    got = rl_integral_grid(alpha, 2.0 - 3.0 * t, h)
    expect = 2.0 * rl_power(alpha, 0.0, t) - 3.0 * rl_power(alpha, 1.0, t)
    assert np.allclose(got, expect, rtol=1e-12, atol=1e-13)


def test_second_order_for_smooth_samples():
    alpha = 0.5
    errs = []
    for n in (50, 100, 200):
        h = 1.0 / n
        t = h * np.arange(n + 1)
        errs.append(abs(rl_integral_grid(alpha, t**2, h)[-1] - rl_power(alpha, 2.0, 1.0)))
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_large_lag_series_branch_is_continuous():
    # lags 7 and 8 straddle the switch from direct differences to the binomial series
    import mpmath as mp

    alpha = 0.37
    w = pt_weights(alpha, 1.0, 40)
    scale = 1 / math.gamma(alpha + 2)
    for k in (6, 7, 8, 9, 30):
        with mp.workdps(40):
            p = mp.mpf(alpha) + 1
            exact = (k + 1) ** p - 2 * mp.mpf(k) ** p + (k - 1) ** p
        assert w.lags[k] == pytest.approx(float(exact) * scale, rel=1e-13)


def test_apply_matches_table():
    w = pt_weights(0.6, 0.1, 20)
    g = np.cos(np.arange(21) * 0.3)
    assert np.allclose(w.apply(g), w.table() @ g, rtol=1e-13, atol=1e-15)
    wr = pr_weights(0.6, 0.1, 20)
    assert np.allclose(wr.apply(g), wr.table() @ g, rtol=1e-13, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(
    a=st.floats(-5, 5), b=st.floats(-5, 5),
    seed=st.integers(0, 2**31 - 1), alpha=st.floats(0.05, 0.95),
)
def test_integral_is_linear(a, b, seed, alpha):
    rng = np.random.default_rng(seed)
    f, g = rng.normal(size=(2, 33))
    lhs = rl_integral_grid(alpha, a * f + b * g, 0.03)
    rhs = a * rl_integral_grid(alpha, f, 0.03) + b * rl_integral_grid(alpha, g, 0.03)
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-10)


def test_vector_samples_componentwise():
    t = 0.1 * np.arange(11)
    g = np.column_stack([np.ones_like(t), t])
    out = rl_integral_grid(0.5, g, 0.1)
    assert np.allclose(out[:, 0], rl_integral_grid(0.5, g[:, 0], 0.1))
    assert np.allclose(out[:, 1], rl_integral_grid(0.5, g[:, 1], 0.1))


def test_weight_argument_checks():
    with pytest.raises(ValueError):
        ConvolutionWeights(1.0, 0.1, 5)
    with pytest.raises(ValueError):
        ConvolutionWeights(0.5, 0.0, 5)
    with pytest.raises(ValueError):
        ConvolutionWeights(0.5, 0.1, 5, rule="simpson")
    with pytest.raises(ValueError):
        pt_weights(0.5, 0.1, 3).apply(np.ones(10))


def test_residual_of_exact_solutions_is_small():
    for p, exact in ((linear_problem(), linear_exact), (pure_delay_problem(), pure_delay_exact)):
        grid = build_grid(p.r, p.T, 200)
        t = grid.times()
        vals = np.where(t <= 0, 1.0, exact(np.maximum(t, 0)))
        res = caputo_residual(p, Trajectory(grid, vals))
        assert res < 2e-4


def test_residual_detects_a_wrong_trajectory():
    p = linear_problem()
    traj, _ = solve_picard(p, 100)
    bad = traj.values.copy()
    bad[150] += 0.05
    assert caputo_residual(p, Trajectory(traj.grid, bad)) > 10 * caputo_residual(p, traj)
