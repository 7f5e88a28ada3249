import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracdelay.mlf import (
    MlfDomainError,
    MlfOverflowError,
    MlfParams,
    default_switch,
    gamma_fn,
    ml_eval,
    ml_log_eval,
    ml_log_eval_many,
)
from oracles import ml_half, ml_reference

ALPHAS = [0.1, 0.3, 0.5, 0.7, 0.9, 1.0]


def test_gamma_values():
    assert gamma_fn(1.0) == 1.0
    assert gamma_fn(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-15)
    # recurrence: Gamma(3/2) = Gamma(1/2) / 2
    assert gamma_fn(1.5) == pytest.approx(math.sqrt(math.pi) / 2, rel=1e-15)
    assert gamma_fn(1.5) == pytest.approx(0.8862269255, abs=1e-10)


@pytest.mark.parametrize("x", [1e-3, 0.37, 2.5, 17.25, 101.1, 170.0])
def test_gamma_against_mpmath(x):
    import mpmath as mp

    assert gamma_fn(x) == pytest.approx(float(mp.gamma(x)), rel=1e-13)


@pytest.mark.parametrize("x", [0.0, -1.0, -2.5])
def test_gamma_domain(x):
    with pytest.raises(ValueError):
        gamma_fn(x)


def test_gamma_overflow():
    with pytest.raises(OverflowError):
        gamma_fn(172.0)


def test_params_validation():
    with pytest.raises(MlfDomainError):
        MlfParams(alpha=1.2)
    with pytest.raises(MlfDomainError):
        MlfParams(alpha=0.5, series_tol=0.0)
    with pytest.raises(MlfDomainError):
        MlfParams(alpha=0.5, max_terms=5)
    with pytest.raises(MlfDomainError):
        MlfParams(alpha=0.5, asymptotic_switch=1.0)
    assert MlfParams(alpha=0.5).switch == default_switch(0.5)


def test_basic_values():
    assert ml_eval(0.5, 0.0) == 1.0
    assert ml_eval(1.0, 1.0) == pytest.approx(math.e, rel=1e-15)
    assert ml_eval(0.5, 1.0) == pytest.approx(math.exp(1) * math.erfc(-1), rel=1e-14)
    assert ml_log_eval(0.7, 0.0) == 0.0
    assert ml_log_eval(1.0, 50.0) == pytest.approx(50.0, rel=1e-15)


def test_log_eval_against_extended_precision():
    ref = float(__import__("mpmath").log(ml_reference(0.5, 9.0)))
    assert ml_log_eval(0.5, 9.0) == pytest.approx(ref, rel=1e-13)


@pytest.mark.parametrize("alpha", [0.05, 0.2, 0.5, 0.75, 0.95])
def test_eval_against_series_oracle(alpha):
    zs = np.linspace(0, 1.5 * default_switch(alpha), 25)
    if alpha >= 0.5:
        zs = np.concatenate([zs, [-0.5, -3.0]])
    import mpmath as mp

    for z in zs:
        ref = ml_reference(alpha, z)
        if ref < 1e300:
            assert ml_eval(alpha, z) == pytest.approx(float(ref), rel=1e-12), z
        if z >= 0:
            assert ml_log_eval(alpha, z) == pytest.approx(float(mp.log(ref)), rel=1e-12, abs=1e-15), z


def test_negative_argument_needs_enough_terms():
    # for small alpha the series at z < 0 needs thousands of terms
    from fracdelay.mlf import MlfNonConvergenceError

    with pytest.raises(MlfNonConvergenceError):
        ml_eval(0.2, -3.0)
    v = ml_eval(0.2, -3.0, MlfParams(alpha=0.2, max_terms=6000))
    assert v == pytest.approx(float(ml_reference(0.2, -3.0)), rel=1e-12)


def test_identity_exp():
    z = np.linspace(-5, 20, 201)
    err = max(abs(ml_eval(1.0, v) - math.exp(v)) / math.exp(v) for v in z)
    assert err <= 1e-12


def test_identity_half_erfc():
    z = np.linspace(0, 3, 61)
    err = max(abs(ml_eval(0.5, v) - ml_half(v)) / ml_half(v) for v in z)
    assert err <= 1e-8


@pytest.mark.parametrize("alpha", ALPHAS)
def test_monotone_on_lattice(alpha):
    z = np.concatenate([np.linspace(0, 50, 400), np.linspace(50.5, 1e3, 200)])
    logs = ml_log_eval_many(alpha, z)
    assert np.all(np.diff(logs) > 0)


@pytest.mark.parametrize("alpha", [0.1, 0.3, 0.5, 0.7, 0.9])
def test_seam_continuity(alpha):
    s = default_switch(alpha)
    below, above = ml_log_eval(alpha, s * (1 - 1e-12)), ml_log_eval(alpha, s * (1 + 1e-12))
    lo, hi = ml_eval(alpha, s * (1 - 1e-12)), ml_eval(alpha, s * (1 + 1e-12))
    assert abs(hi - lo) / lo <= 1e-8
    assert abs(above - below) <= 1e-8 * abs(below)


def test_overflow_and_log_form():
    with pytest.raises(MlfOverflowError):
        ml_eval(0.5, 40.0)
    # ln E_alpha(z) ~ z^(1/alpha) - ln alpha for large z
    assert ml_log_eval(0.5, 40.0) == pytest.approx(1600 - math.log(0.5), rel=1e-12)


def test_domain_errors():
    with pytest.raises(MlfDomainError):
        ml_eval(0.0, 1.0)
    with pytest.raises(MlfDomainError):
        ml_eval(0.5, math.nan)
    with pytest.raises(MlfDomainError):
        ml_log_eval(0.5, -1.0)


@settings(max_examples=200, deadline=None)
@given(alpha=st.sampled_from(ALPHAS), z=st.floats(0, 60))
def test_log_consistency(alpha, z):
    try:
        v = ml_eval(alpha, z)
    except MlfOverflowError:
        return
    assert abs(math.exp(ml_log_eval(alpha, z)) - v) / v <= 1e-9


@settings(max_examples=100, deadline=None)
@given(alpha=st.floats(0.05, 1.0), z1=st.floats(0, 30), dz=st.floats(1e-3, 10))
def test_strictly_increasing(alpha, z1, dz):
    assert ml_log_eval(alpha, z1) < ml_log_eval(alpha, z1 + dz)


def test_many_matches_scalar():
    z = np.array([0.0, 0.3, 5.0, 0.3, 120.0])
    out = ml_log_eval_many(0.6, z)
    assert out.tolist() == [ml_log_eval(0.6, v) for v in z]
