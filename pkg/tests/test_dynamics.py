import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import LAMBDA_STAR, X_STAR
from tikhonov_flow.dynamics import (
    FAST_SADDLE_TRACKING, GAP_OPTIMAL, IMPROVED_SLOW_REGIME, OUT_OF_THEORY, SLOW_REGIME,
    FlowState, HeParams, ParameterSet, classify_regime, make_rhs, regime_names, rhs_chbani,
    rhs_heode, rhs_main,
)
from tikhonov_flow.errors import AssumptionViolated, NonpositiveTime
from tikhonov_flow.problem import build_paper_problem, build_quadratic
from tikhonov_flow.saddle import solve_saddle


def _grad_paper(x):
    d = 2.0 * (x[0] - x[1])
    return np.array([d, -d, 2.0 * x[2]])


def _rel(a, b):
    return np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b)))


def test_rhs_main_hand_expansion(paper):
    # t = 1, q = 0, s = p = 0.5, c = 0.1, alpha = 3, theta = 1
    x, v, lam = np.array([1.0, -1.0, 1.0]), np.array([1.0, 1.0, 1.0]), np.array([1.0])
    # grad f(x) = (2*2, -2*2, 2) = (4, -4, 2); A^T lam = (1, -1, 1); eps = 0.1
    # dv = -3 v - ((4, -4, 2) + (1, -1, 1) + 0.1 x) = -3 - (5.1, -5.1, 3.1)
    dv = np.array([-8.1, 2.1, -6.1])
    # x + v = (2, 0, 2), so A(x + v) - b - eps lam = 4 - 2 - 0.1 = 1.9
    dlam = np.array([1.9])
    out = rhs_main(paper, ParameterSet(), 1.0, np.concatenate([x, v, lam]))
    np.testing.assert_allclose(out, np.concatenate([v, dv, dlam]), rtol=1e-14, atol=1e-14)


def test_rhs_main_general_time_hand_expansion(paper):
    params = ParameterSet(alpha=2.5, theta=0.7, c=0.3, p=0.4, q=0.2, s=0.3)
    t = 3.7
    y = np.array([0.3, -1.2, 2.0, 0.5, -0.25, 1.5, -0.8])
    x, v, lam = y[:3], y[3:6], y[6:]
    eps = 0.3 / t ** 0.4
    a = np.array([1.0, -1.0, 1.0])
    dv = -(2.5 / t ** 0.2) * v - t ** 0.3 * (_grad_paper(x) + a * lam[0] + eps * x)
    dlam = t ** 0.5 * (a @ (x + 0.7 * t ** 0.2 * v) - 2.0 - eps * lam)
    out = rhs_main(paper, params, t, y)
    assert _rel(out, np.concatenate([v, dv, dlam])) < 1e-14


def test_rhs_chbani_hand_expansion(paper):
    params = ParameterSet(p=0.5, c=0.1)
    t = 2.0
    y = np.array([1.0, -1.0, 1.0, 1.0, 1.0, 1.0, 1.0])
    x, v, lam = y[:3], y[3:6], y[6:]
    a = np.array([1.0, -1.0, 1.0])
    tp = np.sqrt(2.0)
    dv = -3.0 * v - tp * (_grad_paper(x) + a * lam[0]) - 0.1 * x
    dlam = tp * (a @ (x + v) - 2.0) - 0.1 * lam
    assert _rel(rhs_chbani(paper, params, t, y), np.concatenate([v, dv, dlam])) < 1e-14


def test_rhs_heode_hand_expansion(paper):
    he = HeParams(alpha=3.0, theta=1.0, rho=1.0, kappa=0.1, q=0.1, s=0.4)
    t = 1.0
    y = np.array([1.0, -1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0])
    # at t = 1 every power of t is 1: residual Ax - b = 3 - 2 = 1
    # grad_x L^rho at (x, lam + mu) = (4, -4, 2) + (2)(1, -1, 1) + 1*(1)(1, -1, 1) = (7, -7, 5)
    dv = -3.0 * np.ones(3) - np.array([7.0, -7.0, 5.0])
    # dmu = -3 mu + (A(x + v) - b) = -3 + (4 - 2) = -1
    expect = np.concatenate([np.ones(3), dv, [1.0], [-1.0]])
    np.testing.assert_allclose(rhs_heode(paper, he, t, y), expect, rtol=1e-14, atol=1e-14)


def test_heode_degenerate_case_reduces_to_plain_lagrangian(paper):
    he = HeParams(rho=0.0, theta=0.0, q=0.3, s=0.2)
    t = 4.0
    y = np.array([0.2, 0.1, -0.3, 0.5, 0.4, -0.1, 0.7, 0.9])
    out = rhs_heode(paper, he, t, y)
    x, v, lam = y[:3], y[3:6], y[6:7]
    dv = -(3.0 / t ** 0.3) * v - t ** 0.2 * (_grad_paper(x) + np.array([1.0, -1.0, 1.0]) * lam)
    assert _rel(out[3:6], dv) < 1e-14


def test_heode_kkt_point_is_equilibrium(paper):
    y = np.concatenate([X_STAR, np.zeros(3), LAMBDA_STAR, [0.0]])
    assert np.max(np.abs(rhs_heode(paper, HeParams(), 5.0, y))) < 1e-14


def test_heode_perturbation_hook(paper):
    y = np.concatenate([X_STAR, np.zeros(3), LAMBDA_STAR, [0.0]])
    out = rhs_heode(paper, HeParams(), 5.0, y, perturbation=lambda t: np.array([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(out[3:6], [1.0, 2.0, 3.0], atol=1e-14)


def test_frozen_saddle_is_stationary(paper):
    params = ParameterSet(q=0.1, s=0.65, p=0.6)
    for t in (1.0, 50.0, 1e4):
        sp = solve_saddle(paper, params.schedule, t)
        y = np.concatenate([sp.x_t, np.zeros(3), sp.lambda_t])
        out = rhs_main(paper, params, t, y)
        assert np.max(np.abs(out)) < 1e-12 * max(1.0, t ** (params.q + params.s))


def test_chbani_origin_equilibrium():
    inst = build_quadratic(np.eye(2), [0.0, 0.0], 0.0, [[1.0, 1.0]], [0.0])
    out = rhs_chbani(inst, ParameterSet(), 3.0, np.zeros(5))
    assert np.all(out == 0.0)


@given(st.floats(0.05, 0.95), st.floats(1.0, 1e4),
       st.lists(st.floats(-10, 10), min_size=7, max_size=7))
def test_main_specializes_to_chbani(p, t, state):
    inst = build_paper_problem()
    params = ParameterSet(p=p, q=0.0, s=p)
    y = np.array(state)
    a, b = rhs_main(inst, params, t, y), rhs_chbani(inst, params, t, y)
    assert _rel(a, b) <= 1e-14


def test_main_specializes_to_chbani_on_100_random_states(paper):
    rng = np.random.default_rng(0)
    for _ in range(100):
        p = rng.uniform(0.05, 0.95)
        t = np.exp(rng.uniform(0.0, np.log(1e4)))
        y = rng.standard_normal(7) * 3
        params = ParameterSet(p=p, q=0.0, s=p, c=rng.uniform(0.01, 1.0), alpha=rng.uniform(0.5, 5))
        assert _rel(rhs_main(paper, params, t, y), rhs_chbani(paper, params, t, y)) <= 1e-14


def test_rhs_is_pure(paper):
    y = np.linspace(-1, 1, 7)
    f = make_rhs("main", paper, ParameterSet(q=0.2))
    assert np.array_equal(f(2.0, y), f(2.0, y))


@pytest.mark.parametrize("rhs", [rhs_main, rhs_chbani])
def test_nonpositive_time_rejected(paper, rhs):
    with pytest.raises(NonpositiveTime):
        rhs(paper, ParameterSet(), 0.0, np.zeros(7))


def test_flow_state_pack_unpack():
    st_ = FlowState(np.array([1.0, 2.0]), np.array([3.0, 4.0]), np.array([5.0]), np.array([6.0]))
    y = st_.pack()
    back = FlowState.unpack(y, 2, 1)
    assert np.array_equal(back.mu, [6.0]) and np.array_equal(back.lam, [5.0])
    assert FlowState.unpack(y[:5], 2, 1).mu is None
    with pytest.raises(ValueError):
        FlowState(np.array([np.nan]), np.zeros(1), np.zeros(0)).pack()


def _names(**kw):
    return set(regime_names(classify_regime(ParameterSet(**kw))))


def test_regime_examples():
    assert _names(q=0.0, p=0.5, s=0.5) == {GAP_OPTIMAL, SLOW_REGIME}
    assert classify_regime(ParameterSet(q=0.0, p=0.5, s=0.5))[0].r == 0.0
    tags = classify_regime(ParameterSet(q=0.1, p=0.6, s=0.65))
    assert set(regime_names(tags)) == {SLOW_REGIME, IMPROVED_SLOW_REGIME}
    assert tags[0].r == pytest.approx(0.1)
    assert FAST_SADDLE_TRACKING not in _names(q=0.1, p=0.6, s=-0.3)
    assert FAST_SADDLE_TRACKING in _names(q=0.0, p=0.6, s=-0.35)
    assert _names(q=0.1, p=0.8, s=0.85) == {OUT_OF_THEORY}


def test_regime_boundaries_are_open_or_closed_as_stated():
    # GapOptimal upper end s = p - 2q is included, SlowRegime lower end is included
    assert GAP_OPTIMAL in _names(q=0.1, p=0.6, s=0.4)
    assert IMPROVED_SLOW_REGIME not in _names(q=0.1, p=0.6, s=0.4)
    assert SLOW_REGIME in _names(q=0.0, p=0.5, s=-0.25)
    assert FAST_SADDLE_TRACKING not in _names(q=0.0, p=0.5, s=-0.25)


@given(st.floats(0.0, 0.3), st.floats(0.05, 0.65), st.floats(-1.0, 1.0),
       st.floats(0.5, 10.0), st.floats(0.01, 5.0), st.floats(0.5, 5.0))
def test_classification_depends_only_on_p_q_s(q, p, s, alpha, c, t0):
    base = ParameterSet(q=q, p=p, s=s)
    other = ParameterSet(q=q, p=p, s=s, alpha=alpha, theta=1.0 / alpha + 1.0, c=c, t0=t0)
    assert regime_names(classify_regime(base)) == regime_names(classify_regime(other))


def test_assumption_violations():
    with pytest.raises(AssumptionViolated):
        classify_regime(ParameterSet(alpha=3.0, theta=0.2))
    with pytest.raises(AssumptionViolated):
        classify_regime(ParameterSet(p=0.6, q=0.5))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        tags = classify_regime(ParameterSet(p=0.6, q=0.5), strict=False)
    assert regime_names(tags) == (OUT_OF_THEORY,)
    assert caught
    assert ParameterSet().validate() == ParameterSet()
