import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import EXP1_START, LAMBDA_STAR, X_STAR
from tikhonov_flow.dynamics import (
    FAST_SADDLE_TRACKING, GAP_OPTIMAL, IMPROVED_SLOW_REGIME, SLOW_REGIME, ParameterSet,
)
from tikhonov_flow.errors import InsufficientSamples, NonPositiveValues, OutOfTheory, TimeMismatch
from tikhonov_flow.integrator import IntegratorConfig, Trajectory, integrate_system, make_log_grid
from tikhonov_flow.metrics import (
    METRIC_FIELDS, TrajectorySample, energy, fit_power_law, fit_rate, predict_rates, read_csv,
    sample_metrics, samples_to_csv_text, write_csv,
)
from tikhonov_flow.saddle import solve_saddle


def _energy_oracle(paper, params, t, x, v, lam):
    """Each of the four energy terms recomputed from the saddle point."""
    sp = solve_saddle(paper, params.schedule, t)
    eps = params.c / t ** params.p
    xt, lt = sp.x_t, sp.lambda_t

    def Lt(xx, ll):
        f = (xx[0] - xx[1]) ** 2 + xx[2] ** 2
        return f + ll[0] * (xx[0] - xx[1] + xx[2] - 2.0) + eps / 2 * (xx @ xx - ll @ ll)

    th, q, s, a = params.theta, params.q, params.s, params.alpha
    term1 = th ** 2 * t ** (2 * q + s) * (Lt(x, lt) - Lt(xt, lt))
    w = x - xt + th * t ** q * v
    term2 = 0.5 * (w @ w)
    term3 = (a * th - 1 - th * q * t ** (q - 1)) / 2 * ((x - xt) @ (x - xt))
    term4 = th / 2 * ((lam - lt) @ (lam - lt))
    return term1 + term2 + term3 + term4, sp


@pytest.mark.parametrize("params,t", [(ParameterSet(), 1.0),
                                      (ParameterSet(q=0.1, p=0.6, s=0.65), 3.0)])
def test_energy_matches_term_by_term_oracle(paper, params, t):
    x, v, lam = EXP1_START[:3], EXP1_START[3:6], EXP1_START[6:]
    expect, sp = _energy_oracle(paper, params, t, x, v, lam)
    got = energy(paper, params, t, EXP1_START, sp)
    assert abs(got - expect) <= 1e-12 * max(1.0, abs(expect))


def test_energy_vanishes_at_frozen_saddle(paper):
    params = ParameterSet()
    for t in (1.0, 10.0, 1e4):
        sp = solve_saddle(paper, params.schedule, t)
        y = np.concatenate([sp.x_t, np.zeros(3), sp.lambda_t])
        assert abs(energy(paper, params, t, y, sp)) <= 1e-12


def test_energy_q0_distance_coefficient_is_one(paper):
    # q = 0, alpha = 3, theta = 1: E = 0.5|dx|^2 + 1*|dx|^2 + gap term when v = 0, lambda = lambda_t
    params = ParameterSet()
    t = 5.0
    sp = solve_saddle(paper, params.schedule, t)
    dx = np.array([1e-3, 0.0, 0.0])
    y = np.concatenate([sp.x_t + dx, np.zeros(3), sp.lambda_t])
    eps = params.schedule.epsilon(t)
    gap = 0.5 * dx @ (paper.quadratic.Q + eps * np.eye(3)) @ dx
    expect = t ** 0.5 * gap + 0.5 * dx @ dx + 1.0 * dx @ dx
    assert energy(paper, params, t, y, sp) == pytest.approx(expect, rel=1e-9)


def test_energy_time_mismatch(paper):
    sp = solve_saddle(paper, ParameterSet().schedule, 2.0)
    with pytest.raises(TimeMismatch):
        energy(paper, ParameterSet(), 3.0, EXP1_START, sp)


def _short_run(paper, params=ParameterSet(), t_end=100.0, n=60):
    cfg = IntegratorConfig(sample_grid=make_log_grid(1.0, t_end, n))
    return integrate_system("main", paper, params, EXP1_START, t_end, cfg)


def test_sample_metrics_at_oracle_point(paper):
    y = np.concatenate([X_STAR, np.zeros(3), LAMBDA_STAR])
    traj = Trajectory(np.array([1.0]), y[None, :], dim_primal=3, dim_dual=1)
    (s,) = sample_metrics(paper, ParameterSet(), traj)
    assert s.feasibility == 0 and s.pd_gap == 0 and s.obj_residual == 0 and s.dist_minnorm == 0


def test_sample_metrics_inequalities_along_run(paper):
    samples = sample_metrics(paper, ParameterSet(), _short_run(paper))
    lam_star = np.linalg.norm(LAMBDA_STAR)
    for s in samples:
        assert s.pd_gap >= -1e-10
        assert s.obj_residual <= s.pd_gap + lam_star * s.feasibility + 1e-10
        assert s.reg_gap >= -1e-10
        assert s.energy >= -1e-9
        assert s.feasibility >= 0 and s.dist_saddle_x >= 0 and s.dist_saddle_lambda >= 0
        assert s.lemma32_g == pytest.approx(s.t ** 0.5 * s.feasibility, rel=1e-12)


def test_sample_metrics_without_oracle_or_saddle(paper):
    traj = _short_run(paper, t_end=10.0, n=10)
    bare = paper.with_oracle(None)
    samples = sample_metrics(bare, ParameterSet(), traj, saddle_terms=False)
    assert all(s.dist_minnorm is None and s.energy is None for s in samples)
    assert all(s.feasibility >= 0 for s in samples)


def _synthetic(fn, lo=1.0, hi=1e4, n=400):
    return [TrajectorySample(t, np.zeros(1), np.zeros(1), np.zeros(0), feasibility=fn(t),
                             speed_sq=1.0) for t in make_log_grid(lo, hi, n)]


def test_fit_exact_power_law():
    est = fit_rate(_synthetic(lambda t: 7 * t ** -1.5), "feasibility")
    assert abs(est.fitted_exponent - 1.5) < 1e-9
    assert est.r_squared == pytest.approx(1.0, abs=1e-12)
    assert est.window == (100.0, 1e4)


def test_fit_oscillating_prefactor():
    q = lambda t: (2 + np.sin(np.log(t))) / t
    # over whole periods of log t (here [pi/2, 9 pi/2]) the prefactor averages out
    lo, hi = np.exp(0.5 * np.pi), np.exp(4.5 * np.pi)
    est = fit_rate(_synthetic(q, lo=lo, hi=hi), "feasibility", window=(lo, hi))
    assert abs(est.fitted_exponent - 1.0) < 0.1
    # over [1e2, 1e4] (less than one period) the prefactor biases the OLS slope;
    # the bias equals an independent regression of log(2 + sin u) on u
    from scipy.stats import linregress

    samples = _synthetic(q)
    est = fit_rate(samples, "feasibility", window=(1e2, 1e4))
    u = np.log([s.t for s in samples if 1e2 <= s.t <= 1e4])
    bias = linregress(u, np.log(2 + np.sin(u))).slope
    assert est.fitted_exponent == pytest.approx(1.0 - bias, abs=1e-9)


def test_fit_constant():
    est = fit_rate(_synthetic(lambda t: 3.0), "speed_sq")
    assert abs(est.fitted_exponent) < 1e-12


def test_fit_errors_and_verdicts():
    with pytest.raises(InsufficientSamples):
        fit_rate(_synthetic(lambda t: 1 / t, n=15), "feasibility")
    with pytest.raises(NonPositiveValues):
        fit_rate(_synthetic(lambda t: np.sin(t)), "feasibility")
    with pytest.raises(InsufficientSamples):
        fit_rate(_synthetic(lambda t: 1 / t), "energy")
    est = fit_rate(_synthetic(lambda t: t ** -0.4), "feasibility", predicted=0.5)
    assert est.verdict() == "pass"
    est = fit_rate(_synthetic(lambda t: t ** -0.3), "feasibility", predicted=0.5)
    assert est.verdict() == "fail"
    assert fit_rate(_synthetic(lambda t: 1 / t), "feasibility").verdict() == "informational"


@given(st.floats(-2.0, 3.0), st.floats(0.01, 100.0))
def test_fit_recovers_any_exponent(beta, scale):
    t = make_log_grid(1.0, 1e4, 50)
    expo, r2 = fit_power_law(t, scale * t ** -beta)
    assert abs(expo - beta) < 1e-8


def test_predict_rates_examples():
    pr = predict_rates(ParameterSet(q=0.0, p=0.5, s=0.5))
    for k in ("feasibility", "pd_gap", "obj_residual"):
        assert pr.get(k) == pytest.approx(0.5)
        assert pr.sources[k] == GAP_OPTIMAL
    assert pr.r == 0.0
    pr = predict_rates(ParameterSet(q=0.1, p=0.6, s=0.65))
    assert pr.r == pytest.approx(0.1)
    assert pr.get("dist_saddle_x_sq") == pytest.approx(0.3)
    assert pr.sources["dist_saddle_x_sq"] == IMPROVED_SLOW_REGIME
    assert pr.get("pd_gap") == pytest.approx(0.15)
    assert pr.get("reg_gap") == pytest.approx(0.9)
    pr = predict_rates(ParameterSet(q=0.0, p=0.6, s=-0.35))
    assert pr.regimes == (FAST_SADDLE_TRACKING,)
    assert pr.get("dist_saddle_x_sq") == pytest.approx(0.1)
    assert pr.get("feasibility") == pytest.approx(min(0.6, 1 - 0.35 - 0.6))
    # (2p - 2 - 4q)/3 = -0.267 is not below s = -0.35, so no gap exponent from regime (i)
    assert pr.get("pd_gap") is None


def test_predict_rates_regime_two_formulas():
    p, q, s = 0.5, 0.1, 0.3
    pr = predict_rates(ParameterSet(p=p, q=q, s=s))
    r = max(q, p - q - s)
    assert SLOW_REGIME in pr.regimes
    assert pr.get("reg_gap") == pytest.approx(1 - r)
    assert pr.get("speed_sq") == pytest.approx(1 - s - r)
    assert pr.get("dist_saddle_lambda_sq") == pytest.approx(1 - 2 * q - s - r)


def test_predict_rates_out_of_theory():
    with pytest.raises(OutOfTheory):
        predict_rates(ParameterSet(q=0.1, p=0.8, s=0.85))


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(st.lists(st.tuples(finite, finite, finite, finite), min_size=1, max_size=5),
       st.booleans())
def test_csv_round_trip(rows, with_metrics):
    samples = []
    for i, (a, b, c, d) in enumerate(rows):
        extra = dict(zip(METRIC_FIELDS[1:], [a, b, c, d, a, b, c, d, a])) if with_metrics else {}
        extra.pop("speed_sq", None)
        samples.append(TrajectorySample(float(i + 1), np.array([a, b]), np.array([c, d]),
                                        np.array([a]), feasibility=abs(b), speed_sq=c * c,
                                        **extra))
    text = samples_to_csv_text(samples)
    back = read_csv(io.StringIO(text))
    for s, r in zip(samples, back):
        assert r.t == s.t
        assert np.array_equal(r.x, s.x) and np.array_equal(r.v, s.v)
        assert np.array_equal(r.lam, s.lam)
        for f in METRIC_FIELDS:
            assert getattr(r, f) == getattr(s, f)


def test_csv_file_round_trip(tmp_path, paper):
    samples = sample_metrics(paper, ParameterSet(), _short_run(paper, t_end=20.0, n=12))
    path = tmp_path / "traj.csv"
    write_csv(samples, path)
    back = read_csv(path)
    assert samples_to_csv_text(back) == path.read_text()
    assert path.read_text().splitlines()[0].startswith("t,x_0,x_1,x_2,v_0")
