"""Quantities tracked along trajectories, rate fits and rate predictions."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Sequence

import numpy as np

from .dynamics import (
    FAST_SADDLE_TRACKING, GAP_OPTIMAL, IMPROVED_SLOW_REGIME, OUT_OF_THEORY, SLOW_REGIME,
    ParameterSet, classify_regime, lt,
)
from .errors import InsufficientSamples, NonPositiveValues, OutOfTheory, TimeMismatch
from .saddle import lagrangian, regularized_lagrangian, solve_saddle

MIN_FIT_SAMPLES = 10
SLOPE_TOLERANCE = 0.15

ORACLE_FIELDS = ("obj_residual", "pd_gap", "dist_minnorm")
SADDLE_FIELDS = ("dist_saddle_x", "dist_saddle_lambda", "reg_gap", "energy", "lemma32_g")
METRIC_FIELDS = ("feasibility", "obj_residual", "pd_gap", "dist_minnorm", "dist_saddle_x",
                 "dist_saddle_lambda", "reg_gap", "energy", "speed_sq", "lemma32_g")


@dataclass(eq=False)
class TrajectorySample:
    t: float
    x: np.ndarray
    v: np.ndarray
    lam: np.ndarray
    feasibility: float
    speed_sq: float
    obj_residual: Optional[float] = None
    pd_gap: Optional[float] = None
    dist_minnorm: Optional[float] = None
    dist_saddle_x: Optional[float] = None
    dist_saddle_lambda: Optional[float] = None
    reg_gap: Optional[float] = None
    energy: Optional[float] = None
    lemma32_g: Optional[float] = None

    def value(self, quantity):
        """Metric by name; a ``_sq`` suffix squares the base metric."""
        if quantity.endswith("_sq") and quantity != "speed_sq":
            base = getattr(self, quantity[:-3])
            return None if base is None else base * base
        return getattr(self, quantity)


def energy(instance, params, t, state, saddle):
    """Lyapunov energy of the main flow at time t relative to the saddle point."""
    if saddle.t != t:
        raise TimeMismatch(f"saddle point is for t={saddle.t}, energy requested at t={t}")
    n, m = instance.dim_primal, instance.dim_dual
    y = np.asarray(state, dtype=float)
    x, v, lam = y[:n], y[n:2 * n], y[2 * n:2 * n + m]
    theta, q, s, alpha = params.theta, params.q, params.s, params.alpha
    sched = params.schedule
    gap = (regularized_lagrangian(instance, sched, t, x, saddle.lambda_t)
           - regularized_lagrangian(instance, sched, t, saddle.x_t, saddle.lambda_t))
    dx = x - saddle.x_t
    anchored = dx + theta * t ** q * v
    coef = (alpha * theta - 1.0 - theta * q * t ** (q - 1.0)) / 2.0
    dl = lam - saddle.lambda_t
    return float(theta ** 2 * t ** (2 * q + s) * gap + 0.5 * anchored @ anchored
                 + coef * dx @ dx + 0.5 * theta * dl @ dl)


def sample_metrics(instance, params, trajectory, oracle=None, saddle_terms=True):
    """Per-sample metrics along a trajectory of the main or constant-damping flow.

    ``params`` supplies the regularization schedule and the energy weights.
    Pass ``saddle_terms=False`` (e.g. for the comparison flow, which has no
    Tikhonov schedule) to leave the saddle-dependent fields empty.
    """
    oracle = oracle if oracle is not None else instance.oracle
    n, m = instance.dim_primal, instance.dim_dual
    if oracle is not None:
        x_star, l_star = oracle.min_norm_primal, oracle.min_norm_dual
        L_star = lagrangian(instance, x_star, l_star)
    sched = params.schedule if saddle_terms else None
    out = []
    prev = None
    for t, y in zip(trajectory.times, trajectory.states):
        t = float(t)
        x, v, lam = y[:n].copy(), y[n:2 * n].copy(), y[2 * n:2 * n + m].copy()
        res = instance.residual(x)
        smp = TrajectorySample(t, x, v, lam, feasibility=float(np.linalg.norm(res)),
                               speed_sq=float(v @ v))
        if oracle is not None:
            smp.obj_residual = float(abs(instance.objective(x) - oracle.optimal_value))
            smp.pd_gap = float(lagrangian(instance, x, l_star) - L_star)
            smp.dist_minnorm = float(np.sqrt(np.sum((x - x_star) ** 2) + np.sum((lam - l_star) ** 2)))
        if sched is not None:
            sp = solve_saddle(instance, sched, t, warm_start=prev)
            prev = sp
            smp.dist_saddle_x = float(np.linalg.norm(x - sp.x_t))
            smp.dist_saddle_lambda = float(np.linalg.norm(lam - sp.lambda_t))
            smp.reg_gap = float(regularized_lagrangian(instance, sched, t, x, sp.lambda_t)
                                - regularized_lagrangian(instance, sched, t, sp.x_t, sp.lambda_t))
            smp.energy = energy(instance, params, t, y[:2 * n + m], sp)
            smp.lemma32_g = float(np.linalg.norm(params.theta * t ** (2 * params.q + params.s) * res))
        out.append(smp)
    return out


@dataclass
class RateEstimate:
    quantity: str
    fitted_exponent: float
    r_squared: float
    window: tuple
    predicted_exponent: Optional[float] = None
    n_samples: int = 0

    def verdict(self, tolerance=SLOPE_TOLERANCE):
        if self.predicted_exponent is None:
            return "informational"
        return "pass" if self.fitted_exponent >= self.predicted_exponent - tolerance else "fail"


def fit_power_law(t, y):
    """OLS of log y on log t; returns (decay exponent, r^2)."""
    lt, ly = np.log(t), np.log(y)
    slope, intercept = np.polyfit(lt, ly, 1)
    resid = ly - (slope * lt + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return -float(slope), max(0.0, min(1.0, r2))


def fit_rate(samples, quantity, window=None, predicted=None):
    """Empirical decay exponent of ``quantity`` over ``window`` (default: last two decades)."""
    times = np.array([s.t for s in samples], dtype=float)
    if window is None:
        window = (times[-1] / 100.0, times[-1])
    lo, hi = window
    sel = [(s.t, s.value(quantity)) for s in samples if lo <= s.t <= hi]
    if any(v is None for _, v in sel):
        raise InsufficientSamples(f"{quantity} is not available on these samples")
    if len(sel) < MIN_FIT_SAMPLES:
        raise InsufficientSamples(
            f"{len(sel)} samples of {quantity} in [{lo:g}, {hi:g}]; need {MIN_FIT_SAMPLES}")
    t = np.array([a for a, _ in sel])
    y = np.array([b for _, b in sel], dtype=float)
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise NonPositiveValues(f"{quantity} has non-positive values in [{lo:g}, {hi:g}]")
    expo, r2 = fit_power_law(t, y)
    return RateEstimate(quantity, expo, r2, (float(lo), float(hi)), predicted, len(sel))


@dataclass
class RatePrediction:
    """Strongest theorem exponent per quantity, with the regime that supplies it."""

    exponents: Dict[str, float]
    sources: Dict[str, str]
    regimes: tuple
    r: float

    def get(self, quantity):
        return self.exponents.get(quantity)


RATE_QUANTITIES = ("reg_gap", "dist_saddle_x_sq", "dist_saddle_lambda_sq", "speed_sq",
                   "feasibility", "pd_gap", "obj_residual")


def _candidates(params, regimes):
    p, q, s = params.p, params.q, params.s
    r = max(q, p - q - s)
    out = []
    if FAST_SADDLE_TRACKING in regimes:
        e = 2 * (1 + s + q - p)
        out += [("dist_saddle_x_sq", e), ("dist_saddle_lambda_sq", e),
                ("speed_sq", 2 * (1 + s + 2 * q - p)), ("feasibility", min(p, 1 + s + q - p))]
        if lt((2 * p - 2 - 4 * q) / 3, s):
            g = 4 * q + 3 * s - 2 * p + 2
            out += [("reg_gap", g), ("pd_gap", min(p, g)), ("obj_residual", min(p, g))]
        out = [(k, v, FAST_SADDLE_TRACKING) for k, v in out]
    if SLOW_REGIME in regimes:
        d = 1 - 2 * q - s - r
        g = min(p, d / 2)
        out += [(k, v, SLOW_REGIME) for k, v in
                [("reg_gap", 1 - r), ("dist_saddle_x_sq", d), ("dist_saddle_lambda_sq", d),
                 ("speed_sq", 1 - s - r), ("pd_gap", g), ("obj_residual", g), ("feasibility", g)]]
    if IMPROVED_SLOW_REGIME in regimes:
        g = min(p, (1 - (p + q)) / 2)
        out += [(k, v, IMPROVED_SLOW_REGIME) for k, v in
                [("dist_saddle_x_sq", 1 - (p + q)), ("pd_gap", g), ("obj_residual", g),
                 ("feasibility", g)]]
    if GAP_OPTIMAL in regimes:
        g = 2 * q + s
        out += [(k, g, GAP_OPTIMAL) for k in ("pd_gap", "obj_residual", "feasibility")]
    return out


def predict_rates(params, regimes=None):
    """Theorem decay exponents; the largest applicable one wins per quantity."""
    if regimes is None:
        regimes = tuple(t.name for t in classify_regime(params))
    if not regimes or OUT_OF_THEORY in regimes:
        raise OutOfTheory(f"no theorem covers p={params.p}, q={params.q}, s={params.s}")
    exps, src = {}, {}
    for k, v, name in _candidates(params, regimes):
        if k not in exps or v > exps[k]:
            exps[k], src[k] = v, name
    return RatePrediction(exps, src, tuple(regimes), max(params.q, params.p - params.q - params.s))


# --- trajectory CSV -----------------------------------------------------------

def csv_header(n, m):
    return (["t"] + [f"x_{i}" for i in range(n)] + [f"v_{i}" for i in range(n)]
            + [f"lambda_{k}" for k in range(m)] + list(METRIC_FIELDS))


def _fmt(v):
    return "" if v is None else format(float(v), ".17g")


def write_csv(samples, path_or_buffer, n=None, m=None):
    n = samples[0].x.size if n is None else n
    m = samples[0].lam.size if m is None else m
    own = not hasattr(path_or_buffer, "write")
    fh = open(path_or_buffer, "w", newline="") if own else path_or_buffer
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(n, m))
        for s in samples:
            row = [_fmt(s.t)] + [_fmt(a) for a in s.x] + [_fmt(a) for a in s.v]
            row += [_fmt(a) for a in s.lam] + [_fmt(getattr(s, f)) for f in METRIC_FIELDS]
            w.writerow(row)
    finally:
        if own:
            fh.close()


def read_csv(path_or_buffer):
    own = not hasattr(path_or_buffer, "read")
    fh = open(path_or_buffer, newline="") if own else path_or_buffer
    try:
        rows = list(csv.reader(fh))
    finally:
        if own:
            fh.close()
    header = rows[0]
    n = sum(1 for h in header if h.startswith("x_"))
    m = sum(1 for h in header if h.startswith("lambda_"))
    out = []
    for row in rows[1:]:
        vals = [None if c == "" else float(c) for c in row]
        x = np.array(vals[1:1 + n])
        v = np.array(vals[1 + n:1 + 2 * n])
        lam = np.array(vals[1 + 2 * n:1 + 2 * n + m])
        metrics = dict(zip(METRIC_FIELDS, vals[1 + 2 * n + m:]))
        out.append(TrajectorySample(vals[0], x, v, lam, **metrics))
    return out


def samples_to_csv_text(samples):
    buf = io.StringIO()
    write_csv(samples, buf)
    return buf.getvalue()
