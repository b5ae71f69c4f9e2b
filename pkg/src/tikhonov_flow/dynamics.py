"""Right-hand sides of the primal-dual flows in first-order form.

State layout is fixed: (x, v, lam) for the main and constant-damping
systems, (x, v, lam, mu) with mu = d lam/dt for the second-order dual system.

Main system, with eps(t) = c / t**p::

    x'' + (alpha / t^q) x' + t^s (grad f(x) + A^T lam + eps x) = 0
    lam' = t^(q+s) (A (x + theta t^q x') - b - eps lam)
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, fields, replace
from typing import Callable, Optional

import numpy as np

from .errors import AssumptionViolated, NonpositiveTime
from .saddle import RegularizationSchedule

SYSTEMS = ("main", "chbani", "heode")

FAST_SADDLE_TRACKING = "FastSaddleTracking"
SLOW_REGIME = "SlowRegime"
IMPROVED_SLOW_REGIME = "ImprovedSlowRegime"
GAP_OPTIMAL = "GapOptimal"
OUT_OF_THEORY = "OutOfTheory"

# Regime boundaries such as s = p - 2q are compared with this slack so that
# decimal inputs landing exactly on a boundary classify as written.
BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class ParameterSet:
    alpha: float = 3.0
    theta: float = 1.0
    c: float = 0.1
    p: float = 0.5
    q: float = 0.0
    s: float = 0.5
    t0: float = 1.0

    def assumption_violations(self):
        bad = []
        if not self.alpha > 0:
            bad.append(f"alpha > 0 fails (alpha={self.alpha})")
        elif not self.theta > 1.0 / self.alpha:
            bad.append(f"theta > 1/alpha fails (theta={self.theta}, alpha={self.alpha})")
        if not 0 <= self.q < 1:
            bad.append(f"0 <= q < 1 fails (q={self.q})")
        if not 0 < self.p < 1 - self.q:
            bad.append(f"0 < p < 1 - q fails (p={self.p}, q={self.q})")
        if not self.c > 0:
            bad.append(f"c > 0 fails (c={self.c})")
        if not self.t0 > 0:
            bad.append(f"t0 > 0 fails (t0={self.t0})")
        return bad

    def validate(self):
        bad = self.assumption_violations()
        if bad:
            raise AssumptionViolated("; ".join(bad))
        return self

    @property
    def schedule(self):
        return RegularizationSchedule(self.c, self.p)

    @property
    def r(self):
        return max(self.q, self.p - self.q - self.s)

    def replace(self, **kw):
        return replace(self, **kw)

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class HeParams:
    """Second-order dual comparison system; beta(t) = t^s, no Tikhonov terms."""

    alpha: float = 3.0
    theta: float = 1.0
    rho: float = 1.0
    kappa: float = 0.1
    q: float = 0.1
    s: float = 0.4
    t0: float = 1.0

    def replace(self, **kw):
        return replace(self, **kw)

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class FlowState:
    x: np.ndarray
    v: np.ndarray
    lam: np.ndarray
    mu: Optional[np.ndarray] = None

    def pack(self):
        parts = [self.x, self.v, self.lam] + ([self.mu] if self.mu is not None else [])
        y = np.concatenate([np.asarray(p, dtype=float).reshape(-1) for p in parts])
        if not np.all(np.isfinite(y)):
            raise ValueError("state has non-finite entries")
        return y

    @classmethod
    def unpack(cls, y, n, m):
        y = np.asarray(y)
        mu = y[2 * n + m:2 * n + 2 * m] if y.size == 2 * n + 2 * m else None
        return cls(y[:n], y[n:2 * n], y[2 * n:2 * n + m], mu)


@dataclass(frozen=True)
class RegimeTag:
    name: str
    r: Optional[float] = None


def _check_time(t):
    if t <= 0:
        raise NonpositiveTime(f"t must be positive, got {t}")


def rhs_main(instance, params, t, y):
    _check_time(t)
    n, m = instance.dim_primal, instance.dim_dual
    A, b = instance.A, instance.b
    x, v, lam = y[:n], y[n:2 * n], y[2 * n:2 * n + m]
    eps = params.c / t ** params.p
    tq = t ** params.q
    ts = t ** params.s
    dv = -(params.alpha / tq) * v - ts * (instance.gradient(x) + A.T @ lam + eps * x)
    dlam = tq * ts * (A @ (x + params.theta * tq * v) - b - eps * lam)
    return np.concatenate([v, dv, dlam])


def rhs_chbani(instance, params, t, y):
    """Constant damping, time scaling t^p and fixed Tikhonov weight c; uses alpha, theta, c, p."""
    _check_time(t)
    n, m = instance.dim_primal, instance.dim_dual
    A, b = instance.A, instance.b
    x, v, lam = y[:n], y[n:2 * n], y[2 * n:2 * n + m]
    tp = t ** params.p
    dv = -params.alpha * v - tp * (instance.gradient(x) + A.T @ lam) - params.c * x
    dlam = tp * (A @ (x + params.theta * v) - b) - params.c * lam
    return np.concatenate([v, dv, dlam])


def rhs_heode(instance, he, t, y, perturbation=None):
    """Second-order primal and dual equations on the augmented Lagrangian.

    ``perturbation`` is an optional callable t -> vector added to the primal
    acceleration; the default is zero.
    """
    _check_time(t)
    n, m = instance.dim_primal, instance.dim_dual
    A, b = instance.A, instance.b
    x, v, lam, mu = y[:n], y[n:2 * n], y[2 * n:2 * n + m], y[2 * n + m:]
    damp = he.alpha / t ** he.q
    beta = t ** he.s
    tk = t ** he.kappa
    lam_ex = lam + he.theta * tk * mu
    grad_x = instance.gradient(x) + A.T @ lam_ex + he.rho * (A.T @ (A @ x - b))
    dv = -damp * v - beta * grad_x
    if perturbation is not None:
        dv = dv + perturbation(t)
    dmu = -damp * mu + beta * (A @ (x + he.theta * tk * v) - b)
    return np.concatenate([v, dv, mu, dmu])


def make_rhs(system, instance, params, perturbation=None):
    """Bind a system to an instance; returns ``f(t, y)``."""
    if system == "main":
        return lambda t, y: rhs_main(instance, params, t, y)
    if system == "chbani":
        return lambda t, y: rhs_chbani(instance, params, t, y)
    if system == "heode":
        return lambda t, y: rhs_heode(instance, params, t, y, perturbation)
    raise ValueError(f"unknown system {system!r}; expected one of {SYSTEMS}")


def lt(a, b):
    """a < b, with values within BOUNDARY_TOL treated as equal."""
    return a < b - BOUNDARY_TOL


def le(a, b):
    return a <= b + BOUNDARY_TOL


def regime_bounds(p, q):
    """Open/closed s-intervals per theorem as (lo, hi) pairs."""
    return {
        FAST_SADDLE_TRACKING: (p - q - 1, (p - 3 * q - 1) / 2),
        SLOW_REGIME: ((p - 3 * q - 1) / 2, 1 - 3 * q),
        IMPROVED_SLOW_REGIME: (p - 2 * q, 1 - 3 * q),
        GAP_OPTIMAL: (-2 * q, p - 2 * q),
    }


def classify_regime(params, strict=True):
    """All theorem regimes containing (p, q, s).

    Raises AssumptionViolated when the standing parameter assumption fails,
    unless ``strict`` is false, in which case a warning is issued and the
    result is the single OutOfTheory tag.
    """
    bad = params.assumption_violations()
    if bad:
        if strict:
            raise AssumptionViolated("; ".join(bad))
        warnings.warn("parameter assumption fails: " + "; ".join(bad), stacklevel=2)
        return (RegimeTag(OUT_OF_THEORY),)
    p, q, s = params.p, params.q, params.s
    r = max(q, p - q - s)
    bounds = regime_bounds(p, q)
    tags = []
    lo, hi = bounds[FAST_SADDLE_TRACKING]
    if lt(lo, s) and lt(s, hi):
        tags.append(RegimeTag(FAST_SADDLE_TRACKING, r))
    lo, hi = bounds[SLOW_REGIME]
    if le(lo, s) and lt(s, hi):
        tags.append(RegimeTag(SLOW_REGIME, r))
    lo, hi = bounds[IMPROVED_SLOW_REGIME]
    if lt(lo, s) and lt(s, hi):
        tags.append(RegimeTag(IMPROVED_SLOW_REGIME, r))
    lo, hi = bounds[GAP_OPTIMAL]
    if lt(lo, s) and le(s, hi):
        tags.append(RegimeTag(GAP_OPTIMAL, r))
    if not tags:
        return (RegimeTag(OUT_OF_THEORY),)
    return tuple(tags)


def regime_names(tags):
    return tuple(t.name for t in tags)


def param_fields(cls):
    return [f.name for f in fields(cls)]
