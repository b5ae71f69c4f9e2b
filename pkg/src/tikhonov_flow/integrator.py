"""Adaptive Bogacki-Shampine 3(2) integration with dense grid output.

The third-order solution advances the state; the embedded second-order
solution only feeds the error estimate. Step sizes follow a PI controller
(safety 0.9, integral/proportional gains 0.3/k and 0.4/k with k = 3, growth
clamped to [0.2, 5]). Grid values come from cubic Hermite interpolation on
the accepted step that brackets them.

``integrate`` accepts any Python callable. Quadratic instances can use
``integrate_system``, which routes to a compiled kernel running the same
algorithm.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import BadSpan, MaxStepsExceeded, NonFiniteState, StepUnderflow

# Butcher tableau of the 3(2) pair.
A21 = 1.0 / 2.0
A32 = 3.0 / 4.0
B1, B2, B3 = 2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0
E1, E2, E3, E4 = -5.0 / 72.0, 1.0 / 12.0, 1.0 / 9.0, -1.0 / 8.0

SAFETY = 0.9
ORDER_K = 3.0
K_I = 0.3 / ORDER_K
K_P = 0.4 / ORDER_K
FAC_MIN = 0.2
FAC_MAX = 5.0
ERR_FLOOR = 1e-4


@dataclass
class IntegratorConfig:
    rtol: float = 1e-8
    atol: float = 1e-10
    h_init: Optional[float] = None
    h_min: float = 1e-12
    h_max: Optional[float] = None
    max_steps: int = 50_000_000
    sample_grid: Optional[Sequence[float]] = None

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if self.h_init is not None and not self.h_init > 0:
            raise ValueError("h_init must be positive")
        if not self.h_min > 0:
            raise ValueError("h_min must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")

    def grid(self, t0, t_end):
        if self.sample_grid is None:
            return np.array([t0, t_end], dtype=float)
        g = np.asarray(self.sample_grid, dtype=float)
        if g.ndim != 1 or g.size == 0:
            raise BadSpan("sample grid must be a nonempty vector")
        if np.any(np.diff(g) <= 0):
            raise BadSpan("sample grid must be strictly increasing")
        if g[0] < t0 or g[-1] > t_end:
            raise BadSpan(f"sample grid leaves the span [{t0}, {t_end}]")
        return g

    def step_cap(self, t0, t_end):
        return self.h_max if self.h_max is not None else 0.1 * (t_end - t0)


@dataclass
class IntegratorStats:
    n_accepted: int = 0
    n_rejected: int = 0
    n_rhs: int = 0
    final_h: float = float("nan")


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    stats: IntegratorStats = field(default_factory=IntegratorStats)
    dim_primal: Optional[int] = None
    dim_dual: Optional[int] = None

    def __len__(self):
        return self.times.size

    def flow_state(self, i):
        from .dynamics import FlowState

        return FlowState.unpack(self.states[i], self.dim_primal, self.dim_dual)


def make_log_grid(t0, t_end, n_points):
    """``n_points`` geometrically spaced times with exact endpoints."""
    if not (t_end > t0 > 0):
        raise BadSpan(f"need t_end > t0 > 0, got t0={t0}, t_end={t_end}")
    if n_points < 2:
        raise BadSpan("a grid needs at least two points")
    g = np.geomspace(t0, t_end, n_points)
    g[0], g[-1] = t0, t_end
    return g


def hermite(theta, h, y0, y1, f0, f1):
    t2 = theta * theta
    t3 = t2 * theta
    return ((2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + theta) * h * f0
            + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * h * f1)


def bs23_step(rhs, t, y, h, k1):
    """One step of the pair.

    Returns ``(y_new, err_vec, k4, n_evals)`` where ``err_vec`` is the
    difference between the third- and second-order solutions and ``k4`` is
    the slope at the new point (first stage of the next step).
    """
    k2 = rhs(t + A21 * h, y + (A21 * h) * k1)
    k3 = rhs(t + A32 * h, y + (A32 * h) * k2)
    y_new = y + h * (B1 * k1 + B2 * k2 + B3 * k3)
    k4 = rhs(t + h, y_new)
    err = h * (E1 * k1 + E2 * k2 + E3 * k3 + E4 * k4)
    return y_new, err, k4, 3


def error_norm(err, y, y_new, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.max(np.abs(err) / scale)) if err.size else 0.0


def initial_step(rhs, t0, y0, f0, rtol, atol, h_cap):
    """Curvature-based starting step (one extra RHS evaluation)."""
    sc = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / sc) ** 2))
    d1 = np.sqrt(np.mean((f0 / sc) ** 2))
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, h_cap)
    f1 = rhs(t0 + h0, y0 + h0 * f0)
    d2 = np.sqrt(np.mean(((f1 - f0) / sc) ** 2)) / h0
    dmax = max(d1, d2)
    h1 = max(1e-6, h0 * 1e-3) if dmax <= 1e-15 else (0.01 / dmax) ** (1.0 / ORDER_K)
    return min(100 * h0, h1, h_cap)


def integrate(rhs, t0, t_end, state0, config=None):
    """Integrate ``y' = rhs(t, y)`` from ``t0`` to ``t_end``.

    Returns a Trajectory whose ``times`` equal the configured sample grid
    (``[t0, t_end]`` when none is given).
    """
    config = config or IntegratorConfig()
    if not (t_end > t0 > 0):
        raise BadSpan(f"need t_end > t0 > 0, got t0={t0}, t_end={t_end}")
    y = np.array(state0, dtype=float).reshape(-1)
    if not np.all(np.isfinite(y)):
        raise NonFiniteState("initial state is not finite", t=t0)
    grid = config.grid(t0, t_end)
    out = np.empty((grid.size, y.size))
    stats = IntegratorStats()
    rtol, atol = config.rtol, config.atol
    h_cap = config.step_cap(t0, t_end)

    gi = 0
    while gi < grid.size and grid[gi] <= t0:
        out[gi] = y
        gi += 1

    t = t0
    k1 = rhs(t, y)
    stats.n_rhs += 1
    if config.h_init is not None:
        h = min(config.h_init, h_cap)
    else:
        h = initial_step(rhs, t, y, k1, rtol, atol, h_cap)
        stats.n_rhs += 1
    err_prev = 1.0
    rejected_last = False

    while t < t_end:
        if stats.n_accepted + stats.n_rejected >= config.max_steps:
            raise MaxStepsExceeded(f"max_steps={config.max_steps} reached at t={t}", t=t)
        if h < config.h_min:
            raise StepUnderflow(f"step size {h:.3e} below h_min at t={t}", t=t)
        last = t + h >= t_end
        if last:
            h = t_end - t
        with np.errstate(invalid="ignore", over="ignore"):
            y_new, err_vec, k4, nev = bs23_step(rhs, t, y, h, k1)
        stats.n_rhs += nev
        if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(k4))):
            raise NonFiniteState(f"non-finite state after t={t}", t=t)
        err = error_norm(err_vec, y, y_new, rtol, atol)
        if err <= 1.0:
            t_new = t_end if last else t + h
            while gi < grid.size and grid[gi] <= t_new:
                if grid[gi] == t_new:
                    out[gi] = y_new
                else:
                    out[gi] = hermite((grid[gi] - t) / h, h, y, y_new, k1, k4)
                gi += 1
            stats.n_accepted += 1
            stats.final_h = h
            err_c = max(err, ERR_FLOOR)
            fac = SAFETY * err_c ** (-(K_I + K_P)) * err_prev ** K_P
            fac = min(FAC_MAX, max(FAC_MIN, fac))
            if rejected_last:
                fac = min(fac, 1.0)
            err_prev = err_c
            rejected_last = False
            t, y, k1 = t_new, y_new, k4
            h = min(h * fac, h_cap)
        else:
            stats.n_rejected += 1
            rejected_last = True
            h *= max(FAC_MIN, SAFETY * err ** (-1.0 / ORDER_K))
    return Trajectory(grid, out, stats)


def integrate_fixed(rhs, t0, t_end, state0, n_steps, embedded=False):
    """Fixed-step run of the pair; ``embedded`` propagates the second-order member."""
    y = np.array(state0, dtype=float).reshape(-1)
    h = (t_end - t0) / n_steps
    t = t0
    k1 = rhs(t, y)
    for _ in range(n_steps):
        y_new, err, k4, _ = bs23_step(rhs, t, y, h, k1)
        if embedded:
            y_new = y_new - err
            k4 = rhs(t + h, y_new)
        t, y, k1 = t + h, y_new, k4
    return y


def integrate_system(system, instance, params, state0, t_end, config=None, perturbation=None,
                     force_python=False):
    """Integrate one of the named flows on ``instance`` from ``params.t0``.

    Quadratic instances without a perturbation hook use the compiled kernel;
    everything else goes through ``integrate`` with the Python RHS.
    """
    from .dynamics import make_rhs

    config = config or IntegratorConfig()
    t0 = params.t0
    if instance.quadratic is not None and perturbation is None and not force_python:
        from ._kernels import integrate_quadratic

        traj = integrate_quadratic(system, instance, params, t0, t_end, state0, config)
    else:
        traj = integrate(make_rhs(system, instance, params, perturbation), t0, t_end,
                         state0, config)
    traj.dim_primal = instance.dim_primal
    traj.dim_dual = instance.dim_dual
    return traj
