"""Compiled Bogacki-Shampine kernel for quadratic objectives.

Mirrors ``integrator.integrate`` step for step; the Python version stays the
reference and the two are cross-checked in the test suite. Long horizons on
the main flow need tens of millions of stability-limited steps, which is out
of reach for interpreted code.
"""

import numpy as np
from numba import njit

from .errors import BadSpan, MaxStepsExceeded, NonFiniteState, StepUnderflow
from .integrator import (
    A21, A32, B1, B2, B3, E1, E2, E3, E4, ERR_FLOOR, FAC_MAX, FAC_MIN, K_I, K_P, ORDER_K,
    SAFETY, IntegratorStats, Trajectory, initial_step,
)

KIND = {"main": 0, "chbani": 1, "heode": 2}

OK, UNDERFLOW, MAXSTEPS, NONFINITE = 0, 1, 2, 3


@njit(cache=True)
def _rhs(kind, t, y, Q, ql, A, b, prm, n, m, out):
    if kind == 0:
        alpha, theta, c, p, q, s = prm[0], prm[1], prm[2], prm[3], prm[4], prm[5]
        eps = c / t ** p
        tq = t ** q
        ts = t ** s
        for i in range(n):
            out[i] = y[n + i]
        for i in range(n):
            g = 0.0
            for j in range(n):
                g += Q[i, j] * y[j]
            g += ql[i]
            for k in range(m):
                g += A[k, i] * y[2 * n + k]
            g += eps * y[i]
            out[n + i] = -(alpha / tq) * y[n + i] - ts * g
        for k in range(m):
            r = 0.0
            for j in range(n):
                r += A[k, j] * (y[j] + theta * tq * y[n + j])
            out[2 * n + k] = tq * ts * (r - b[k] - eps * y[2 * n + k])
    elif kind == 1:
        alpha, theta, c, p = prm[0], prm[1], prm[2], prm[3]
        tp = t ** p
        for i in range(n):
            out[i] = y[n + i]
        for i in range(n):
            g = 0.0
            for j in range(n):
                g += Q[i, j] * y[j]
            g += ql[i]
            for k in range(m):
                g += A[k, i] * y[2 * n + k]
            out[n + i] = -alpha * y[n + i] - tp * g - c * y[i]
        for k in range(m):
            r = 0.0
            for j in range(n):
                r += A[k, j] * (y[j] + theta * y[n + j])
            out[2 * n + k] = tp * (r - b[k]) - c * y[2 * n + k]
    else:
        alpha, theta, rho, kappa, q, s = prm[0], prm[1], prm[2], prm[3], prm[4], prm[5]
        damp = alpha / t ** q
        beta = t ** s
        tk = t ** kappa
        for i in range(n):
            out[i] = y[n + i]
        for k in range(m):
            out[2 * n + k] = y[2 * n + m + k]
        for i in range(n):
            g = 0.0
            for j in range(n):
                g += Q[i, j] * y[j]
            g += ql[i]
            for k in range(m):
                res = 0.0
                for j in range(n):
                    res += A[k, j] * y[j]
                res -= b[k]
                g += A[k, i] * (y[2 * n + k] + theta * tk * y[2 * n + m + k] + rho * res)
            out[n + i] = -damp * y[n + i] - beta * g
        for k in range(m):
            r = 0.0
            for j in range(n):
                r += A[k, j] * (y[j] + theta * tk * y[n + j])
            out[2 * n + m + k] = -damp * y[2 * n + m + k] + beta * (r - b[k])


@njit(cache=True)
def _bs23(kind, Q, ql, A, b, prm, t0, t_end, y0, grid, rtol, atol, h, h_min, h_cap,
          max_steps, k1):
    n = Q.shape[0]
    m = A.shape[0]
    d = y0.size
    out = np.empty((grid.size, d))
    y = y0.copy()
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    tmp = np.empty(d)
    y_new = np.empty(d)
    n_acc = 0
    n_rej = 0
    n_rhs = 0
    final_h = np.nan
    gi = 0
    while gi < grid.size and grid[gi] <= t0:
        out[gi, :] = y
        gi += 1
    t = t0
    err_prev = 1.0
    rejected_last = False
    status = OK
    while t < t_end:
        if n_acc + n_rej >= max_steps:
            status = MAXSTEPS
            break
        if h < h_min:
            status = UNDERFLOW
            break
        last = t + h >= t_end
        if last:
            h = t_end - t
        for i in range(d):
            tmp[i] = y[i] + (A21 * h) * k1[i]
        _rhs(kind, t + A21 * h, tmp, Q, ql, A, b, prm, n, m, k2)
        for i in range(d):
            tmp[i] = y[i] + (A32 * h) * k2[i]
        _rhs(kind, t + A32 * h, tmp, Q, ql, A, b, prm, n, m, k3)
        for i in range(d):
            y_new[i] = y[i] + h * (B1 * k1[i] + B2 * k2[i] + B3 * k3[i])
        _rhs(kind, t + h, y_new, Q, ql, A, b, prm, n, m, k4)
        n_rhs += 3
        err = 0.0
        finite = True
        for i in range(d):
            if not (np.isfinite(y_new[i]) and np.isfinite(k4[i])):
                finite = False
            e = h * (E1 * k1[i] + E2 * k2[i] + E3 * k3[i] + E4 * k4[i])
            sc = atol + rtol * max(abs(y[i]), abs(y_new[i]))
            err = max(err, abs(e) / sc)
        if not finite:
            status = NONFINITE
            break
        if err <= 1.0:
            t_new = t_end if last else t + h
            while gi < grid.size and grid[gi] <= t_new:
                if grid[gi] == t_new:
                    out[gi, :] = y_new
                else:
                    th = (grid[gi] - t) / h
                    t2 = th * th
                    t3 = t2 * th
                    for i in range(d):
                        out[gi, i] = ((2 * t3 - 3 * t2 + 1) * y[i] + (t3 - 2 * t2 + th) * h * k1[i]
                                      + (-2 * t3 + 3 * t2) * y_new[i] + (t3 - t2) * h * k4[i])
                gi += 1
            n_acc += 1
            final_h = h
            err_c = max(err, ERR_FLOOR)
            fac = SAFETY * err_c ** (-(K_I + K_P)) * err_prev ** K_P
            fac = min(FAC_MAX, max(FAC_MIN, fac))
            if rejected_last:
                fac = min(fac, 1.0)
            err_prev = err_c
            rejected_last = False
            t = t_new
            for i in range(d):
                y[i] = y_new[i]
                k1[i] = k4[i]
            h = min(h * fac, h_cap)
        else:
            n_rej += 1
            rejected_last = True
            h *= max(FAC_MIN, SAFETY * err ** (-1.0 / ORDER_K))
    return out, status, t, n_acc, n_rej, n_rhs, final_h, h


def _prm(system, params):
    if system == "main":
        vals = [params.alpha, params.theta, params.c, params.p, params.q, params.s]
    elif system == "chbani":
        vals = [params.alpha, params.theta, params.c, params.p]
    elif system == "heode":
        vals = [params.alpha, params.theta, params.rho, params.kappa, params.q, params.s]
    else:
        raise ValueError(f"unknown system {system!r}")
    return np.array(vals, dtype=float)


def integrate_quadratic(system, instance, params, t0, t_end, state0, config):
    if not (t_end > t0 > 0):
        raise BadSpan(f"need t_end > t0 > 0, got t0={t0}, t_end={t_end}")
    quad = instance.quadratic
    kind = KIND[system]
    prm = _prm(system, params)
    Q = np.ascontiguousarray(quad.Q, dtype=float)
    ql = np.ascontiguousarray(quad.linear_term, dtype=float)
    A = np.ascontiguousarray(instance.A, dtype=float).reshape(instance.dim_dual, instance.dim_primal)
    b = np.ascontiguousarray(instance.b, dtype=float)
    y0 = np.array(state0, dtype=float).reshape(-1)
    if not np.all(np.isfinite(y0)):
        raise NonFiniteState("initial state is not finite", t=t0)
    grid = config.grid(t0, t_end)
    h_cap = config.step_cap(t0, t_end)

    def rhs(t, y):
        out = np.empty_like(y)
        _rhs(kind, t, y, Q, ql, A, b, prm, instance.dim_primal, instance.dim_dual, out)
        return out

    k1 = rhs(t0, y0)
    n_init = 1
    if config.h_init is not None:
        h = min(config.h_init, h_cap)
    else:
        h = initial_step(rhs, t0, y0, k1, config.rtol, config.atol, h_cap)
        n_init += 1
    out, status, t, n_acc, n_rej, n_rhs, final_h, h = _bs23(
        kind, Q, ql, A, b, prm, float(t0), float(t_end), y0, grid, config.rtol, config.atol,
        float(h), config.h_min, float(h_cap), int(config.max_steps), k1.copy())
    if status == UNDERFLOW:
        raise StepUnderflow(f"step size {h:.3e} below h_min at t={t}", t=t)
    if status == MAXSTEPS:
        raise MaxStepsExceeded(f"max_steps={config.max_steps} reached at t={t}", t=t)
    if status == NONFINITE:
        raise NonFiniteState(f"non-finite state after t={t}", t=t)
    stats = IntegratorStats(n_acc, n_rej, n_rhs + n_init, final_h)
    return Trajectory(grid, out, stats)


def python_rhs(system, instance, params):
    """The compiled RHS wrapped as a Python callable (for cross-checks)."""
    kind = KIND[system]
    prm = _prm(system, params)
    Q = np.ascontiguousarray(instance.quadratic.Q, dtype=float)
    ql = np.ascontiguousarray(instance.quadratic.linear_term, dtype=float)
    A = np.ascontiguousarray(instance.A, dtype=float)
    b = np.ascontiguousarray(instance.b, dtype=float)

    def rhs(t, y):
        out = np.empty(len(y))
        _rhs(kind, t, np.asarray(y, dtype=float), Q, ql, A, b, prm, instance.dim_primal,
             instance.dim_dual, out)
        return out

    return rhs
