"""The Tikhonov-regularized saddle path (x_t, lambda_t).

For eps = c / t**p the regularized Lagrangian

    L_t(x, lam) = f(x) + <lam, Ax - b> + eps/2 * (||x||^2 - ||lam||^2)

is eps-strongly convex in x and eps-strongly concave in lam, so it has a
unique saddle point, characterized by

    grad f(x) + A^T lam + eps x = 0,     A x - b - eps lam = 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, NewtonDivergence, NonpositiveTime

NEWTON_MAX_ITER = 50
NEWTON_DAMPING_FLOOR = 2.0 ** -20
RESIDUAL_RTOL = 1e-11


@dataclass(frozen=True)
class RegularizationSchedule:
    c: float
    p: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"Tikhonov strength c must be positive, got {self.c}")
        if not 0 < self.p < 1:
            raise ValueError(f"decay exponent p must lie in (0, 1), got {self.p}")

    def epsilon(self, t):
        if t <= 0:
            raise NonpositiveTime(f"t must be positive, got {t}")
        return self.c / t ** self.p


@dataclass(frozen=True, eq=False)
class SaddlePoint:
    t: float
    x_t: np.ndarray
    lambda_t: np.ndarray
    residual: float

    @property
    def stacked(self):
        return np.concatenate([self.x_t, self.lambda_t])


def _check_dims(instance, x, lam):
    x = np.asarray(x, dtype=float).reshape(-1)
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if x.size != instance.dim_primal or lam.size != instance.dim_dual:
        raise DimensionMismatch(
            f"expected x in R^{instance.dim_primal}, lambda in R^{instance.dim_dual}; "
            f"got sizes {x.size}, {lam.size}")
    return x, lam


def lagrangian(instance, x, lam):
    x, lam = _check_dims(instance, x, lam)
    return float(instance.objective(x) + lam @ instance.residual(x))


def regularized_lagrangian(instance, schedule, t, x, lam):
    eps = schedule.epsilon(t)
    x, lam = _check_dims(instance, x, lam)
    return lagrangian(instance, x, lam) + 0.5 * eps * (x @ x - lam @ lam)


def saddle_residual(instance, eps, x, lam):
    """Stacked residual of the two optimality equations."""
    A = instance.A
    r_x = instance.gradient(x) + A.T @ lam + eps * x
    r_l = A @ x - instance.b - eps * lam
    return np.concatenate([r_x, r_l])


def _kkt_matrix(hess, A, eps):
    n, m = A.shape[1], A.shape[0]
    return np.block([[hess + eps * np.eye(n), A.T], [A, -eps * np.eye(m)]])


def solve_saddle(instance, schedule, t, warm_start=None):
    """Saddle point of L_t.

    Quadratic instances take one linear solve of the shifted KKT matrix
    (plus one refinement pass). Others run damped Newton from ``warm_start``
    (a SaddlePoint or stacked vector) or the origin.
    """
    eps = schedule.epsilon(t)
    n, m = instance.dim_primal, instance.dim_dual
    A = instance.A
    quad = instance.quadratic
    if quad is not None:
        K = _kkt_matrix(quad.Q, A, eps)
        rhs = np.concatenate([-quad.linear_term, instance.b])
        z = np.linalg.solve(K, rhs)
        z = z - np.linalg.solve(K, K @ z - rhs)
        r = saddle_residual(instance, eps, z[:n], z[n:])
        return SaddlePoint(float(t), z[:n], z[n:], float(np.linalg.norm(r)))

    if instance.hessian is None:
        raise TypeError("non-quadratic saddle solves need a hessian oracle")
    if warm_start is None:
        z = np.zeros(n + m)
    elif isinstance(warm_start, SaddlePoint):
        z = warm_start.stacked.copy()
    else:
        z = np.array(warm_start, dtype=float)
    r = saddle_residual(instance, eps, z[:n], z[n:])
    rnorm = np.linalg.norm(r)
    for _ in range(NEWTON_MAX_ITER):
        if rnorm <= RESIDUAL_RTOL * (1.0 + np.linalg.norm(z)):
            return SaddlePoint(float(t), z[:n], z[n:], float(rnorm))
        K = _kkt_matrix(np.asarray(instance.hessian(z[:n]), dtype=float), A, eps)
        d = np.linalg.solve(K, -r)
        tau = 1.0
        while True:
            z_new = z + tau * d
            r_new = saddle_residual(instance, eps, z_new[:n], z_new[n:])
            if np.linalg.norm(r_new) < rnorm or tau <= NEWTON_DAMPING_FLOOR:
                break
            tau *= 0.5
        z, r, rnorm = z_new, r_new, np.linalg.norm(r_new)
    if rnorm <= RESIDUAL_RTOL * (1.0 + np.linalg.norm(z)):
        return SaddlePoint(float(t), z[:n], z[n:], float(rnorm))
    raise NewtonDivergence(
        f"Newton stalled at t={t}: residual {rnorm:.3e} after {NEWTON_MAX_ITER} iterations")


def saddle_path(instance, schedule, times):
    """Saddle points along increasing times, warm-started from the previous one."""
    out = []
    prev = None
    for t in times:
        prev = solve_saddle(instance, schedule, t, warm_start=prev)
        out.append(prev)
    return out


def saddle_velocity(instance, schedule, t, h=None):
    """Central-difference estimate of d/dt (x_t, lambda_t), stacked."""
    if h is None:
        h = max(1e-5 * t, 1e-7)
    mid = solve_saddle(instance, schedule, t)
    lo = solve_saddle(instance, schedule, t - h, warm_start=mid)
    hi = solve_saddle(instance, schedule, t + h, warm_start=mid)
    return (hi.stacked - lo.stacked) / (2.0 * h)


def check_saddle_derivative_identity(instance, schedule, t, h=None):
    """Compare d/dt L_t(x_t, lambda_t) with cp / (2 t^(p+1)) (||lambda_t||^2 - ||x_t||^2).

    Returns ``(lhs, rhs, abs_error)``; the left side is a central difference
    with the saddle point re-solved at t - h and t + h (default h = 1e-4 t).
    """
    if h is None:
        h = 1e-4 * t
    mid = solve_saddle(instance, schedule, t)

    def value(tau):
        sp = solve_saddle(instance, schedule, tau, warm_start=mid)
        return regularized_lagrangian(instance, schedule, tau, sp.x_t, sp.lambda_t)

    lhs = (value(t + h) - value(t - h)) / (2.0 * h)
    c, p = schedule.c, schedule.p
    rhs = c * p / (2.0 * t ** (p + 1)) * (mid.lambda_t @ mid.lambda_t - mid.x_t @ mid.x_t)
    return float(lhs), float(rhs), float(abs(lhs - rhs))


@dataclass
class SaddleCheck:
    name: str
    passed: bool
    detail: str


def lemma21_checks(instance, schedule, times, slack=1e-6, identity_times=(10.0, 100.0, 1000.0),
                   identity_tol=1e-7):
    """Norm bound, velocity bound and derivative identity along ``times``."""
    oracle = instance.oracle
    if oracle is None:
        raise ValueError("the norm bounds need an instance with a solution oracle")
    star = oracle.norm
    worst_norm = -np.inf
    worst_vel = -np.inf
    for t in times:
        sp = solve_saddle(instance, schedule, t)
        worst_norm = max(worst_norm, np.linalg.norm(sp.stacked) - star)
        vel = np.linalg.norm(saddle_velocity(instance, schedule, t))
        worst_vel = max(worst_vel, vel - schedule.p / t * star)
    checks = [
        SaddleCheck("norm bound ||(x_t,l_t)|| <= ||(x*,l*)||", worst_norm <= slack,
                    f"max excess {worst_norm:.3e}"),
        SaddleCheck("velocity bound ||d/dt (x_t,l_t)|| <= (p/t)||(x*,l*)||", worst_vel <= slack,
                    f"max excess {worst_vel:.3e}"),
    ]
    for t in identity_times:
        _, _, err = check_saddle_derivative_identity(instance, schedule, t)
        checks.append(SaddleCheck(f"derivative identity at t={t:g}", err <= identity_tol,
                                  f"abs error {err:.3e}"))
    return checks
