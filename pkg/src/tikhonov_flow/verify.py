"""Self-check suites behind ``tikhonov-flow verify``.

Each suite returns a list of ``Check`` records; a suite passes when every
check does.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import ParameterSet
from .integrator import (
    IntegratorConfig, integrate, integrate_fixed, integrate_system, make_log_grid,
)
from .lemmas import (
    PASS, corrupted_battery, lemma22_property_check, lemma32_boundedness_check, lemma_batteries,
)
from .problem import build_paper_problem, random_quadratic
from .saddle import lemma21_checks

ORDER_RATIO_RANGE = (6.0, 10.0)
LEMMA32_HORIZON = 1e3


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}  ({self.detail})"


def all_passed(checks):
    return all(c.passed for c in checks)


# --- saddle path --------------------------------------------------------------

def verify_saddle(instance=None, c=0.1, p=0.5, seed=0, n_times=30):
    """Norm and velocity bounds on a log grid in [1, 1e4] plus the derivative identity.

    Runs on ``instance`` (default: the built-in problem) and on a seeded
    random quadratic with a rank-deficient Hessian.
    """
    instance = instance or build_paper_problem()
    sched = ParameterSet(c=c, p=p).schedule
    times = make_log_grid(1.0, 1e4, n_times)
    out = []
    for inst in (instance, random_quadratic(seed)):
        for chk in lemma21_checks(inst, sched, times):
            out.append(Check(f"[{inst.name}] {chk.name}", chk.passed, chk.detail))
    return out


# --- integrator -----------------------------------------------------------------

def exponential_check(rtol=1e-8, atol=1e-10, t0=1.0, t_end=6.0):
    """y' = -y from y(t0) = 1; final error against exp(-(t_end - t0))."""
    traj = integrate(lambda t, y: -y, t0, t_end, np.array([1.0]),
                     IntegratorConfig(rtol=rtol, atol=atol))
    exact = np.exp(-(t_end - t0))
    err = abs(traj.states[-1, 0] - exact)
    bound = 10.0 * (rtol * exact + atol)
    return Check("exponential decay final error", err <= bound,
                 f"error {err:.3e}, bound {bound:.3e}")


def _growth(t, y):
    return np.cos(t) * y


def order_ratio(n_steps=100, t0=1.0, t_end=6.0, y0=1.0):
    """err(h) / err(h/2) for the third-order member on y' = cos(t) y."""
    exact = y0 * np.exp(np.sin(t_end) - np.sin(t0))
    e1 = abs(integrate_fixed(_growth, t0, t_end, np.array([y0]), n_steps)[0] - exact)
    e2 = abs(integrate_fixed(_growth, t0, t_end, np.array([y0]), 2 * n_steps)[0] - exact)
    return e1 / e2


def oscillator_check(tol=1e-6, periods=1):
    """Harmonic oscillator at default tolerances; must return to its start."""
    t_end = 1.0 + 2.0 * np.pi * periods
    traj = integrate(lambda t, y: np.array([y[1], -y[0]]), 1.0, t_end, np.array([1.0, 0.0]))
    err = float(np.max(np.abs(traj.states[-1] - np.array([1.0, 0.0]))))
    return Check(f"harmonic oscillator, {periods} period(s)", err <= tol, f"max error {err:.3e}")


def kernel_agreement_check(tol=1e-12):
    """Compiled kernel and Python reference give the same trajectory."""
    inst = build_paper_problem()
    params = ParameterSet()
    y0 = np.array([1.0, -1.0, 1.0, 1.0, 1.0, 1.0, 1.0])
    cfg = IntegratorConfig(sample_grid=make_log_grid(1.0, 50.0, 20))
    a = integrate_system("main", inst, params, y0, 50.0, cfg)
    b = integrate_system("main", inst, params, y0, 50.0, cfg, force_python=True)
    err = float(np.max(np.abs(a.states - b.states)))
    return Check("compiled kernel matches Python reference", err <= tol, f"max diff {err:.3e}")


def verify_integrator():
    ratio = order_ratio()
    lo, hi = ORDER_RATIO_RANGE
    return [
        exponential_check(),
        Check("step-halving error ratio (third order)", lo <= ratio <= hi,
              f"ratio {ratio:.3f}, expected in [{lo:g}, {hi:g}]"),
        oscillator_check(),
        kernel_agreement_check(),
    ]


# --- bounded-correction lemmas ------------------------------------------------------

def verify_lemmas(params=None, corrupt=False, horizon=LEMMA32_HORIZON, instance=None):
    """Example batteries for both lemmas, then boundedness of theta t^(2q+s)(Ax - b).

    With ``corrupt`` the corrupted-g fixture is appended; its conclusion
    fails, so the suite fails.
    """
    params = params or ParameterSet()
    out = []
    batteries = lemma_batteries() + ([corrupted_battery()] if corrupt else [])
    for name, kwargs, expected in batteries:
        verdict = lemma22_property_check(**kwargs)
        if name.endswith("corrupted g"):
            ok = verdict.status == PASS
            detail = f"status {verdict.status}, sup g {verdict.sup_g:.3g} > bound {verdict.bound:.3g}"
        else:
            ok = verdict.status == expected
            detail = f"status {verdict.status}, expected {expected}"
        out.append(Check(f"lemma {name}", ok, detail))
    instance = instance or build_paper_problem()
    grid = make_log_grid(params.t0, horizon, 300)
    y0 = np.array([1.0, -1.0, 1.0, 1.0, 1.0, 1.0, 1.0])
    traj = integrate_system("main", instance, params, y0, horizon,
                            IntegratorConfig(sample_grid=grid))
    res = lemma32_boundedness_check(instance, params, traj, T=max(params.t0, 10.0))
    out.append(Check("corrected constraint residual bounded over the last decade",
                     res.verdict == "bounded",
                     f"last/mid decade sup ratio {res.corrected_decade_ratio:.4f}"))
    return out
