"""Numerical checks of the bounded-correction lemmas.

Both lemmas have the shape: if ||g(t) + K(t) * int_delta^t a(tau) g(tau) dtau|| stays
below a constant, then g itself stays bounded. The checks evaluate the
corrected quantity on a discretized horizon and report the hypothesis and
the conclusion separately.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import ExponentOverflow

PASS = "pass"
HYPOTHESIS_FAILED = "HypothesisFailed"
CONCLUSION_FAILED = "ConclusionFailed"

REL_SLACK = 1e-6
ABS_SLACK = 1e-12
DECADE_RATIO = 1.05


@dataclass
class LemmaVerdict:
    lemma: str
    status: str
    hypothesis_ok: bool
    conclusion_ok: bool
    sup_corrected: float
    sup_g: float
    bound: float
    c0: Optional[float] = None

    @property
    def passed(self):
        return self.status == PASS


def _as_rows(values, n):
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def lemma22_property_check(delta, mu, nu, a_fn, g_fn, C, t_end, lemma="2.2", n_points=20001,
                           corrected_fn=None):
    """Check hypothesis and conclusion of a bounded-correction lemma on [delta, t_end].

    ``a_fn`` and ``g_fn`` are vectorized over a time array (``g_fn`` may return
    an (N, d) array). ``lemma`` is "2.2" (a >= 0, conclusion sup||g|| <= 2C)
    or "2.3" (a <= 0 with inf_t e^{-mu t^nu} int a >= C0 > -1, conclusion
    sup||g|| <= C / (1 + C0)). ``corrected_fn`` replaces the computed
    corrected quantity when the hypothesis is known from elsewhere.
    """
    if lemma not in ("2.2", "2.3"):
        raise ValueError(f"lemma must be '2.2' or '2.3', got {lemma!r}")
    t = np.linspace(delta, t_end, n_points)
    a = np.asarray(a_fn(t), dtype=float) * np.ones_like(t)
    g = _as_rows(g_fn(t), t.size)
    kernel = np.exp(-mu * t ** nu)
    if corrected_fn is None:
        integral = cumulative_trapezoid(a[:, None] * g, t, axis=0, initial=0.0)
        corrected = g + kernel[:, None] * integral
    else:
        corrected = _as_rows(corrected_fn(t), t.size)
    sup_corr = float(np.max(np.linalg.norm(corrected, axis=1)))
    sup_g = float(np.max(np.linalg.norm(g, axis=1)))
    hyp = sup_corr <= C * (1 + REL_SLACK) + ABS_SLACK
    c0 = None
    if lemma == "2.2":
        hyp = hyp and bool(np.all(a >= -ABS_SLACK))
        bound = 2.0 * C
    else:
        c0 = float(np.min(kernel * cumulative_trapezoid(a, t, initial=0.0)))
        hyp = hyp and bool(np.all(a <= ABS_SLACK)) and c0 > -1.0
        bound = -C * c0 / (1.0 + c0) + C if c0 > -1.0 else np.inf
    concl = sup_g <= bound * (1 + REL_SLACK) + ABS_SLACK
    if not hyp:
        status = HYPOTHESIS_FAILED
    elif not concl:
        status = CONCLUSION_FAILED
    else:
        status = PASS
    return LemmaVerdict(lemma, status, hyp, concl, sup_corr, sup_g, float(bound), c0)


@dataclass(eq=False)
class Lemma32Result:
    sup_value: float
    correction_sup: float
    verdict: str
    times: np.ndarray
    g_norm: np.ndarray
    corrected_norm: np.ndarray
    g_decade_ratio: float
    corrected_decade_ratio: float


def _exp_weights(D):
    """Integrals of exp(-D r) and r exp(-D r) over r in [0, 1], elementwise."""
    D = np.asarray(D, dtype=float)
    small = D < 1e-4
    Ds = np.where(small, 1.0, D)
    j0 = np.where(small, 1 - D / 2 + D * D / 6, -np.expm1(-Ds) / Ds)
    j1 = np.where(small, 0.5 - D / 3 + D * D / 8, (1 - np.exp(-Ds) * (1 + Ds)) / (Ds * Ds))
    return j0, j1


def log_h(t, params):
    """Logarithm of the integrating factor c/(1-(p-q-s)) t^(1-(p-q-s))."""
    beta = 1.0 - (params.p - params.q - params.s)
    if not beta > 0:
        raise ValueError("the integrating factor needs p - q - s < 1")
    with np.errstate(over="raise"):
        try:
            return params.c / beta * np.asarray(t, dtype=float) ** beta
        except FloatingPointError as exc:
            raise ExponentOverflow("integrating-factor exponent overflows") from exc


def decade_ratio(times, values):
    """sup over [t_end/10, t_end] divided by sup over [t_end/100, t_end/10)."""
    t_end = times[-1]
    last = values[times >= t_end / 10]
    mid = values[(times >= t_end / 100) & (times < t_end / 10)]
    if last.size == 0 or mid.size == 0:
        return np.nan
    top = float(np.max(mid))
    if top == 0.0:
        return 0.0 if float(np.max(last)) == 0.0 else np.inf
    return float(np.max(last)) / top


def lemma32_quantities(times, residuals, params, T):
    """g(t) = theta t^(2q+s) (Ax - b) and its corrected version on ``times >= T``.

    The integral is taken with linear interpolation of g*w and of log h
    between grid points, integrated exactly (an exponentially fitted
    trapezoid). h itself is never formed; only differences of log h appear.
    Returns (t, g, corrected) restricted to t >= T.
    """
    times = np.asarray(times, dtype=float)
    residuals = np.asarray(residuals, dtype=float)
    if residuals.ndim == 1:
        residuals = residuals[:, None]
    keep = times >= T
    t = times[keep]
    r = residuals[keep]
    theta, q, s, c, p = params.theta, params.q, params.s, params.c, params.p
    g = theta * t[:, None] ** (2 * q + s) * r
    w = t ** (-q) / theta - (2 * q + s) / t - c * t ** (q + s - p)
    u = g * w[:, None]
    phi = log_h(t, params)
    integral = np.zeros_like(g)
    for j in range(1, t.size):
        D = phi[j] - phi[j - 1]
        dt = t[j] - t[j - 1]
        j0, j1 = _exp_weights(D)
        piece = dt * (u[j] * j0 + (u[j - 1] - u[j]) * j1)
        integral[j] = np.exp(-D) * integral[j - 1] + piece
    return t, g, g + integral


def lemma32_boundedness_check(instance, params, trajectory, T, residuals=None):
    """Boundedness of theta t^(2q+s) (Ax - b) and of its corrected version.

    ``residuals`` overrides the constraint residuals computed from the
    trajectory (used for synthetic controls). The verdict is "bounded" when
    the corrected quantity's last-decade sup is at most 1.05 times its sup
    over the decade before.
    """
    times = np.asarray(trajectory.times, dtype=float)
    if residuals is None:
        n = instance.dim_primal
        X = np.asarray(trajectory.states)[:, :n]
        residuals = X @ instance.A.T - instance.b
    t, g, corr = lemma32_quantities(times, residuals, params, T)
    gn = np.linalg.norm(g, axis=1)
    cn = np.linalg.norm(corr, axis=1)
    ratio_c = decade_ratio(t, cn)
    ratio_g = decade_ratio(t, gn)
    if np.isnan(ratio_c):
        verdict = "undetermined"
    else:
        verdict = "bounded" if ratio_c <= DECADE_RATIO else "unbounded"
    return Lemma32Result(float(np.max(gn)), float(np.max(cn)), verdict, t, gn, cn,
                         ratio_g, ratio_c)


def lemma_batteries():
    """Example batteries per lemma: name, kwargs, expected status."""
    d = 0.5
    e = np.exp(-d)
    out = [
        ("2.2 zero kernel, constant g", dict(delta=d, mu=0.0, nu=1.0, a_fn=lambda t: 0 * t,
                                             g_fn=lambda t: 0 * t + 3.0, C=3.0, t_end=20.0), PASS),
        ("2.2 exponential kernel, g = exp(-t)",
         dict(delta=d, mu=1.0, nu=1.0, a_fn=lambda t: 0 * t + 1.0, g_fn=lambda t: np.exp(-t),
              C=e, t_end=20.0), PASS),
        ("2.2 negative control: C too small",
         dict(delta=d, mu=1.0, nu=1.0, a_fn=lambda t: 0 * t + 1.0, g_fn=lambda t: np.exp(-t),
              C=0.5 * e, t_end=20.0), HYPOTHESIS_FAILED),
        ("2.3 a = -exp(-t), g = cos t",
         dict(delta=d, mu=0.0, nu=1.0, a_fn=lambda t: -np.exp(-t), g_fn=np.cos, C=2.0,
              t_end=20.0, lemma="2.3"), PASS),
        ("2.3 zero kernel, constant g", dict(delta=d, mu=0.0, nu=1.0, a_fn=lambda t: 0 * t,
                                             g_fn=lambda t: 0 * t - 1.5, C=1.5, t_end=20.0,
                                             lemma="2.3"), PASS),
        ("2.3 negative control: C0 <= -1",
         dict(delta=d, mu=0.0, nu=1.0, a_fn=lambda t: -2.0 * np.exp(-t), g_fn=np.cos, C=10.0,
              t_end=20.0, lemma="2.3"), HYPOTHESIS_FAILED),
    ]
    return out


def corrupted_battery():
    """Negative control: the corrected quantity is reported bounded while g grows."""
    return ("2.2 corrupted g", dict(delta=1.0, mu=0.0, nu=1.0, a_fn=lambda t: 0 * t,
                                    g_fn=lambda t: t, C=1.0, t_end=20.0,
                                    corrected_fn=lambda t: 0 * t + 1.0), CONCLUSION_FAILED)
