"""Experiment runner: integrate, extract metrics, fit rates, emit artifacts.

Each run writes ``<out>/<run-id>/`` containing ``trajectory.csv``,
``rates.txt`` (a JSON report), ``plot_<group>.svg`` and ``manifest.txt``.
The run id is a hash of the canonical spec document, and only the manifest
carries wall-clock information, so identical specs give byte-identical data
files.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from . import config as cfg
from .dynamics import (
    OUT_OF_THEORY, FlowState, HeParams, ParameterSet, classify_regime, regime_names,
)
from .errors import (
    DimensionMismatch, FlowError, InsufficientSamples, IntegrationError, NonPositiveValues,
    NothingToPlot, OutOfTheory,
)
from .integrator import IntegratorConfig, integrate_system, make_log_grid
from .lemmas import lemma32_boundedness_check
from .metrics import RATE_QUANTITIES, fit_rate, predict_rates, sample_metrics, write_csv
from .plot import emit_plot
from .problem import resolve_instance

PLOT_GROUPS = {
    "errors": ("dist_minnorm", "obj_residual", "feasibility"),
    "saddle": ("dist_saddle_x", "dist_saddle_lambda", "reg_gap"),
    "energy": ("energy", "speed_sq", "lemma32_g"),
}
# Quantities fitted without a theorem prediction.
INFORMATIONAL = ("dist_minnorm",)
# A fit window must cover at least this time ratio.
MIN_WINDOW_RATIO = 10.0
CONTRAST_FACTOR = 1e-2
CONTRAST_FEASIBILITY = 1e-2


@dataclass
class ExperimentSpec:
    instance_ref: str = "paper"
    system: str = "main"
    params: Union[ParameterSet, HeParams] = field(default_factory=ParameterSet)
    x0: Tuple[float, ...] = (1.0, -1.0, 1.0)
    v0: Tuple[float, ...] = (1.0, 1.0, 1.0)
    lam0: Tuple[float, ...] = (1.0,)
    lam_dot0: Tuple[float, ...] = (1.0,)
    horizon: float = 1e4
    samples: int = 400
    outputs: str = "runs"
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    fit_window: Optional[Tuple[float, float]] = None
    name: str = "run"

    def __post_init__(self):
        if not self.horizon > self.params.t0:
            raise ValueError(f"horizon {self.horizon} must exceed t0={self.params.t0}")
        if self.samples < 10:
            raise ValueError(f"samples must be at least 10, got {self.samples}")
        want = HeParams if self.system == "heode" else ParameterSet
        if not isinstance(self.params, want):
            raise TypeError(f"system {self.system!r} needs {want.__name__} parameters")

    def to_doc(self):
        """Canonical config document of this spec (the output directory excluded)."""
        doc = {
            "experiment": {"name": self.name, "instance": self.instance_ref, "system": self.system,
                           "horizon": float(self.horizon), "samples": int(self.samples),
                           "fit_window": None if self.fit_window is None
                           else [float(a) for a in self.fit_window]},
            "initial": {"x": [float(a) for a in self.x0], "v": [float(a) for a in self.v0],
                        "lambda": [float(a) for a in self.lam0],
                        "lambda_dot": [float(a) for a in self.lam_dot0]},
            "integrator": {"rtol": self.integrator.rtol, "atol": self.integrator.atol,
                           "h_init": self.integrator.h_init, "h_min": self.integrator.h_min,
                           "h_max": self.integrator.h_max,
                           "max_steps": int(self.integrator.max_steps)},
        }
        block = "heode" if self.system == "heode" else "params"
        doc[block] = {k: float(v) for k, v in self.params.as_dict().items()}
        return doc

    @property
    def run_id(self):
        text = json.dumps(self.to_doc(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_param(self, name, value):
        return replace(self, params=self.params.replace(**{name: value}))

    def initial_state(self, instance):
        n, m = instance.dim_primal, instance.dim_dual
        parts = [("x", self.x0, n), ("v", self.v0, n), ("lambda", self.lam0, m)]
        if self.system == "heode":
            parts.append(("lambda_dot", self.lam_dot0, m))
        for label, vec, size in parts:
            if len(vec) != size:
                raise DimensionMismatch(f"initial {label} has length {len(vec)}, instance needs {size}")
        mu = np.asarray(self.lam_dot0, dtype=float) if self.system == "heode" else None
        return FlowState(np.asarray(self.x0, dtype=float), np.asarray(self.v0, dtype=float),
                         np.asarray(self.lam0, dtype=float), mu).pack()


def spec_from_config(doc):
    """Build an ExperimentSpec from a validated config document."""
    cfg.validate(doc)
    exp = doc["experiment"]
    if exp["system"] == "heode":
        params = HeParams(**{k: float(v) for k, v in doc["heode"].items()})
    else:
        params = ParameterSet(**{k: float(v) for k, v in doc["params"].items()})
    integ = IntegratorConfig(**{k: doc["integrator"][k] for k in
                                ("rtol", "atol", "h_init", "h_min", "h_max", "max_steps")})
    init = doc["initial"]

    def vec(key):
        val = init[key]
        return tuple(float(a) for a in (val if isinstance(val, list) else [val]))

    fw = exp["fit_window"]
    return ExperimentSpec(instance_ref=exp["instance"], system=exp["system"], params=params,
                          x0=vec("x"), v0=vec("v"), lam0=vec("lambda"),
                          lam_dot0=vec("lambda_dot"), horizon=float(exp["horizon"]),
                          samples=int(exp["samples"]), outputs=str(exp["outputs"]),
                          integrator=integ, fit_window=None if fw is None else tuple(fw),
                          name=str(exp["name"]))


@dataclass(eq=False)
class ExperimentResult:
    spec: ExperimentSpec
    run_id: str
    report: dict
    samples: list = field(default_factory=list)
    trajectory: object = None
    directory: Optional[Path] = None

    @property
    def status(self):
        return self.report["status"]

    def terminal(self, quantity):
        return self.report["terminal"].get(quantity)


def _clean(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def _theory_params(spec):
    """Parameters under which the theorem predictions and energy are evaluated."""
    if spec.system == "chbani":
        return spec.params.replace(q=0.0, s=spec.params.p)
    return spec.params


def _predictions(spec):
    """(prediction or None, regime names, r, assumption violations)."""
    if spec.system == "heode":
        return None, [OUT_OF_THEORY], None, ["comparison flow: no rate theory"]
    params = _theory_params(spec)
    bad = params.assumption_violations()
    if bad:
        return None, [OUT_OF_THEORY], params.r, bad
    names = list(regime_names(classify_regime(params)))
    try:
        return predict_rates(params, tuple(names)), names, params.r, []
    except OutOfTheory:
        return None, names, params.r, []


def _fit_window(spec, samples):
    if spec.fit_window is not None:
        return tuple(spec.fit_window)
    t_end = samples[-1].t
    return (max(samples[0].t, t_end / 100.0), t_end)


def _fit_all(spec, samples, prediction):
    window = _fit_window(spec, samples)
    quantities = RATE_QUANTITIES + INFORMATIONAL
    if spec.system == "heode":
        quantities = ("feasibility", "obj_residual", "pd_gap", "speed_sq") + INFORMATIONAL
    out = {}
    for qty in quantities:
        pred = prediction.get(qty) if prediction is not None else None
        src = prediction.sources.get(qty) if pred is not None else None
        entry = {"predicted": _clean(pred), "source": src}
        try:
            if window[1] / window[0] < MIN_WINDOW_RATIO:
                raise InsufficientSamples(
                    f"fit window [{window[0]:g}, {window[1]:g}] spans less than a decade")
            est = fit_rate(samples, qty, window=window, predicted=pred)
        except (InsufficientSamples, NonPositiveValues) as exc:
            entry.update(fitted=None, r_squared=None, window=[window[0], window[1]],
                         n_samples=0, verdict="unfitted", reason=f"{type(exc).__name__}: {exc}")
        else:
            entry.update(fitted=_clean(est.fitted_exponent), r_squared=_clean(est.r_squared),
                         window=[est.window[0], est.window[1]], n_samples=est.n_samples,
                         verdict=est.verdict())
        out[qty] = entry
    return out


def _terminal(samples):
    first, last = samples[0], samples[-1]
    keys = ("feasibility", "obj_residual", "pd_gap", "dist_minnorm", "dist_saddle_x",
            "dist_saddle_lambda", "reg_gap", "energy", "speed_sq")
    term = {"t": last.t}
    term.update({k: _clean(getattr(last, k)) for k in keys})
    term["x"] = [float(a) for a in last.x]
    term["lambda"] = [float(a) for a in last.lam]
    term["t0"] = first.t
    term["dist_minnorm_t0"] = _clean(first.dist_minnorm)
    term["feasibility_t0"] = _clean(first.feasibility)
    energies = [s.energy for s in samples if s.energy is not None]
    term["energy_min"] = _clean(min(energies)) if energies else None
    return term


def _status(rates, assumption_bad, regimes):
    verdicts = [e["verdict"] for e in rates.values() if e["predicted"] is not None]
    if any(v == "fail" for v in verdicts):
        return "fail"
    if assumption_bad or OUT_OF_THEORY in regimes:
        return "informational"
    return "pass"


def _guides(prediction):
    if prediction is None:
        return {}
    g = {}
    for qty, val in prediction.exponents.items():
        if qty.endswith("_sq") and qty != "speed_sq":
            g[qty[:-3]] = val / 2.0
        else:
            g[qty] = val
    return g


def _write_plots(directory, samples, prediction, label):
    written = []
    for group, quantities in PLOT_GROUPS.items():
        keep = [q for q in quantities
                if sum(1 for s in samples if (s.value(q) or 0) > 0) >= 2]
        if not keep:
            continue
        path = directory / f"plot_{group}.svg"
        try:
            emit_plot({label: samples}, keep, path, predicted=_guides(prediction), title=label)
        except NothingToPlot:
            continue
        written.append(path.name)
    return written


def _dump(obj):
    return json.dumps(obj, indent=2) + "\n"


def _base_report(spec, run_id, regimes, r, bad):
    return {"run_id": run_id, "name": spec.name, "instance": spec.instance_ref,
            "system": spec.system, "params": spec.params.as_dict(), "regimes": regimes,
            "r": _clean(r), "assumption_violations": bad, "horizon": spec.horizon,
            "samples": spec.samples}


def run_experiment(spec, out=None, write=True):
    """Run one spec and (optionally) write its artifacts under ``out``.

    Integration errors are recorded in the report (with the failing t) and
    then re-raised. Returns an ExperimentResult whose ``report`` matches the
    written ``rates.txt``.
    """
    run_id = spec.run_id
    out = Path(out if out is not None else spec.outputs)
    directory = out / run_id
    if write:
        directory.mkdir(parents=True, exist_ok=True)
    started = time.time()
    instance = resolve_instance(spec.instance_ref)
    prediction, regimes, r, bad = _predictions(spec)
    report = _base_report(spec, run_id, regimes, r, bad)
    grid = make_log_grid(spec.params.t0, spec.horizon, spec.samples)
    integ = replace(spec.integrator, sample_grid=grid)
    try:
        traj = integrate_system(spec.system, instance, spec.params, spec.initial_state(instance),
                                spec.horizon, integ)
    except IntegrationError as exc:
        report.update(status="error", error={"type": type(exc).__name__, "message": str(exc),
                                             "t": _clean(exc.t)})
        if write:
            (directory / "rates.txt").write_text(_dump(report))
            _write_manifest(directory, spec, None, started)
        raise
    saddle_terms = spec.system != "heode"
    samples = sample_metrics(instance, _theory_params(spec) if saddle_terms else spec.params,
                             traj, saddle_terms=saddle_terms)
    rates = _fit_all(spec, samples, prediction)
    report["rates"] = rates
    report["terminal"] = _terminal(samples)
    if saddle_terms:
        T = max(spec.params.t0, 10.0) if spec.horizon > 100.0 else spec.params.t0
        try:
            l32 = lemma32_boundedness_check(instance, _theory_params(spec), traj, T)
            report["lemma32"] = {"T": T, "verdict": l32.verdict,
                                 "sup_g": _clean(l32.sup_value),
                                 "sup_corrected": _clean(l32.correction_sup),
                                 "g_decade_ratio": _clean(l32.g_decade_ratio),
                                 "corrected_decade_ratio": _clean(l32.corrected_decade_ratio)}
        except (FlowError, ValueError) as exc:
            report["lemma32"] = {"T": T, "verdict": "undetermined",
                                 "reason": f"{type(exc).__name__}: {exc}"}
    report["status"] = _status(rates, bad, regimes)
    report["error"] = None
    result = ExperimentResult(spec, run_id, report, samples, traj, directory if write else None)
    if write:
        write_csv(samples, directory / "trajectory.csv", instance.dim_primal, instance.dim_dual)
        (directory / "rates.txt").write_text(_dump(report))
        report_plots = _write_plots(directory, samples, prediction, spec.name)
        _write_manifest(directory, spec, traj, started, report_plots)
    return result


def _write_manifest(directory, spec, traj, started, plots=()):
    lines = [f"run_id: {spec.run_id}",
             f"created: {time.strftime('%Y-%m-%dT%H:%M:%S', time.localtime(started))}",
             f"wall_seconds: {time.time() - started:.3f}"]
    if traj is not None:
        st = traj.stats
        lines += [f"steps_accepted: {st.n_accepted}", f"steps_rejected: {st.n_rejected}",
                  f"rhs_evaluations: {st.n_rhs}", f"final_step: {st.final_h!r}"]
    lines += [f"plots: {', '.join(plots)}", "spec:", json.dumps(spec.to_doc(), indent=2)]
    (directory / "manifest.txt").write_text("\n".join(lines) + "\n")


# --- sweeps -------------------------------------------------------------------

SWEEP_QUANTITIES = ("feasibility", "obj_residual", "pd_gap", "dist_saddle_x_sq", "reg_gap")


@dataclass
class SweepRow:
    value: float
    run_id: str
    regimes: List[str]
    status: str
    rates: dict
    error: Optional[str] = None


def _sweep_cell(args):
    spec, out, write = args
    try:
        res = run_experiment(spec, out=out, write=write)
        return res.run_id, res.report, None
    except (FlowError, ValueError, ArithmeticError) as exc:
        return spec.run_id, None, f"{type(exc).__name__}: {exc}"


def run_sweep(base, axis, values, workers=1, out=None, write=True):
    """One run per value of ``axis``; rows come back ordered by value.

    Per-cell failures are recorded in the row and do not stop the sweep.
    Assumption violations only mark the cell informational.
    """
    if axis not in cfg.SWEEP_AXES:
        raise ValueError(f"sweep axis must be one of {cfg.SWEEP_AXES}, got {axis!r}")
    values = sorted(float(v) for v in values)
    specs = [base.with_param(axis, v) for v in values]
    jobs = [(s, out if out is not None else base.outputs, write) for s in specs]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, jobs))
    else:
        results = [_sweep_cell(j) for j in jobs]
    rows = []
    for v, spec, (run_id, report, err) in zip(values, specs, results):
        if report is None:
            regimes = [OUT_OF_THEORY] if spec.system == "heode" else _regimes_quiet(spec.params)
            rows.append(SweepRow(v, run_id, regimes, "error", {}, err))
        else:
            rows.append(SweepRow(v, run_id, report["regimes"], report["status"],
                                 report["rates"], report.get("error")))
    return rows


def _regimes_quiet(params):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return list(regime_names(classify_regime(params, strict=False)))


def _cell(x):
    return "" if x is None else format(x, ".6g")


def sweep_table(rows, axis, quantities=SWEEP_QUANTITIES):
    """Tab-separated summary table, one line per row."""
    head = [axis, "regimes", "status"]
    for q in quantities:
        head += [f"{q}_fitted", f"{q}_predicted", f"{q}_verdict"]
    head += ["run_id", "error"]
    lines = ["\t".join(head)]
    for row in rows:
        cells = [format(row.value, ".6g"), "+".join(row.regimes), row.status]
        for q in quantities:
            e = row.rates.get(q, {})
            cells += [_cell(e.get("fitted")), _cell(e.get("predicted")), e.get("verdict", "")]
        cells += [row.run_id, row.error or ""]
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def write_sweep(rows, axis, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    text = sweep_table(rows, axis)
    key = hashlib.sha256("".join(r.run_id for r in rows).encode()).hexdigest()[:12]
    path = out / f"sweep_{axis}_{key}.tsv"
    path.write_text(text)
    return path


# --- multi-run figures and the min-norm contrast -----------------------------------

def plot_runs(results, quantities, path, labels=None, title=None):
    """Overlay several runs (one curve per run in every panel)."""
    labels = labels or [r.spec.name for r in results]
    return emit_plot({lab: r.samples for lab, r in zip(labels, results)}, quantities, path,
                     title=title)


def min_norm_contrast(main, comparison, factor=CONTRAST_FACTOR,
                      feasibility_tol=CONTRAST_FEASIBILITY):
    """Compare a Tikhonov-controlled run against the comparison flow.

    The controlled run must shrink its distance to the minimum-norm pair by
    ``factor``; the comparison run must only become feasible. Its distance
    to the minimum-norm pair is reported without a threshold.
    """
    mt, ct = main.report["terminal"], comparison.report["terminal"]
    d0, d1 = mt["dist_minnorm_t0"], mt["dist_minnorm"]
    main_ok = d0 is not None and d1 is not None and d1 <= factor * d0
    feas_ok = ct["feasibility"] is not None and ct["feasibility"] <= feasibility_tol
    return {
        "t_end": mt["t"],
        "main": {"run_id": main.run_id, "dist_minnorm_t0": d0, "dist_minnorm_t_end": d1,
                 "ratio": _clean(d1 / d0) if d0 else None, "threshold": factor,
                 "min_norm_reached": bool(main_ok), "x_t_end": mt["x"]},
        "comparison": {"run_id": comparison.run_id, "feasibility_t_end": ct["feasibility"],
                       "threshold": feasibility_tol, "feasible": bool(feas_ok),
                       "dist_minnorm_t_end": ct["dist_minnorm"], "x_t_end": ct["x"],
                       "obj_residual_t_end": ct["obj_residual"]},
        "status": "pass" if (main_ok and feas_ok) else "fail",
    }


def write_contrast(contrast, path):
    Path(path).write_text(_dump(contrast))
    return Path(path)
