"""Experiment configuration documents (JSON) and ``--set`` overrides.

Sections: ``experiment``, ``params`` (main and constant-damping flows),
``heode`` (comparison flow), ``initial``, ``integrator``, ``sweep``, ``seed``.
Unknown keys are rejected. Every default is listed in ``DEFAULTS``.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

from .errors import ConfigInvalid

DEFAULTS = {
    "experiment": {
        "name": "paper_exp1",
        "instance": "paper",
        "system": "main",
        "horizon": 10000.0,
        "samples": 400,
        "outputs": "runs",
        "fit_window": None,
    },
    "params": {"alpha": 3.0, "theta": 1.0, "c": 0.1, "p": 0.5, "q": 0.0, "s": 0.5, "t0": 1.0},
    "heode": {"alpha": 3.0, "theta": 1.0, "rho": 1.0, "kappa": 0.1, "q": 0.1, "s": 0.4,
              "t0": 1.0},
    "initial": {"x": [1.0, -1.0, 1.0], "v": [1.0, 1.0, 1.0], "lambda": [1.0],
                "lambda_dot": [1.0]},
    "integrator": {"rtol": 1e-8, "atol": 1e-10, "h_init": None, "h_min": 1e-12, "h_max": None,
                   "max_steps": 50_000_000},
    "sweep": {"axis": None, "values": [], "workers": 1},
    "seed": 0,
}

SWEEP_AXES = ("q", "p", "s", "c", "alpha", "theta")
SYSTEMS = ("main", "chbani", "heode")


def dump_defaults():
    return json.dumps(DEFAULTS, indent=2) + "\n"


def _merge(base, doc, path=""):
    for key, val in doc.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigInvalid(f"unknown config key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigInvalid(f"config key '{where}' must be a table")
            _merge(base[key], val, where + ".")
        else:
            base[key] = val
    return base


def load_config(path=None):
    """Defaults merged with the document at ``path`` (if any)."""
    doc = copy.deepcopy(DEFAULTS)
    if path is None:
        return doc
    p = Path(path)
    if not p.is_file():
        raise ConfigInvalid(f"config file not found: {p}")
    try:
        user = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config file {p} is not valid JSON: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigInvalid(f"config file {p} must hold a JSON object")
    return _merge(doc, user)


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc, sets):
    """Apply ``KEY=VALUE`` strings in order (last write wins).

    Dotted keys address nested entries. A bare key resolves to the active
    parameter block (``heode`` when the system is heode, else ``params``),
    then to ``experiment`` and ``integrator``.
    """
    for item in sets or ():
        if "=" not in item:
            raise ConfigInvalid(f"override '{item}' is not of the form KEY=VALUE")
        key, raw = item.split("=", 1)
        key = key.strip()
        value = _parse_value(raw.strip())
        parts = key.split(".")
        if len(parts) == 1:
            block = "heode" if doc["experiment"]["system"] == "heode" else "params"
            for section in (block, "experiment", "integrator"):
                if key in doc[section]:
                    parts = [section, key]
                    break
            else:
                if key in doc and not isinstance(doc[key], dict):
                    parts = [key]
                else:
                    raise ConfigInvalid(f"unknown config key '{key}'")
        node = doc
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigInvalid(f"unknown config key '{key}'")
            node = node[part]
        if parts[-1] not in node or isinstance(node[parts[-1]], dict):
            raise ConfigInvalid(f"unknown config key '{key}'")
        node[parts[-1]] = value
    return doc


def _number(doc, section, key, positive=False, integer=False, optional=False):
    val = doc[section][key]
    name = f"{section}.{key}"
    if val is None and optional:
        return None
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigInvalid(f"config key '{name}' must be a number, got {val!r}")
    if integer and int(val) != val:
        raise ConfigInvalid(f"config key '{name}' must be an integer, got {val!r}")
    if positive and not val > 0:
        raise ConfigInvalid(f"config key '{name}' must be positive, got {val!r}")
    return int(val) if integer else float(val)


def _vector(doc, key):
    val = doc["initial"][key]
    if isinstance(val, (int, float)) and not isinstance(val, bool):
        val = [val]
    if not isinstance(val, list) or not all(isinstance(v, (int, float)) for v in val):
        raise ConfigInvalid(f"config key 'initial.{key}' must be a list of numbers")
    return [float(v) for v in val]


def validate(doc):
    """Type and range checks that must hold before any computation.

    Hard limits (0 < p < 1, c > 0, alpha > 0, theta > 0, t0 > 0) reject the
    document; the remaining standing assumptions only flag the run later.
    """
    exp = doc["experiment"]
    if exp["system"] not in SYSTEMS:
        raise ConfigInvalid(f"config key 'experiment.system' must be one of {SYSTEMS}")
    if not isinstance(exp["instance"], str):
        raise ConfigInvalid("config key 'experiment.instance' must be a string")
    horizon = _number(doc, "experiment", "horizon", positive=True)
    samples = _number(doc, "experiment", "samples", integer=True)
    if samples < 10:
        raise ConfigInvalid("config key 'experiment.samples' must be at least 10")
    fw = exp["fit_window"]
    if fw is not None and (not isinstance(fw, list) or len(fw) != 2 or not fw[0] < fw[1]):
        raise ConfigInvalid("config key 'experiment.fit_window' must be [t_lo, t_hi] with t_lo < t_hi")
    for key in ("alpha", "theta", "c", "t0"):
        _number(doc, "params", key, positive=True)
    for key in ("q", "s"):
        _number(doc, "params", key)
    p = _number(doc, "params", "p")
    if not 0 < p < 1:
        raise ConfigInvalid(f"config key 'params.p' must satisfy 0 < p < 1, got {p}")
    for key in ("alpha", "theta", "t0"):
        _number(doc, "heode", key, positive=True)
    for key in ("rho", "kappa", "q", "s"):
        _number(doc, "heode", key)
    for key in ("rtol", "atol", "h_min"):
        _number(doc, "integrator", key, positive=True)
    _number(doc, "integrator", "max_steps", positive=True, integer=True)
    _number(doc, "integrator", "h_init", positive=True, optional=True)
    _number(doc, "integrator", "h_max", positive=True, optional=True)
    for key in ("x", "v", "lambda", "lambda_dot"):
        _vector(doc, key)
    t0 = doc["heode"]["t0"] if exp["system"] == "heode" else doc["params"]["t0"]
    if not horizon > t0:
        raise ConfigInvalid(f"config key 'experiment.horizon' must exceed t0={t0}")
    sw = doc["sweep"]
    if sw["axis"] is not None and sw["axis"] not in SWEEP_AXES:
        raise ConfigInvalid(f"config key 'sweep.axis' must be one of {SWEEP_AXES}")
    if not isinstance(sw["values"], list):
        raise ConfigInvalid("config key 'sweep.values' must be a list")
    _number(doc, "sweep", "workers", positive=True, integer=True)
    if isinstance(doc["seed"], bool) or not isinstance(doc["seed"], int):
        raise ConfigInvalid("config key 'seed' must be an integer")
    return doc
