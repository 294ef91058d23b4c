"""
Experiment configuration.

A configuration is a flat JSON object with dotted keys, for example::

    {"problem": "example1", "seed": 7, "optimizer": "adagrad",
     "optimizer.eta": 1.0, "optimizer.b0": 0.1, "iters": 50}

Missing keys take the defaults of the selected problem. Unknown keys are
rejected, as are values outside their valid range. Pulse timing is given in
minutes and converted to seconds here; everything downstream works in seconds.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError

__all__ = ["ExperimentConfig", "load_config", "DEFAULTS", "OUTPUT_ENV"]

#: Environment variable holding the default output directory.
OUTPUT_ENV = "ADAGRAD_CONTROL_OUT"

SCHEMA_VERSION = 1

_COMMON = {
    "problem": "example1",
    "seed": 7,
    "iters": 50,
    "optimizer": "adagrad",
    "optimizer.eta": 1.0,
    "optimizer.b0": 0.1,
    "optimizer.eta0": 10.0,
    "u0": 2.0,
    "u_max": None,
    "u_max.margin": 2.0,
    "alpha": 0.1,
    "snapshots": [0, 10, 50],
    "diagnostics.samples": 100,
    "diagnostics.constants_samples": 100,
    "diagnostics.risk_every": 0,
    "diagnostics.risk_samples": 20,
    "output_dir": None,
    # verification suites
    "verify.directions": 10,
    "verify.triples": 100,
    "verify.fd_step": 1e-4,
    "verify.kl_draws": 10000,
    "verify.kl_tolerance": 0.05,
    "rate.n_cells": 20,
    "rate.n_t": 40,
    "rate.replications": 20,
    "rate.saa_samples": 500,
    "rate.saa_tol": 1e-8,
    "rate.n_min": 10,
    "rate.n_max": 200,
    "rate.points": 12,
    "rate.eta": 0.2,
    "rate.b0": 1.0,
    "rate.seed": 11,
}

_LOGNORMAL = {
    "grid.n_cells": 50,
    "grid.n_t": 100,
    "T": 0.2,
    "kl.sigma2": 0.25,
    "kl.corr_length": 0.1,
    "kl.modes": 40,
    "kl.a_min": 0.1,
}

_EXAMPLE2 = {
    "grid.n_cells": [29, 100],
    "grid.n_t": 240,
    "T": 21600.0,
    "iters": 50,
    "optimizer.eta": 0.1,
    "optimizer.b0": 1.0,
    "u0": 0.0,
    "snapshots": [0, 50],
    "diagnostics.samples": 50,
    "diagnostics.constants_samples": 20,
    "pulse.onset1_minutes": [40.0, 60.0],
    "pulse.onset2_minutes": [200.0, 220.0],
    "pulse.duration_minutes": [30.0, 60.0],
    "pulse.intensity": [200.0, 400.0],
    "phys.rho": 2118.0,
    "phys.cp": 765.0,
    "phys.k1": 66.0,
    "phys.k2": 0.66,
    "phys.T_o": 18.0,
    "y_target": 18.0,
    "control_units": "K/s",
    "monitor_point": [0.018, 0.099],
}

_CUSTOM = dict(
    _LOGNORMAL,
    **{
        "domain.dim": 1,
        "domain.extents": [0.0, 1.0],
        "y0": 0.0,
        "y_target": 0.0,
    },
)

DEFAULTS = {
    "example1": dict(_COMMON, **_LOGNORMAL),
    "example2": dict(_COMMON, **_EXAMPLE2),
    "custom": dict(_COMMON, **_CUSTOM),
}

# keys whose defaults are not stated by the original study
ASSUMED_DEFAULTS = {
    "example1": [],
    "example2": ["grid.n_cells", "grid.n_t", "T", "alpha", "monitor_point", "control_units"],
    "custom": [],
}


def _positive(name, v, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigurationError(f"{name} must be a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigurationError(f"{name} must be an integer, got {v!r}")
    if not (math.isfinite(v) and v > 0):
        raise ConfigurationError(f"{name} must be positive, got {v!r}")
    return int(v) if integer else float(v)


def _nonnegative(name, v, integer=False):
    if v == 0 and not isinstance(v, bool):
        return 0 if integer else 0.0
    return _positive(name, v, integer)


def _number(name, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigurationError(f"{name} must be a finite number, got {v!r}")
    return float(v)


def _range(name, v):
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ConfigurationError(f"{name} must be a [low, high] pair")
    lo, hi = (_number(name, x) for x in v)
    if hi < lo or lo < 0:
        raise ConfigurationError(f"{name} must satisfy 0 <= low <= high, got {v!r}")
    return (lo, hi)


def _cells(name, v, dim):
    if isinstance(v, (list, tuple)):
        if len(v) != dim:
            raise ConfigurationError(f"{name} needs {dim} entries")
        return tuple(_positive(name, c, integer=True) for c in v)
    return (_positive(name, v, integer=True),) * dim


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved and validated configuration.

    ``values`` holds every key (defaults filled in); ``user_keys`` records
    which were given explicitly, so output metadata can flag defaults that
    are not taken from the original study.
    """

    values: dict
    user_keys: frozenset = field(default_factory=frozenset)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def problem(self):
        return self.values["problem"]

    @property
    def seed(self):
        return self.values["seed"]

    def with_overrides(self, **overrides):
        """New config with dotted keys given as ``key__sub`` or a plain dict."""
        raw = {k: v for k, v in self.values.items() if k in self.user_keys}
        raw["problem"] = self.problem
        for k, v in overrides.items():
            raw[k.replace("__", ".")] = v
        return ExperimentConfig.from_dict(raw)

    def output_dir(self, override=None):
        """``override``, else the ``output_dir`` key, else the environment, else ``./out``."""
        d = override or self.values.get("output_dir") or os.environ.get(OUTPUT_ENV) or "out"
        return Path(d)

    def to_json(self):
        return json.dumps(self.values, sort_keys=True, separators=(",", ":"))

    def assumed_defaults(self):
        return [k for k in ASSUMED_DEFAULTS[self.problem] if k not in self.user_keys]

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigurationError("configuration must be a JSON object")
        problem = raw.get("problem", "example1")
        if problem not in DEFAULTS:
            raise ConfigurationError(f"problem must be one of {sorted(DEFAULTS)}, got {problem!r}")
        defaults = DEFAULTS[problem]
        unknown = sorted(set(raw) - set(defaults))
        if unknown:
            raise ConfigurationError(f"unknown configuration keys for {problem}: {unknown}")
        values = dict(defaults)
        values.update(raw)
        values = _validate(values)
        return cls(values, frozenset(raw))


def _validate(v):
    out = dict(v)
    problem = v["problem"]
    out["seed"] = _nonnegative("seed", v["seed"], integer=True)
    out["iters"] = _nonnegative("iters", v["iters"], integer=True)
    if v["optimizer"] not in ("adagrad", "sgd"):
        raise ConfigurationError(f"optimizer must be 'adagrad' or 'sgd', got {v['optimizer']!r}")
    for k in ("optimizer.eta", "optimizer.b0", "optimizer.eta0", "alpha", "u_max.margin", "T"):
        out[k] = _positive(k, v[k])
    out["u0"] = _number("u0", v["u0"])
    if v["u_max"] is not None:
        out["u_max"] = _positive("u_max", v["u_max"])
    snaps = v["snapshots"]
    if not isinstance(snaps, (list, tuple)):
        raise ConfigurationError("snapshots must be a list of iteration indices")
    out["snapshots"] = sorted({_nonnegative("snapshots", s, integer=True) for s in snaps})
    for k in (
        "diagnostics.samples",
        "diagnostics.constants_samples",
        "diagnostics.risk_samples",
        "verify.directions",
        "verify.triples",
        "verify.kl_draws",
        "rate.n_cells",
        "rate.n_t",
        "rate.replications",
        "rate.saa_samples",
        "rate.n_min",
        "rate.n_max",
        "rate.points",
        "grid.n_t",
    ):
        out[k] = _positive(k, v[k], integer=True)
    out["diagnostics.risk_every"] = _nonnegative(
        "diagnostics.risk_every", v["diagnostics.risk_every"], integer=True
    )
    for k in ("verify.fd_step", "verify.kl_tolerance", "rate.saa_tol", "rate.eta", "rate.b0"):
        out[k] = _positive(k, v[k])
    out["rate.seed"] = _nonnegative("rate.seed", v["rate.seed"], integer=True)
    if out["rate.n_min"] >= out["rate.n_max"]:
        raise ConfigurationError("rate.n_min must be below rate.n_max")
    if out["rate.replications"] < 2:
        raise ConfigurationError("rate.replications must be at least 2")
    if v["output_dir"] is not None and not isinstance(v["output_dir"], str):
        raise ConfigurationError("output_dir must be a string")

    if problem == "example2":
        dim = 2
        for k in ("phys.rho", "phys.cp", "phys.k1", "phys.k2"):
            out[k] = _positive(k, v[k])
        for k in ("phys.T_o", "y_target"):
            out[k] = _number(k, v[k])
        for k in ("pulse.onset1_minutes", "pulse.onset2_minutes", "pulse.duration_minutes", "pulse.intensity"):
            out[k] = list(_range(k, v[k]))
        if v["control_units"] not in ("K/s", "W/m^3"):
            raise ConfigurationError("control_units must be 'K/s' or 'W/m^3'")
        mp = v["monitor_point"]
        if not isinstance(mp, (list, tuple)) or len(mp) != 2:
            raise ConfigurationError("monitor_point must be [x1, x2]")
        out["monitor_point"] = [_number("monitor_point", c) for c in mp]
    else:
        dim = v.get("domain.dim", 1)
        if dim not in (1, 2):
            raise ConfigurationError("domain.dim must be 1 or 2")
        for k in ("kl.sigma2", "kl.corr_length", "kl.a_min"):
            out[k] = _positive(k, v[k])
        out["kl.modes"] = _positive("kl.modes", v["kl.modes"], integer=True)
        if problem == "custom":
            for k in ("y0", "y_target"):
                out[k] = _number(k, v[k])
    out["grid.n_cells"] = list(_cells("grid.n_cells", v["grid.n_cells"], dim))
    if any(c < 2 for c in out["grid.n_cells"]):
        raise ConfigurationError("grid.n_cells must be at least 2 per axis")
    return out


def load_config(path):
    """Read and validate a JSON configuration file."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigurationError(f"configuration file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON in {path}: {exc}") from exc
    return ExperimentConfig.from_dict(raw)
