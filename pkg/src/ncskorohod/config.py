"""Problem files: a TOML document with a strict schema.

Tables: ``domain`` and ``problem`` (required), ``potential``, ``driver``,
``drift``, ``diffusion``, ``solver``, ``sde``, ``checks`` and ``output``.
Unknown tables or keys are errors that name their location.
"""

from __future__ import annotations

import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .catalog import diffusion_catalog, drift_catalog
from .errors import ConfigError, PathFormatError
from .geometry import Domain, domain_from_config
from .paths import Path, read_path_csv
from .potential import SemiconvexPotential, potential_from_config
from .sde import brownian
from .skorohod import SolverConfig

__all__ = ["Problem", "load_problem", "parse_problem", "make_driver"]

_TABLES = {"domain", "problem", "potential", "driver", "drift", "diffusion", "solver", "sde", "checks", "output"}
_KEYS = {
    "problem": ({"x0", "T"}, set()),
    "solver": (set(), {"base_step", "safety_fraction", "max_bisections", "delay_n", "boundary_tol", "residual_tol"}),
    "sde": (set(), {"n_steps", "seed", "n_paths", "functionals"}),
    "checks": (set(), {"n_samples", "drop_h0", "drop_r0"}),
    "output": (set(), {"solution", "certificate", "report"}),
}
_DRIVER_KEYS = {
    "constant": ({"n_steps"}, set()),
    "linear": ({"velocity", "n_steps"}, set()),
    "sinusoid": ({"amplitude", "frequency", "n_steps"}, set()),
    "piecewise_linear": ({"times", "values"}, set()),
    "brownian": ({"seed", "n_steps"}, {"scale"}),
    "csv": ({"file"}, set()),
}


@dataclass
class Problem:
    domain: Domain
    phi: SemiconvexPotential
    x0: np.ndarray
    T: float
    driver_spec: dict
    drift: object
    diffusion: object
    solver: SolverConfig
    sde: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    base_dir: str = "."
    has_drift: bool = False

    def driver(self, n_steps=None) -> Path:
        return make_driver(self.driver_spec, self.T, self.domain.dim, self.base_dir, n_steps)


def _keys(section, where, required, optional):
    if not isinstance(section, dict):
        raise ConfigError("expected a table", where)
    for k in sorted(set(section) - required - optional):
        raise ConfigError("unknown key", f"{where}.{k}")
    for k in sorted(required - set(section)):
        raise ConfigError("missing required key", f"{where}.{k}")


def _vector(v, dim, where):
    try:
        a = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("expected a list of numbers", where) from None
    a = np.atleast_1d(a)
    if a.shape != (dim,):
        raise ConfigError(f"expected {dim} components, got shape {a.shape}", where)
    if not np.all(np.isfinite(a)):
        raise ConfigError("non-finite entry", where)
    return a


def _positive_int(v, where):
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ConfigError("expected a positive integer", where)
    return v


def make_driver(spec: dict, T: float, dim: int, base_dir=".", n_steps=None) -> Path:
    """Build the driver path ``m`` (with ``m(0) = 0``) from a ``driver`` table.

    ``n_steps`` overrides the table's resolution for generator kinds.
    """
    kind = spec["kind"]
    steps = n_steps if n_steps is not None else spec.get("n_steps")
    if kind in ("constant", "linear", "sinusoid"):
        t = np.linspace(0.0, T, steps + 1)
        t[-1] = T
        if kind == "constant":
            vals = np.zeros((len(t), dim))
        elif kind == "linear":
            vals = t[:, None] * _vector(spec["velocity"], dim, "driver.velocity")
        else:
            amp = _vector(spec["amplitude"], dim, "driver.amplitude")
            vals = np.sin(2.0 * math.pi * float(spec["frequency"]) * t)[:, None] * amp
        return Path(t, vals)
    if kind == "brownian":
        bm = brownian(spec["seed"], T, steps, dim)
        return Path(bm.grid, float(spec.get("scale", 1.0)) * bm.path.values)
    if kind == "piecewise_linear":
        return Path(spec["times"], spec["values"])
    fname = spec["file"]
    fpath = fname if os.path.isabs(fname) else os.path.join(base_dir, fname)
    return read_path_csv(fpath)


def _check_driver(spec, T, dim, base_dir):
    where = "driver"
    if not isinstance(spec, dict):
        raise ConfigError("expected a table", where)
    kind = spec.get("kind")
    if kind not in _DRIVER_KEYS:
        raise ConfigError(f"unknown kind {kind!r}; expected one of {sorted(_DRIVER_KEYS)}", "driver.kind")
    req, opt = _DRIVER_KEYS[kind]
    _keys({k: v for k, v in spec.items() if k != "kind"}, where, req, opt)
    if "n_steps" in spec:
        _positive_int(spec["n_steps"], "driver.n_steps")
    if "seed" in spec and (isinstance(spec["seed"], bool) or not isinstance(spec["seed"], int)):
        raise ConfigError("expected an integer", "driver.seed")
    try:
        m = make_driver(spec, T, dim, base_dir)
    except ConfigError:
        raise
    except PathFormatError as exc:
        raise ConfigError(str(exc), "driver.file") from exc
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc), where) from exc
    if m.dim != dim:
        raise ConfigError(f"driver has dimension {m.dim}, domain has {dim}", where)
    if np.any(m.values[0] != 0):
        raise ConfigError("driver must start at 0", where)
    if abs(m.T - T) > 1e-12 * max(1.0, T):
        raise ConfigError(f"driver ends at {m.T}, problem.T is {T}", where)


def parse_problem(doc: dict, base_dir=".") -> Problem:
    for k in sorted(set(doc) - _TABLES):
        raise ConfigError("unknown table", k)
    for k in ("domain", "problem"):
        if k not in doc:
            raise ConfigError("missing required table", k)
    for name, (req, opt) in _KEYS.items():
        if name in doc:
            _keys(doc[name], name, req, opt)
    domain = domain_from_config(doc["domain"])
    phi = potential_from_config(doc.get("potential"), domain)
    prob = doc["problem"]
    x0 = _vector(prob["x0"], domain.dim, "problem.x0")
    try:
        T = float(prob["T"])
    except (TypeError, ValueError):
        raise ConfigError("expected a number", "problem.T") from None
    if not (T > 0 and math.isfinite(T)):
        raise ConfigError("must be positive and finite", "problem.T")
    spec = doc.get("driver", {"kind": "constant", "n_steps": 1000})
    _check_driver(spec, T, domain.dim, base_dir)
    drift = drift_catalog(doc.get("drift"), domain)
    diffusion = diffusion_catalog(doc.get("diffusion"), domain)
    try:
        solver = SolverConfig(**doc.get("solver", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "solver") from exc
    sde = dict(doc.get("sde", {}))
    for key in ("n_steps", "n_paths"):
        if key in sde:
            _positive_int(sde[key], f"sde.{key}")
    return Problem(domain, phi, x0, T, spec, drift, diffusion, solver, sde, dict(doc.get("checks", {})),
                   dict(doc.get("output", {})), base_dir, has_drift="drift" in doc)


def load_problem(path) -> Problem:
    """Read and validate a problem file; every failure is a :class:`ConfigError` naming its location."""
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read: {exc.strerror}", str(path)) from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(exc), str(path)) from exc
    try:
        return parse_problem(doc, os.path.dirname(os.path.abspath(path)))
    except ConfigError as exc:
        raise ConfigError(exc.message, f"{path}: {exc.where}") from exc
