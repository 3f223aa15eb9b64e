"""Named drift and diffusion fields for problem files.

Each builder takes the domain (for sup bounds) and keyword parameters and
returns a field whose constants are exact for that domain.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .geometry import Domain, norm
from .sde import DiffusionField
from .skorohod import DriftField

__all__ = ["drift_catalog", "diffusion_catalog", "DRIFTS", "DIFFUSIONS"]


def _zero_drift(domain: Domain):
    return DriftField(lambda t, x: np.zeros(np.shape(x)), 0.0, lambda t: 0.0, name="zero")


def _linear_pull(domain: Domain, rate=1.0):
    """``f(x) = -rate x``: one-sided constant ``-rate``."""
    rate = float(rate)
    bound = abs(rate) * domain.max_norm
    return DriftField(lambda t, x: -rate * np.asarray(x, dtype=float), -rate, lambda t: bound, name="linear_pull")


def _constant(domain: Domain, value):
    v = np.asarray(value, dtype=float)
    if v.shape != (domain.dim,):
        raise ValueError(f"value must have {domain.dim} components")
    size = float(norm(v))
    return DriftField(lambda t, x: np.broadcast_to(v, np.shape(x)).copy(), 0.0, lambda t: size, name="constant")


def _rotation(domain: Domain, omega=1.0):
    """``f(x) = omega J x`` in the plane; monotone with constant 0."""
    if domain.dim != 2:
        raise ValueError("rotation drift is planar")
    omega = float(omega)
    J = np.array([[0.0, -1.0], [1.0, 0.0]]) * omega
    bound = abs(omega) * domain.max_norm
    return DriftField(lambda t, x: np.asarray(x, dtype=float) @ J.T, 0.0, lambda t: bound, name="rotation")


DRIFTS = {"zero": _zero_drift, "linear_pull": _linear_pull, "constant": _constant, "rotation": _rotation}


def _zero_diffusion(domain: Domain):
    d = domain.dim
    return DiffusionField(lambda t, x: np.zeros(np.shape(x) + (d,)), d, 0.0, lambda t: 0.0, name="zero")


def _scaled_identity(domain: Domain, scale=1.0):
    d = domain.dim
    G0 = float(scale) * np.eye(d)
    size = abs(float(scale)) * np.sqrt(d)
    return DiffusionField(lambda t, x: np.broadcast_to(G0, np.shape(x) + (d,)).copy(), d, 0.0,
                          lambda t: size, name="constant")


def _first_axis(domain: Domain, scale=1.0):
    """Scalar noise along the first coordinate."""
    d = domain.dim
    G0 = np.zeros((d, 1))
    G0[0, 0] = float(scale)
    return DiffusionField(lambda t, x: np.broadcast_to(G0, np.shape(x) + (1,)).copy(), 1, 0.0,
                          lambda t: abs(float(scale)), name="first_axis")


DIFFUSIONS = {"zero": _zero_diffusion, "constant": _scaled_identity, "first_axis": _first_axis}


def _build(table, section, domain, where):
    section = dict(section or {"name": "zero"})
    name = section.pop("name", "zero")
    if name not in table:
        raise ConfigError(f"unknown name {name!r}; expected one of {sorted(table)}", f"{where}.name")
    try:
        return table[name](domain, **section)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name!r}: {exc}", where) from exc
    except ValueError as exc:
        raise ConfigError(str(exc), where) from exc


def drift_catalog(section: dict | None, domain: Domain, where="drift") -> DriftField:
    return _build(DRIFTS, section, domain, where)


def diffusion_catalog(section: dict | None, domain: Domain, where="diffusion") -> DiffusionField:
    return _build(DIFFUSIONS, section, domain, where)
