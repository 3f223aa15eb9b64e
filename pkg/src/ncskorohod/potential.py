"""Potentials ``phi = I_E + g`` with a smooth part ``g``.

Such a potential is (rho, gamma)-semiconvex: every Frechet subgradient
``xh`` at ``x`` satisfies

    <xh, y - x> + phi(x) <= phi(y) + (rho + gamma |xh|) |y - x|^2.

With ``gamma = 1/(2 r0)`` from the domain, ``L`` bounding ``|grad g|`` on E and
``kappa = max(0, -lambda_min(hess g))``, the pair ``rho = gamma L + kappa/2``
always works; for convex ``g`` this is ``L/(2 r0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, OutsideDomain
from .geometry import Domain, ViolationReport, norm

__all__ = [
    "INFINITY",
    "SmoothPart",
    "Zero",
    "Linear",
    "Quadratic",
    "Tabulated",
    "SemiconvexPotential",
    "Subgradient",
    "eval_phi",
    "subgradient",
    "check_subdiff_inequality",
    "check_lipschitz",
    "check_gradient",
    "smooth_part_catalog",
    "potential_from_config",
]


class _Infinity:
    """The value of phi off its domain.  Deliberately not a float."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITY"

    def __float__(self):
        raise TypeError("phi is +infinity here; refusing to convert to float")

    def _refuse(self, *args):
        raise TypeError("arithmetic on the +infinity sentinel")

    __add__ = __radd__ = __sub__ = __rsub__ = __mul__ = __rmul__ = _refuse
    __truediv__ = __rtruediv__ = __neg__ = __pow__ = _refuse

    def __bool__(self):
        return True


INFINITY = _Infinity()


class SmoothPart:
    """Smooth function ``g`` on R^d, vectorized over leading axes."""

    name = "smooth"

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def lipschitz_on(self, domain: Domain) -> float:
        """Bound on ``|grad g|`` over the domain."""
        raise NotImplementedError

    @property
    def concavity(self) -> float:
        """``max(0, -lambda_min(hess g))``; zero for convex ``g``."""
        raise NotImplementedError


class Zero(SmoothPart):
    name = "zero"

    def value(self, x):
        return np.zeros(np.shape(x)[:-1])

    def grad(self, x):
        return np.zeros(np.shape(x))

    def lipschitz_on(self, domain):
        return 0.0

    concavity = 0.0


class Linear(SmoothPart):
    """``g(x) = <a, x>``."""

    name = "linear"

    def __init__(self, a):
        self.a = np.atleast_1d(np.asarray(a, dtype=float))

    def value(self, x):
        return np.sum(np.asarray(x) * self.a, axis=-1)

    def grad(self, x):
        return np.broadcast_to(self.a, np.shape(x)).copy()

    def lipschitz_on(self, domain):
        return float(norm(self.a))

    concavity = 0.0


class Quadratic(SmoothPart):
    """``g(x) = x.Q.x / 2 + <b, x>`` with symmetric ``Q``."""

    name = "quadratic"

    def __init__(self, Q, b=None):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape[0] != Q.shape[1]:
            raise ValueError("Q must be square")
        self.Q = 0.5 * (Q + Q.T)
        self.b = np.zeros(len(Q)) if b is None else np.atleast_1d(np.asarray(b, dtype=float))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.sum(x * (x @ self.Q), axis=-1) + np.sum(x * self.b, axis=-1)

    def grad(self, x):
        return np.asarray(x, dtype=float) @ self.Q + self.b

    def lipschitz_on(self, domain):
        qn = float(np.linalg.norm(self.Q, 2))
        if qn == 0:
            return float(norm(self.b))
        return qn * domain.max_norm + float(norm(self.b))

    @property
    def concavity(self):
        return max(0.0, -float(np.linalg.eigvalsh(self.Q)[0]))


class Tabulated(SmoothPart):
    """Bilinear interpolation of values on a 2-D tensor grid.

    Bilinear interpolants have kinks across cell edges, so neither a
    gradient bound nor a semiconvexity constant can be read off reliably.
    Both must be supplied; ``concavity`` is the user's one-sided curvature
    bound.  Outside the grid the interpolant is extended by clamping.
    """

    name = "tabulated"

    def __init__(self, xs, ys, values, lipschitz, concavity):
        self.xs = np.asarray(xs, dtype=float)
        self.ys = np.asarray(ys, dtype=float)
        self.table = np.asarray(values, dtype=float)
        if self.table.shape != (len(self.xs), len(self.ys)):
            raise ValueError("values must have shape (len(xs), len(ys))")
        if np.any(np.diff(self.xs) <= 0) or np.any(np.diff(self.ys) <= 0):
            raise ValueError("grid axes must be strictly increasing")
        self._L = float(lipschitz)
        self._kappa = float(concavity)

    def _cell(self, x):
        x = np.asarray(x, dtype=float)
        px = np.clip(x[..., 0], self.xs[0], self.xs[-1])
        py = np.clip(x[..., 1], self.ys[0], self.ys[-1])
        i = np.clip(np.searchsorted(self.xs, px, side="right") - 1, 0, len(self.xs) - 2)
        j = np.clip(np.searchsorted(self.ys, py, side="right") - 1, 0, len(self.ys) - 2)
        hx = self.xs[i + 1] - self.xs[i]
        hy = self.ys[j + 1] - self.ys[j]
        u = (px - self.xs[i]) / hx
        v = (py - self.ys[j]) / hy
        f = self.table
        return u, v, hx, hy, f[i, j], f[i + 1, j], f[i, j + 1], f[i + 1, j + 1], x

    def value(self, x):
        u, v, _, _, f00, f10, f01, f11, _ = self._cell(x)
        return (1 - u) * (1 - v) * f00 + u * (1 - v) * f10 + (1 - u) * v * f01 + u * v * f11

    def grad(self, x):
        u, v, hx, hy, f00, f10, f01, f11, x = self._cell(x)
        gx = ((1 - v) * (f10 - f00) + v * (f11 - f01)) / hx
        gy = ((1 - u) * (f01 - f00) + u * (f11 - f10)) / hy
        inside_x = (x[..., 0] >= self.xs[0]) & (x[..., 0] <= self.xs[-1])
        inside_y = (x[..., 1] >= self.ys[0]) & (x[..., 1] <= self.ys[-1])
        return np.stack([np.where(inside_x, gx, 0.0), np.where(inside_y, gy, 0.0)], axis=-1)

    def lipschitz_on(self, domain):
        return self._L

    @property
    def concavity(self):
        return self._kappa


@dataclass(frozen=True)
class Subgradient:
    base: np.ndarray
    value: np.ndarray
    normal_part: np.ndarray
    smooth_part_grad: np.ndarray


class SemiconvexPotential:
    """``phi = I_E + g``.

    ``lipschitz_L``, ``rho`` and ``gamma`` default to values derived from the
    domain and the smooth part; explicit overrides are taken as given.
    """

    def __init__(self, domain: Domain, smooth: SmoothPart | None = None, lipschitz_L=None, rho=None, gamma=None):
        self.domain = domain
        self.smooth = Zero() if smooth is None else smooth
        L = self.smooth.lipschitz_on(domain) if lipschitz_L is None else float(lipschitz_L)
        if not math.isfinite(L):
            raise ValueError("gradient bound is infinite on an unbounded domain; pass lipschitz_L")
        self.lipschitz_L = L
        self.gamma = domain.gamma if gamma is None else float(gamma)
        self.rho = self.gamma * L + 0.5 * self.smooth.concavity if rho is None else float(rho)
        if min(self.lipschitz_L, self.rho, self.gamma) < 0:
            raise ValueError("L, rho and gamma must be nonnegative")

    @property
    def dim(self):
        return self.domain.dim

    def g(self, x):
        return self.smooth.value(x)

    def grad_g(self, x):
        return self.smooth.grad(x)

    def __call__(self, x):
        return eval_phi(self, x)

    def __repr__(self):
        return (f"SemiconvexPotential({self.domain!r}, {self.smooth.name}, L={self.lipschitz_L:g}, "
                f"rho={self.rho:g}, gamma={self.gamma:g})")


def eval_phi(phi: SemiconvexPotential, x):
    """``g(x)`` on E (within the boundary tolerance), :data:`INFINITY` elsewhere."""
    x = np.asarray(x, dtype=float)
    if x.shape != (phi.dim,):
        raise ValueError("eval takes a single point")
    if not np.all(np.isfinite(x)):
        raise ValueError("point must be finite")
    if phi.domain.distance(x) > phi.domain.boundary_tol:
        return INFINITY
    return float(phi.g(x))


def subgradient(phi: SemiconvexPotential, x, normal_magnitude=0.0) -> Subgradient:
    """``grad g(x) + normal_magnitude * n(x)`` on the boundary, ``grad g(x)`` inside."""
    x = np.asarray(x, dtype=float)
    if normal_magnitude < 0:
        raise ValueError("normal_magnitude must be nonnegative")
    dom = phi.domain
    if dom.distance(x) > dom.boundary_tol:
        raise OutsideDomain(f"{x} is not in the domain")
    gg = np.asarray(phi.grad_g(x), dtype=float)
    if dom.boundary_distance(x) <= dom.boundary_tol and normal_magnitude > 0:
        npart = normal_magnitude * dom.normal_unit(x).direction
    else:
        npart = np.zeros_like(x)
    return Subgradient(base=x.copy(), value=npart + gg, normal_part=npart, smooth_part_grad=gg)


def semiconvex_defect(phi, x, xh, y, rho, gamma):
    """``<xh, y - x> + g(x) - g(y) - (rho + gamma |xh|) |y - x|^2`` broadcast over pairs and probes."""
    w = y - x
    return (np.sum(xh * w, axis=-1) + phi.g(x) - phi.g(y)
            - (rho + gamma * norm(xh)) * np.sum(w * w, axis=-1))


def check_subdiff_inequality(phi: SemiconvexPotential, pairs, probes, rho=None, gamma=None, tol=1e-9) -> ViolationReport:
    """Max over pairs x probes of the semiconvexity defect (positive means violated)."""
    rho = phi.rho if rho is None else rho
    gamma = phi.gamma if gamma is None else gamma
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    if not pairs or not len(probes):
        return ViolationReport("subdiff_inequality", -math.inf, tol, 0)
    bases = np.array([p.base for p in pairs])
    vals = np.array([p.value for p in pairs])
    d = semiconvex_defect(phi, bases[:, None, :], vals[:, None, :], probes[None, :, :], rho, gamma)
    i, j = np.unravel_index(int(np.argmax(d)), d.shape)
    return ViolationReport("subdiff_inequality", float(d[i, j]), tol, d.size, bases[i],
                           {"rho": rho, "gamma": gamma, "probe": probes[j].tolist()})


def sample_pairs(phi: SemiconvexPotential, n, rng, max_magnitude=3.0):
    """Random subgradient selections: boundary points with random normal magnitudes plus interior points."""
    dom = phi.domain
    xb = dom.sample_boundary(n // 2, rng)
    xi = dom.sample_interior(n - n // 2, rng)
    out = []
    for x in xb:
        gens = np.atleast_2d(dom.normal_generators(x))
        w = rng.uniform(size=len(gens))
        npart = max_magnitude * rng.uniform() * (w @ gens) / max(w.sum(), 1e-300)
        gg = phi.grad_g(x)
        out.append(Subgradient(x, npart + gg, npart, gg))
    for x in xi:
        gg = phi.grad_g(x)
        out.append(Subgradient(x, gg, np.zeros_like(x), gg))
    return out


def check_lipschitz(phi: SemiconvexPotential, n_samples=2000, rng_seed=0, tol=1e-9) -> ViolationReport:
    """Max of ``|g(x) - g(y)| / |x - y| - L`` over sampled pairs in E."""
    rng = np.random.default_rng(rng_seed)
    a = phi.domain.sample_points(n_samples, rng)
    b = phi.domain.sample_points(n_samples, rng)
    # include close pairs, where the ratio approaches |grad g|
    b[: n_samples // 2] = a[: n_samples // 2] + 1e-4 * rng.standard_normal((n_samples // 2, phi.dim))
    b[: n_samples // 2] = phi.domain.nearest(b[: n_samples // 2])
    dist = norm(a - b)
    ok = dist > 0
    ratio = np.abs(phi.g(a[ok]) - phi.g(b[ok])) / dist[ok]
    j = int(np.argmax(ratio))
    return ViolationReport("lipschitz", float(ratio[j] - phi.lipschitz_L), tol, int(ok.sum()), a[ok][j])


def check_gradient(phi: SemiconvexPotential, n_samples=200, rng_seed=0, h=1e-6, tol=1e-5) -> ViolationReport:
    """Relative error between ``grad g`` and central differences at sampled interior points."""
    rng = np.random.default_rng(rng_seed)
    xs = phi.domain.sample_interior(n_samples, rng)
    eye = np.eye(phi.dim)
    fd = np.stack([(phi.g(xs + h * e) - phi.g(xs - h * e)) / (2 * h) for e in eye], axis=-1)
    g = phi.grad_g(xs)
    err = norm(fd - g) / np.maximum(1.0, norm(g))
    j = int(np.argmax(err))
    return ViolationReport("gradient", float(err[j]), tol, n_samples, xs[j])


def smooth_part_catalog(name, dim):
    """Named smooth parts: ``zero``, ``radial_well`` (|x|^2/2) and ``tilt`` (x_1)."""
    if name == "zero":
        return Zero()
    if name == "radial_well":
        return Quadratic(np.eye(dim))
    if name == "tilt":
        a = np.zeros(dim)
        a[0] = 1.0
        return Linear(a)
    raise KeyError(f"unknown smooth part {name!r}")


def potential_from_config(section: dict | None, domain: Domain, where="potential") -> SemiconvexPotential:
    """Build from a ``potential`` table: ``smooth_part`` plus optional ``a``, ``Q``, ``b``, ``rho``, ``gamma``, ``L``."""
    section = {} if section is None else dict(section)
    allowed = {"smooth_part", "a", "Q", "b", "rho", "gamma", "L"}
    for k in sorted(set(section) - allowed):
        raise ConfigError("unknown key", f"{where}.{k}")
    kind = section.get("smooth_part", "zero")
    try:
        if kind == "linear":
            if "a" not in section:
                raise ConfigError("missing required key", f"{where}.a")
            smooth = Linear(section["a"])
        elif kind == "quadratic":
            if "Q" not in section:
                raise ConfigError("missing required key", f"{where}.Q")
            smooth = Quadratic(section["Q"], section.get("b"))
        else:
            smooth = smooth_part_catalog(kind, domain.dim)
        return SemiconvexPotential(domain, smooth, section.get("L"), section.get("rho"), section.get("gamma"))
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc), f"{where}.smooth_part") from exc
