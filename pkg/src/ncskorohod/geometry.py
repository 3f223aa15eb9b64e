"""Closed domains with a uniform exterior ball condition.

Every domain answers distance, nearest-point and normal queries on arrays of
shape ``(..., d)``.  Analytic kinds use closed forms; :class:`SmoothLevelSet`
finds nearest points iteratively.  The randomized verifiers at the bottom of
the module sample the domain and measure how far each geometric condition is
from holding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import InteriorPoint, NoDirection, NonConvergence, OutsideUniquenessRegion

__all__ = [
    "Domain",
    "HalfSpace",
    "Box",
    "Ball",
    "SphericalShell",
    "BoxMinusBall",
    "SmoothLevelSet",
    "NormalVector",
    "SUIBC",
    "ViolationReport",
    "distance",
    "project",
    "normal_unit",
    "suibc_direction",
    "check_uebc",
    "check_semiconvex_set",
    "check_suibc",
    "check_drop",
    "level_set_catalog",
    "domain_from_config",
]


def norm(v):
    """Euclidean norm over the last axis (one fixed reduction order everywhere)."""
    v = np.asarray(v, dtype=float)
    return np.sqrt(np.sum(v * v, axis=-1))


def _as_points(z, dim):
    z = np.asarray(z, dtype=float)
    if z.shape[-1:] != (dim,):
        raise ValueError(f"expected points of dimension {dim}, got shape {z.shape}")
    return z


@dataclass(frozen=True)
class NormalVector:
    """Unit outward normal at a boundary point.

    At a corner the cone is spanned by several unit generators; ``direction``
    is then their normalized sum, which lies inside the cone.
    """

    direction: np.ndarray
    base: np.ndarray
    generators: np.ndarray

    @property
    def is_corner(self) -> bool:
        return len(self.generators) > 1


@dataclass(frozen=True)
class SUIBC:
    """Constants of the shifted uniform interior ball condition.

    ``analytic`` is False when (delta, sigma) rest on a user-supplied
    curvature bound and have only been validated by sampling.
    """

    gamma: float
    delta: float
    sigma: float
    analytic: bool = True


@dataclass
class ViolationReport:
    name: str
    max_violation: float
    tolerance: float
    n_checked: int
    worst_point: np.ndarray | None = None
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.max_violation <= self.tolerance)

    def to_dict(self):
        return {
            "name": self.name,
            "max_violation": float(self.max_violation),
            "tolerance": float(self.tolerance),
            "n_checked": int(self.n_checked),
            "pass": self.passed,
            "worst_point": None if self.worst_point is None else [float(c) for c in self.worst_point],
        }


class Domain:
    """Base class.  Subclasses implement the vectorized primitives.

    Attributes
    ----------
    dim : int
    uebc_radius : float
        Exterior ball radius r0 (``inf`` for convex kinds).
    scale : float
        Characteristic length; tolerances are relative to it.
    """

    kind = "domain"
    dim: int
    uebc_radius: float
    scale: float

    # -- primitives -----------------------------------------------------
    def distance(self, z):
        raise NotImplementedError

    def nearest(self, z):
        """Unchecked nearest point; callers are responsible for uniqueness."""
        raise NotImplementedError

    def depth(self, x):
        """Distance to the complement (zero on and outside the boundary)."""
        raise NotImplementedError

    def outward_normal(self, x):
        """Unit outward normal at the boundary point nearest to each ``x``."""
        raise NotImplementedError

    def normal_generators(self, x):
        return self.outward_normal(x)[None, :]

    def sample_boundary(self, n, rng):
        raise NotImplementedError

    def sample_interior(self, n, rng):
        raise NotImplementedError

    def drop_direction(self, x, r0):
        raise NotImplementedError

    @property
    def suibc(self) -> SUIBC:
        raise NoDirection(f"no shifted interior ball construction registered for {self.kind}")

    def suibc_shift(self, y):
        raise NoDirection(f"no shifted interior ball construction registered for {self.kind}")

    @property
    def max_norm(self) -> float:
        return math.inf

    # -- derived --------------------------------------------------------
    @property
    def gamma(self) -> float:
        return 0.0 if math.isinf(self.uebc_radius) else 1.0 / (2.0 * self.uebc_radius)

    @property
    def boundary_tol(self) -> float:
        return 1e-9 * self.scale

    def contains(self, z, tol=None):
        tol = self.boundary_tol if tol is None else tol
        return self.distance(z) <= tol

    def boundary_distance(self, z):
        d = self.distance(z)
        return np.where(d > 0, d, self.depth(z))

    def sample_points(self, n, rng, boundary_fraction=0.25):
        """Mixed sample of E: interior points plus a share of boundary points."""
        nb = int(round(n * boundary_fraction))
        parts = [self.sample_interior(n - nb, rng)]
        if nb:
            parts.append(self.sample_boundary(nb, rng))
        return np.concatenate(parts, axis=0)

    def project(self, z, safety_fraction=0.9):
        z = _as_points(z, self.dim)
        d = self.distance(z)
        limit = safety_fraction * self.uebc_radius
        if np.any(d >= limit):
            worst = float(np.max(d))
            raise OutsideUniquenessRegion(
                f"distance {worst:.6g} to {self.kind} is not below {safety_fraction} * r0 = {limit:.6g}"
            )
        return self.nearest(z)

    def normal_unit(self, x) -> NormalVector:
        x = _as_points(x, self.dim)
        if x.ndim != 1:
            raise ValueError("normal_unit takes a single point")
        if self.boundary_distance(x) > self.boundary_tol:
            if self.distance(x) > self.boundary_tol:
                raise InteriorPoint(f"{x} is outside {self.kind}, not on its boundary")
            raise InteriorPoint(f"{x} is interior to {self.kind}; the normal cone is {{0}}")
        gens = np.atleast_2d(self.normal_generators(x))
        direction = gens.sum(axis=0)
        direction = direction / norm(direction)
        return NormalVector(direction=direction, base=x.copy(), generators=gens)

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim}, r0={self.uebc_radius})"


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _convex_suibc(r_int, h0, gamma=0.0):
    # convex recipe: lambda = sigma = delta <= r/(2(1+h0)) ^ 1
    delta = min(r_int / (2.0 * (1.0 + h0)), 1.0)
    return SUIBC(gamma=gamma, delta=delta, sigma=delta)


def _inset_lambda(gamma, vfactor, *limits):
    """Ball radius for the inset construction: maximize lambda - (v+lambda)^2 gamma.

    With delta = lambda/4 and |v| <= vfactor * 1.25 * lambda the objective is
    lambda - (1 + 1.25 vfactor)^2 lambda^2 gamma.
    """
    a = (1.0 + 1.25 * vfactor) ** 2
    lam = min((0.8,) + tuple(limits))
    if gamma > 0:
        lam = min(lam, 1.0 / (2.0 * a * gamma))
    sigma = lam - a * lam * lam * gamma
    return lam, lam / 4.0, sigma


class HalfSpace(Domain):
    """``{x : <a, x> <= b}`` with ``a`` the outward normal (normalized on construction)."""

    kind = "halfspace"

    def __init__(self, normal, offset, window=5.0):
        a = np.atleast_1d(np.asarray(normal, dtype=float))
        na = float(norm(a))
        if na == 0:
            raise ValueError("half-space normal must be nonzero")
        if na == 1.0:
            self.a, self.b = _frozen(a), float(offset)
        else:
            self.a, self.b = _frozen(a / na), float(offset) / na
        self.dim = a.size
        self.uebc_radius = math.inf
        self.scale = 1.0
        self.window = float(window)
        self._foot = self.b * self.a

    def _slack(self, z):
        return np.sum(z * self.a, axis=-1) - self.b

    def distance(self, z):
        return np.maximum(self._slack(z), 0.0)

    def nearest(self, z):
        s = np.maximum(self._slack(z), 0.0)
        return z - s[..., None] * self.a

    def depth(self, x):
        return np.maximum(-self._slack(x), 0.0)

    def outward_normal(self, x):
        return np.broadcast_to(self.a, np.shape(x)).copy()

    def sample_boundary(self, n, rng):
        p = self._foot + rng.uniform(-self.window, self.window, size=(n, self.dim))
        return p - self._slack(p)[:, None] * self.a

    def sample_interior(self, n, rng):
        p = self._foot + rng.uniform(-self.window, self.window, size=(n, self.dim))
        s = self._slack(p)
        return p - 2.0 * np.maximum(s, 0.0)[:, None] * self.a

    def drop_direction(self, x, r0):
        return np.broadcast_to(-r0 * self.a, np.shape(x)).copy()

    @property
    def suibc(self):
        return _convex_suibc(1.0, 1.0)

    def suibc_shift(self, y):
        s = self.suibc
        # projection on the 1-interior {<a,x> <= b - 1}, scaled by 1/(1+h0) with h0 = 1
        target = y - np.maximum(self._slack(y) + 1.0, 0.0)[..., None] * self.a
        return (target - y) / 2.0, np.full(np.shape(y)[:-1], s.delta)


class Box(Domain):
    kind = "box"

    def __init__(self, lo, hi):
        self.lo, self.hi = _frozen(np.atleast_1d(lo)), _frozen(np.atleast_1d(hi))
        if self.lo.shape != self.hi.shape or np.any(self.hi <= self.lo):
            raise ValueError("box needs lo < hi componentwise")
        self.dim = self.lo.size
        self.uebc_radius = math.inf
        self.scale = float(np.max(self.hi - self.lo))

    def distance(self, z):
        return norm(z - np.clip(z, self.lo, self.hi))

    def nearest(self, z):
        return np.clip(z, self.lo, self.hi)

    def depth(self, x):
        slack = np.minimum(x - self.lo, self.hi - x)
        return np.maximum(np.min(slack, axis=-1), 0.0)

    def outward_normal(self, x):
        x = np.asarray(x, dtype=float)
        p = np.clip(x, self.lo, self.hi)
        out = x - p
        dout = norm(out)
        # interior / on-face: the face with least slack
        below, above = x - self.lo, self.hi - x
        slack = np.concatenate([below, above], axis=-1)
        j = np.argmin(slack, axis=-1)
        face = np.zeros(x.shape[:-1] + (2 * self.dim,))
        np.put_along_axis(face, j[..., None], 1.0, axis=-1)
        inner = face[..., self.dim:] - face[..., : self.dim]
        safe = np.where(dout > 0, dout, 1.0)[..., None]
        return np.where((dout > 0)[..., None], out / safe, inner)

    def normal_generators(self, x):
        tol = self.boundary_tol
        gens = []
        for i in range(self.dim):
            if abs(x[i] - self.lo[i]) <= tol:
                e = np.zeros(self.dim)
                e[i] = -1.0
                gens.append(e)
            if abs(x[i] - self.hi[i]) <= tol:
                e = np.zeros(self.dim)
                e[i] = 1.0
                gens.append(e)
        return np.array(gens) if gens else self.outward_normal(x)[None, :]

    def sample_boundary(self, n, rng):
        widths = self.hi - self.lo
        face_area = np.array([np.prod(np.delete(widths, i)) for i in range(self.dim)])
        p = face_area / face_area.sum() if self.dim > 1 else np.array([1.0])
        pts = rng.uniform(self.lo, self.hi, size=(n, self.dim))
        axis = rng.choice(self.dim, size=n, p=p)
        side = rng.integers(0, 2, size=n)
        rows = np.arange(n)
        pts[rows, axis] = np.where(side == 0, self.lo[axis], self.hi[axis])
        return pts

    def sample_interior(self, n, rng):
        return rng.uniform(self.lo, self.hi, size=(n, self.dim))

    @property
    def max_norm(self):
        return float(norm(np.maximum(np.abs(self.lo), np.abs(self.hi))))

    def drop_direction(self, x, r0):
        lo, hi = self.lo + r0, self.hi - r0
        mid = 0.5 * (self.lo + self.hi)
        lo, hi = np.where(lo <= hi, lo, mid), np.where(lo <= hi, hi, mid)
        return np.clip(x, lo, hi) - x

    @property
    def _interior_radius(self):
        return 0.5 * float(np.min(self.hi - self.lo)) / 2.0

    @property
    def suibc(self):
        r = self._interior_radius
        return _convex_suibc(r, r * math.sqrt(self.dim))

    def suibc_shift(self, y):
        r = self._interior_radius
        h0 = r * math.sqrt(self.dim)
        target = np.clip(y, self.lo + r, self.hi - r)
        return (target - y) / (1.0 + h0), np.full(np.shape(y)[:-1], self.suibc.delta)


def _radial(z, c):
    v = z - c
    r = norm(v)
    safe = np.where(r > 0, r, 1.0)
    u = v / safe[..., None]
    # the center has no preferred direction; pick e_1
    e1 = np.zeros(v.shape[-1])
    e1[0] = 1.0
    u = np.where((r > 0)[..., None], u, e1)
    return r, u


class Ball(Domain):
    kind = "ball"

    def __init__(self, center, radius):
        self.center = _frozen(np.atleast_1d(center))
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")
        self.dim = self.center.size
        self.uebc_radius = math.inf
        self.scale = self.radius

    def distance(self, z):
        r, _ = _radial(z, self.center)
        return np.maximum(r - self.radius, 0.0)

    def nearest(self, z):
        r, u = _radial(z, self.center)
        return np.where((r > self.radius)[..., None], self.center + self.radius * u, z)

    def depth(self, x):
        r, _ = _radial(x, self.center)
        return np.maximum(self.radius - r, 0.0)

    def outward_normal(self, x):
        return _radial(x, self.center)[1]

    def sample_boundary(self, n, rng):
        g = rng.standard_normal((n, self.dim))
        return self.center + self.radius * g / norm(g)[:, None]

    def sample_interior(self, n, rng):
        g = rng.standard_normal((n, self.dim))
        rad = self.radius * rng.uniform(size=n) ** (1.0 / self.dim)
        return self.center + rad[:, None] * g / norm(g)[:, None]

    @property
    def max_norm(self):
        return float(norm(self.center)) + self.radius

    def drop_direction(self, x, r0):
        r, u = _radial(x, self.center)
        target_r = np.minimum(r, max(self.radius - r0, 0.0))
        return self.center + target_r[..., None] * u - x

    @property
    def suibc(self):
        r = self.radius / 2.0
        return _convex_suibc(r, r)

    def suibc_shift(self, y):
        r = self.radius / 2.0
        rad, u = _radial(y, self.center)
        target = self.center + np.minimum(rad, self.radius - r)[..., None] * u
        return (target - y) / (1.0 + r), np.full(np.shape(y)[:-1], self.suibc.delta)


class SphericalShell(Domain):
    """``{x : r_inner <= |x - c| <= r_outer}``; non-convex through its cavity."""

    kind = "shell"

    def __init__(self, center, r_inner, r_outer, uebc_radius=None):
        self.center = _frozen(np.atleast_1d(center))
        self.r_inner, self.r_outer = float(r_inner), float(r_outer)
        if not 0 < self.r_inner < self.r_outer:
            raise ValueError("shell needs 0 < r_inner < r_outer")
        self.dim = self.center.size
        self.uebc_radius = self.r_inner if uebc_radius is None else float(uebc_radius)
        if not 0 < self.uebc_radius <= self.r_inner:
            raise ValueError("shell exterior ball radius must lie in (0, r_inner]")
        self.scale = self.r_outer

    def distance(self, z):
        r, _ = _radial(z, self.center)
        return np.maximum(np.maximum(self.r_inner - r, r - self.r_outer), 0.0)

    def nearest(self, z):
        r, u = _radial(z, self.center)
        rc = np.clip(r, self.r_inner, self.r_outer)
        return np.where((rc != r)[..., None], self.center + rc[..., None] * u, z)

    def depth(self, x):
        r, _ = _radial(x, self.center)
        return np.maximum(np.minimum(r - self.r_inner, self.r_outer - r), 0.0)

    def outward_normal(self, x):
        r, u = _radial(x, self.center)
        inner = (r - self.r_inner) < (self.r_outer - r)
        return np.where(inner[..., None], -u, u)

    def sample_boundary(self, n, rng):
        g = rng.standard_normal((n, self.dim))
        u = g / norm(g)[:, None]
        w = self.r_inner ** (self.dim - 1)
        p_in = w / (w + self.r_outer ** (self.dim - 1))
        rad = np.where(rng.uniform(size=n) < p_in, self.r_inner, self.r_outer)
        return self.center + rad[:, None] * u

    def sample_interior(self, n, rng):
        g = rng.standard_normal((n, self.dim))
        u = g / norm(g)[:, None]
        a, b = self.r_inner**self.dim, self.r_outer**self.dim
        rad = (a + (b - a) * rng.uniform(size=n)) ** (1.0 / self.dim)
        return self.center + rad[:, None] * u

    @property
    def max_norm(self):
        return float(norm(self.center)) + self.r_outer

    def drop_direction(self, x, r0):
        r, u = _radial(x, self.center)
        lo, hi = self.r_inner + r0, self.r_outer - r0
        if lo > hi:
            lo = hi = 0.5 * (self.r_inner + self.r_outer)
        return self.center + np.clip(r, lo, hi)[..., None] * u - x

    @property
    def _inset(self):
        half = 0.5 * (self.r_outer - self.r_inner)
        return _inset_lambda(self.gamma, 1.0, 0.4 * half)

    @property
    def suibc(self):
        lam, delta, sigma = self._inset
        return SUIBC(gamma=self.gamma, delta=delta, sigma=sigma)

    def suibc_shift(self, y):
        lam, delta, _ = self._inset
        r, u = _radial(y, self.center)
        m = lam + delta
        target = self.center + np.clip(r, self.r_inner + m, self.r_outer - m)[..., None] * u
        return target - y, np.full(np.shape(y)[:-1], lam)


class BoxMinusBall(Domain):
    """Axis-aligned box with an open ball removed; the hole must sit strictly inside."""

    kind = "box_minus_ball"

    def __init__(self, lo, hi, hole_center, hole_radius, uebc_radius=None):
        self.box = Box(lo, hi)
        self.hole_center = _frozen(np.atleast_1d(hole_center))
        self.hole_radius = float(hole_radius)
        self.dim = self.box.dim
        if self.hole_center.shape != (self.dim,) or self.hole_radius <= 0:
            raise ValueError("hole must be a ball of positive radius in the box's dimension")
        self._gap = float(np.min(np.minimum(self.hole_center - self.box.lo, self.box.hi - self.hole_center)))
        if self._gap <= self.hole_radius:
            raise ValueError("hole must lie strictly inside the box")
        self.uebc_radius = self.hole_radius if uebc_radius is None else float(uebc_radius)
        if not 0 < self.uebc_radius <= self.hole_radius:
            raise ValueError("exterior ball radius must lie in (0, hole_radius]")
        self.scale = self.box.scale

    def distance(self, z):
        r, _ = _radial(z, self.hole_center)
        return np.maximum(self.box.distance(z), np.maximum(self.hole_radius - r, 0.0))

    def nearest(self, z):
        r, u = _radial(z, self.hole_center)
        in_hole = r < self.hole_radius
        pushed = self.hole_center + self.hole_radius * u
        return np.where(in_hole[..., None], pushed, np.clip(z, self.box.lo, self.box.hi))

    def depth(self, x):
        r, _ = _radial(x, self.hole_center)
        return np.maximum(np.minimum(self.box.depth(x), r - self.hole_radius), 0.0)

    def _near_hole(self, x):
        r, u = _radial(x, self.hole_center)
        box_gap = np.where(self.box.distance(x) > 0, -self.box.distance(x), self.box.depth(x))
        return (r - self.hole_radius) < box_gap, u

    def outward_normal(self, x):
        hole, u = self._near_hole(x)
        return np.where(hole[..., None], -u, self.box.outward_normal(x))

    def normal_generators(self, x):
        hole, u = self._near_hole(x)
        if hole:
            return -u[None, :]
        return self.box.normal_generators(x)

    def sample_boundary(self, n, rng):
        w = self.box.hi - self.box.lo
        box_area = 2 * sum(np.prod(np.delete(w, i)) for i in range(self.dim)) if self.dim > 1 else 2.0
        sphere_area = self.hole_radius ** (self.dim - 1) * (2 * math.pi if self.dim == 2 else 4 * math.pi)
        p_hole = sphere_area / (sphere_area + box_area)
        on_hole = rng.uniform(size=n) < p_hole
        g = rng.standard_normal((n, self.dim))
        sph = self.hole_center + self.hole_radius * g / norm(g)[:, None]
        return np.where(on_hole[:, None], sph, self.box.sample_boundary(n, rng))

    def sample_interior(self, n, rng):
        out = np.empty((0, self.dim))
        while len(out) < n:
            p = self.box.sample_interior(2 * n, rng)
            r, _ = _radial(p, self.hole_center)
            out = np.concatenate([out, p[r >= self.hole_radius]])
        return out[:n]

    @property
    def max_norm(self):
        return self.box.max_norm

    def _inset_target(self, y, m):
        r, u = _radial(y, self.hole_center)
        rr = np.maximum(r, self.hole_radius + m)
        p = self.hole_center + rr[..., None] * u
        p = np.where((r < self.hole_radius + m)[..., None], p, y)
        return np.clip(p, self.box.lo + m, self.box.hi - m)

    def drop_direction(self, x, r0):
        return self._inset_target(x, r0) - x

    @property
    def _inset(self):
        # inflated hole must stay inside the inset box: R + 2 (lambda + delta) < gap
        room = (self._gap - self.hole_radius) / 2.5
        half = 0.5 * float(np.min(self.box.hi - self.box.lo))
        return _inset_lambda(self.gamma, math.sqrt(self.dim), 0.9 * room, 0.4 * half)

    @property
    def suibc(self):
        lam, delta, sigma = self._inset
        return SUIBC(gamma=self.gamma, delta=delta, sigma=sigma)

    def suibc_shift(self, y):
        lam, delta, _ = self._inset
        return self._inset_target(y, lam + delta) - y, np.full(np.shape(y)[:-1], lam)


class SmoothLevelSet(Domain):
    """``E = {phi <= 0}`` for a C^{1,1} function with unit gradient on ``{phi = 0}``.

    ``curvature`` is the bound M on the Hessian of ``phi`` along segments; it
    makes E (and its complement) satisfy the 1/(2M) exterior ball condition,
    so ``uebc_radius = 1/(2M)`` and ``gamma = M``.  Nearest points are found by
    alternating a tangential move toward the query with a Newton return to the
    level set, backtracking whenever the squared distance fails to decrease.
    """

    kind = "level_set"

    def __init__(self, phi, grad, curvature, lo, hi, name="custom", tol=1e-13, max_iter=500,
                 n_cloud=4000, seed=0):
        self.phi, self.grad = phi, grad
        self.curvature = float(curvature)
        if self.curvature <= 0:
            raise ValueError("curvature bound must be positive")
        self.lo, self.hi = _frozen(np.atleast_1d(lo)), _frozen(np.atleast_1d(hi))
        self.dim = self.lo.size
        self.name = name
        self.uebc_radius = 1.0 / (2.0 * self.curvature)
        self.scale = float(np.max(self.hi - self.lo))
        self.tol, self.max_iter = tol, max_iter
        rng = np.random.default_rng(seed)
        self._cloud = self._to_surface(rng.uniform(self.lo, self.hi, size=(n_cloud, self.dim)))
        gn = norm(self.grad(self._cloud))
        if np.max(np.abs(gn - 1.0)) > 1e-6:
            raise ValueError(f"|grad phi| deviates from 1 on the boundary by {np.max(np.abs(gn - 1.0)):.3g}")

    def _newton(self, y, steps=60):
        for _ in range(steps):
            f = self.phi(y)
            if np.max(np.abs(f), initial=0.0) <= self.tol * 1e-2:
                break
            g = self.grad(y)
            g2 = np.sum(g * g, axis=-1)
            # flat spots of phi give no direction; leave those points for the line search to reject
            y = y - (f / np.where(g2 > 1e-300, g2, np.inf))[..., None] * g
        return y

    def _to_surface(self, p):
        """Newton-project points onto the level set, dropping those that stall on flat spots."""
        y = self._newton(p)
        ok = np.all(np.isfinite(y), axis=-1) & (np.abs(self.phi(y)) <= 1e-12 * self.scale)
        return y[ok]

    def _seed(self, z):
        flat = z.reshape(-1, self.dim)
        out = np.empty_like(flat)
        for s in range(0, len(flat), 512):
            block = flat[s:s + 512]
            d2 = np.sum((block[:, None, :] - self._cloud[None, :, :]) ** 2, axis=-1)
            out[s:s + 512] = self._cloud[np.argmin(d2, axis=1)]
        return out.reshape(z.shape)

    def _tangential(self, z, y):
        g = self.grad(y)
        n = g / norm(g)[..., None]
        w = z - y
        return w - np.sum(w * n, axis=-1)[..., None] * n

    def _hessian(self, y, eps=1e-6):
        cols = [(self.grad(y + eps * e) - self.grad(y - eps * e)) / (2 * eps) for e in np.eye(self.dim)]
        return np.stack(cols, axis=-1)

    def _kkt_step(self, z, y):
        """One Newton step on ``y - z + lam grad phi(y) = 0``, ``phi(y) = 0``."""
        g = self.grad(y)
        lam = np.sum((z - y) * g, axis=-1) / np.sum(g * g, axis=-1)
        H = self._hessian(y)
        d = self.dim
        J = np.zeros(y.shape[:-1] + (d + 1, d + 1))
        J[..., :d, :d] = np.eye(d) + lam[..., None, None] * H
        J[..., :d, d] = g
        J[..., d, :d] = g
        F = np.concatenate([y - z + lam[..., None] * g, self.phi(y)[..., None]], axis=-1)
        try:
            delta = np.linalg.solve(J, -F[..., None])[..., 0]
        except np.linalg.LinAlgError:
            return np.full_like(y, np.nan)
        return y + delta[..., :d]

    def closest_boundary_point(self, z):
        """Nearest point of ``{phi = 0}`` to each ``z`` (inside or outside)."""
        z = np.asarray(z, dtype=float)
        y = self._newton(self._seed(z))
        on_surface = 1e-10 * self.scale
        for _ in range(self.max_iter):
            tang = self._tangential(z, y)
            res = norm(tang)
            if np.max(res, initial=0.0) <= self.tol * self.scale and \
                    np.max(np.abs(self.phi(y)), initial=0.0) <= self.tol * self.scale:
                return y
            base = np.sum((z - y) ** 2, axis=-1)
            # Newton on the optimality system first; quadratic near the answer
            with np.errstate(all="ignore"):
                yn = self._newton(self._kkt_step(z, y), steps=8)
                good = (np.all(np.isfinite(yn), axis=-1)
                        & (np.abs(self.phi(yn)) <= on_surface)
                        & (np.sum((z - yn) ** 2, axis=-1) <= base + 1e-12 * (1.0 + base))
                        & (norm(self._tangential(z, yn)) < res))
            # otherwise a tangential move with backtracking
            step = np.ones(y.shape[:-1])
            for _ in range(60):
                cand = self._newton(y + step[..., None] * tang, steps=8)
                ok = ((np.sum((z - cand) ** 2, axis=-1) <= base + 1e-15 * (1.0 + base))
                      & (np.abs(self.phi(cand)) <= on_surface))
                if np.all(ok | good):
                    break
                step = np.where(ok, step, 0.5 * step)
            y = np.where(good[..., None], yn, np.where(ok[..., None], cand, y))
        raise NonConvergence(f"closest point on {self.name} did not converge in {self.max_iter} iterations")

    def distance(self, z):
        z = np.asarray(z, dtype=float)
        out = self.phi(z) > 0
        d = np.zeros(z.shape[:-1])
        if np.any(out):
            zz = z[out]
            d[out] = norm(zz - self.closest_boundary_point(zz))
        return d

    def nearest(self, z):
        z = np.asarray(z, dtype=float)
        out = self.phi(z) > 0
        y = z.copy()
        if np.any(out):
            y[out] = self.closest_boundary_point(z[out])
        return y

    def depth(self, x):
        x = np.asarray(x, dtype=float)
        inside = self.phi(x) < 0
        d = np.zeros(x.shape[:-1])
        if np.any(inside):
            xx = x[inside]
            d[inside] = norm(xx - self.closest_boundary_point(xx))
        return d

    def outward_normal(self, x):
        x = np.asarray(x, dtype=float)
        p = self.closest_boundary_point(x)
        g = self.grad(p)
        return g / norm(g)[..., None]

    def sample_boundary(self, n, rng):
        out = np.empty((0, self.dim))
        while len(out) < n:
            out = np.concatenate([out, self._to_surface(rng.uniform(self.lo, self.hi, size=(2 * n, self.dim)))])
        return out[:n]

    def sample_interior(self, n, rng):
        out = np.empty((0, self.dim))
        while len(out) < n:
            p = rng.uniform(self.lo, self.hi, size=(4 * n, self.dim))
            out = np.concatenate([out, p[self.phi(p) <= 0]])
        return out[:n]

    @property
    def max_norm(self):
        return float(norm(np.maximum(np.abs(self.lo), np.abs(self.hi))))

    def drop_direction(self, x, r0):
        x = np.asarray(x, dtype=float)
        dep = self.depth(x)
        n = self.outward_normal(x)
        p = self.closest_boundary_point(x)
        # move the ball center to depth r0 along the inward normal
        target = np.where((dep < r0)[..., None], p - r0 * n, x)
        return target - x

    @property
    def _inset(self):
        return _inset_lambda(self.gamma, 1.0, self.uebc_radius / 1.25)

    @property
    def suibc(self):
        lam, delta, sigma = self._inset
        return SUIBC(gamma=self.gamma, delta=delta, sigma=sigma, analytic=False)

    def suibc_shift(self, y):
        lam, delta, _ = self._inset
        return self.drop_direction(y, lam + delta), np.full(np.shape(y)[:-1], lam)


# -- level-set catalog ----------------------------------------------------

def _disk_phi(x):
    return 0.5 * (np.sum(x * x, axis=-1) - 1.0)


def _disk_grad(x):
    return np.array(x, dtype=float)


def _annulus_phi(x):
    r = norm(x)
    return (r - 1.5) ** 2 - 0.25


def _annulus_grad(x):
    r, u = _radial(x, np.zeros(np.shape(x)[-1]))
    return (2.0 * (r - 1.5))[..., None] * u


_ROUND_CORE = 0.5  # rounded box = [-0.5, 0.5]^d inflated by 0.5


def _rbox_phi(x):
    d = x - np.clip(x, -_ROUND_CORE, _ROUND_CORE)
    return (np.sum(d * d, axis=-1) - _ROUND_CORE**2) / (2 * _ROUND_CORE)


def _rbox_grad(x):
    return (x - np.clip(x, -_ROUND_CORE, _ROUND_CORE)) / _ROUND_CORE


def level_set_catalog(name, dim=2):
    """Built-in level sets: ``smoothed_disk``, ``smoothed_annulus``, ``smoothed_box``."""
    if name == "smoothed_disk":
        return SmoothLevelSet(_disk_phi, _disk_grad, 1.0, [-1.5] * dim, [1.5] * dim, name=name)
    if name == "smoothed_annulus":
        return SmoothLevelSet(_annulus_phi, _annulus_grad, 1.0, [-2.5] * dim, [2.5] * dim, name=name)
    if name == "smoothed_box":
        return SmoothLevelSet(_rbox_phi, _rbox_grad, 1.0 / _ROUND_CORE, [-1.5] * dim, [1.5] * dim, name=name)
    raise KeyError(f"unknown level set {name!r}")


# -- functional API -------------------------------------------------------

def distance(domain: Domain, z) -> float:
    return float(domain.distance(_as_points(z, domain.dim)))


def project(domain: Domain, z, safety_fraction=0.9) -> np.ndarray:
    return domain.project(z, safety_fraction)


def normal_unit(domain: Domain, x) -> NormalVector:
    return domain.normal_unit(x)


class ShiftedBall(NamedTuple):
    v: np.ndarray
    lam: float


def suibc_direction(domain: Domain, y) -> ShiftedBall:
    """Shift ``v`` and radius ``lam`` of the interior ball attached to ``y``."""
    y = _as_points(y, domain.dim)
    if domain.distance(y) > domain.boundary_tol:
        raise ValueError("suibc_direction needs y in the domain")
    v, lam = domain.suibc_shift(y)
    return ShiftedBall(np.asarray(v), float(lam))


# -- verifiers ------------------------------------------------------------

def _r0_for_check(domain, r0):
    r0 = domain.uebc_radius if r0 is None else float(r0)
    if math.isinf(r0):
        r0 = 1e6 * domain.scale
    return r0


def check_uebc(domain: Domain, n_boundary_samples=1000, rng_seed=0, r0=None, tol=1e-9) -> ViolationReport:
    """Measure ``r0 - d_E(x + r0 u)`` over sampled boundary points and normal generators.

    A positive value means the exterior ball of radius ``r0`` touching at ``x``
    overlaps the set.
    """
    if n_boundary_samples < 1:
        raise ValueError("need at least one boundary sample")
    rng = np.random.default_rng(rng_seed)
    r0 = _r0_for_check(domain, r0)
    xs = domain.sample_boundary(n_boundary_samples, rng)
    worst, where = -math.inf, None
    for x in xs:
        gens = np.atleast_2d(domain.normal_generators(x))
        d = domain.distance(x + r0 * gens)
        viol = r0 - d
        j = int(np.argmax(viol))
        if viol[j] > worst:
            worst, where = float(viol[j]), x
    return ViolationReport("uebc", worst, tol, len(xs), where, {"r0": r0})


def check_semiconvex_set(domain: Domain, gamma, n_samples=1000, rng_seed=0, n_probes=400, tol=1e-9) -> ViolationReport:
    """Max of ``<u, y - x> - gamma |u| |y - x|^2`` for boundary ``x``, unit normals ``u`` and ``y`` in E."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    rng = np.random.default_rng(rng_seed)
    xs = domain.sample_boundary(n_samples, rng)
    ys = domain.sample_points(n_probes, rng, boundary_fraction=0.5)
    worst, where = -math.inf, None
    for x in xs:
        gens = np.atleast_2d(domain.normal_generators(x))
        w = ys - x
        val = w @ gens.T - gamma * np.sum(w * w, axis=-1)[:, None] * norm(gens)[None, :]
        m = float(np.max(val))
        if m > worst:
            worst, where = m, x
    return ViolationReport("semiconvex_set", worst, tol, len(xs) * len(ys), where, {"gamma": gamma})


def _ball_points(center, radius, n, rng):
    d = center.shape[-1]
    g = rng.standard_normal((n, d))
    u = g / norm(g)[:, None]
    rad = radius * np.where(rng.uniform(size=n) < 0.5, 1.0, rng.uniform(size=n) ** (1.0 / d))
    return center + rad[:, None] * u


def check_suibc(domain: Domain, n_samples=300, rng_seed=0, n_neighbors=8, n_ball=64, tol=1e-9) -> ViolationReport:
    """Sample y, neighbors x within delta, and points of B(x + v_y, lam_y); report max distance to E.

    Condition (i), ``lam - (|v| + lam)^2 gamma >= sigma`` and ``|v| <= 1``,
    enters the report as ``sigma - (lam - ...)`` and ``|v| - 1``.
    """
    rng = np.random.default_rng(rng_seed)
    s = domain.suibc
    ys = domain.sample_points(n_samples, rng, boundary_fraction=0.5)
    v, lam = domain.suibc_shift(ys)
    cond_i = s.sigma - (lam - (norm(v) + lam) ** 2 * s.gamma)
    cond_v = norm(v) - 1.0
    worst = float(max(np.max(cond_i), np.max(cond_v)))
    where = ys[int(np.argmax(cond_i))]
    for y, vy, ly in zip(ys, v, lam):
        xs = _ball_points(y, s.delta, 4 * n_neighbors, rng)
        xs = xs[domain.contains(xs, tol=0.0)][:n_neighbors]
        xs = np.concatenate([y[None, :], xs])
        for x in xs:
            d = float(np.max(domain.distance(_ball_points(x + vy, ly, n_ball, rng))))
            if d > worst:
                worst, where = d, x
    return ViolationReport("suibc", worst, tol, len(ys), where,
                           {"gamma": s.gamma, "delta": s.delta, "sigma": s.sigma, "analytic": s.analytic})


def check_drop(domain: Domain, h0, r0, n_samples=300, rng_seed=0, n_drop=200, tol=1e-9) -> ViolationReport:
    """Sample x in E and points of the drop conv{x, B(x + v_x, r0)}; report max distance to E.

    ``|v_x| - h0`` also counts as a violation when positive.
    """
    if h0 <= 0 or r0 <= 0:
        raise ValueError("h0 and r0 must be positive")
    rng = np.random.default_rng(rng_seed)
    xs = domain.sample_points(n_samples, rng, boundary_fraction=0.5)
    vs = domain.drop_direction(xs, r0)
    worst, where = float(np.max(norm(vs) - h0)), xs[int(np.argmax(norm(vs)))]
    for x, v in zip(xs, vs):
        u = _ball_points(x + v, r0, n_drop, rng)
        t = rng.uniform(size=n_drop)
        t[: n_drop // 4] = 1.0
        pts = x + t[:, None] * (u - x)
        d = float(np.max(domain.distance(pts)))
        if d > worst:
            worst, where = d, x
    return ViolationReport("drop", worst, tol, len(xs), where, {"h0": h0, "r0": r0})


# -- configuration --------------------------------------------------------

_DOMAIN_FIELDS = {
    "halfspace": ({"normal", "offset"}, {"window"}),
    "box": ({"lo", "hi"}, set()),
    "ball": ({"center", "radius"}, set()),
    "shell": ({"center", "r_inner", "r_outer"}, {"uebc_radius"}),
    "box_minus_ball": ({"lo", "hi", "hole_center", "hole_radius"}, {"uebc_radius"}),
    "level_set": ({"name"}, {"dim"}),
}


def domain_from_config(section: dict, where="domain") -> Domain:
    """Build a domain from a ``domain`` config table with a ``kind`` discriminator."""
    from .errors import ConfigError

    if not isinstance(section, dict):
        raise ConfigError("expected a table", where)
    kind = section.get("kind")
    if kind not in _DOMAIN_FIELDS:
        raise ConfigError(f"unknown kind {kind!r}; expected one of {sorted(_DOMAIN_FIELDS)}", f"{where}.kind")
    required, optional = _DOMAIN_FIELDS[kind]
    keys = set(section) - {"kind"}
    for k in sorted(keys - required - optional):
        raise ConfigError("unknown key", f"{where}.{k}")
    for k in sorted(required - keys):
        raise ConfigError("missing required key", f"{where}.{k}")
    args = {k: section[k] for k in keys}
    try:
        if kind == "halfspace":
            return HalfSpace(**args)
        if kind == "box":
            return Box(**args)
        if kind == "ball":
            return Ball(**args)
        if kind == "shell":
            return SphericalShell(**args)
        if kind == "box_minus_ball":
            return BoxMinusBall(**args)
        return level_set_catalog(args["name"], int(args.get("dim", 2)))
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc), where) from exc
