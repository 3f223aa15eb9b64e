"""Catching-up solver for ``x + k = x0 + int f + m``, ``dk in d^-phi(x)(dt)``, and its certificate.

One step from ``x`` over ``[t, t + h]`` with driver increment ``dm``:

    w = (x + dm) + f(t, x) h
    z = w - grad g(x) h
    x_new = pi_E(z),   dk = w - x_new

so ``dk = grad g(x) h + (z - x_new)`` with the second term in the normal cone
at ``x_new``.  If ``z`` lands too far outside E for the projection to be well
conditioned the step is halved, recursively.  The certificate re-derives
every increment from the stored ``x`` and ``k`` and tests the defining
conditions of a solution on the grid.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import GridMismatch, NoDirection, PathFormatError, StartOutsideDomain, StepCollapse
from .geometry import norm
from .paths import BVPath, Path, format_float, read_table
from .potential import SemiconvexPotential

__all__ = [
    "SolverConfig",
    "DriftField",
    "SkorohodSolution",
    "CheckResult",
    "Certificate",
    "StabilityReport",
    "RateReport",
    "solve",
    "solve_with_drift",
    "certify",
    "stability_gap",
    "convergence_study",
    "skorohod_map_1d",
    "read_solution_csv",
]


@dataclass(frozen=True)
class SolverConfig:
    """Discretization knobs.

    ``base_step`` caps the main step; ``inf`` steps on the driver's own grid.
    ``boundary_tol`` of ``None`` uses the domain default.
    """

    base_step: float = math.inf
    safety_fraction: float = 0.5
    max_bisections: int = 40
    delay_n: int | None = None
    boundary_tol: float | None = None
    residual_tol: float = 1e-6

    def __post_init__(self):
        if not self.base_step > 0:
            raise ValueError("base_step must be positive")
        if not 0 < self.safety_fraction < 1:
            raise ValueError("safety_fraction must lie in (0, 1)")
        if self.max_bisections < 0:
            raise ValueError("max_bisections must be nonnegative")
        if self.delay_n is not None and self.delay_n < 1:
            raise ValueError("delay_n must be at least 1")
        if self.residual_tol <= 0:
            raise ValueError("residual_tol must be positive")

    def tol_for(self, domain):
        return domain.boundary_tol if self.boundary_tol is None else self.boundary_tol


class DriftField:
    """Drift ``f(t, x)`` with its one-sided Lipschitz constant and sup bound.

    ``f`` must accept ``x`` of shape ``(..., d)`` when ``vectorized`` is true.
    """

    def __init__(self, f, mu_onesided=0.0, f_sharp_bound=None, name="custom", vectorized=True):
        self.f = f
        self.mu_onesided = float(mu_onesided)
        self.f_sharp_bound = f_sharp_bound if f_sharp_bound is not None else (lambda t: math.inf)
        self.name = name
        self.vectorized = vectorized

    def __call__(self, t, x):
        return np.asarray(self.f(t, x), dtype=float)

    def check_onesided(self, domain, t=0.0, n_samples=1000, rng_seed=0, tol=1e-9):
        """Max of ``<x - y, f(x) - f(y)> - mu |x - y|^2`` over sampled pairs in E."""
        from .geometry import ViolationReport

        rng = np.random.default_rng(rng_seed)
        a = domain.sample_points(n_samples, rng)
        b = domain.sample_points(n_samples, rng)
        fa = np.array([self(t, x) for x in a])
        fb = np.array([self(t, y) for y in b])
        w = a - b
        val = np.sum(w * (fa - fb), axis=-1) - self.mu_onesided * np.sum(w * w, axis=-1)
        j = int(np.argmax(val))
        return ViolationReport("onesided_lipschitz", float(val[j]), tol, n_samples, a[j])

    def check_sharp(self, domain, t=0.0, n_samples=1000, rng_seed=0, tol=1e-9):
        """Max of ``|f(t, x)| - f_sharp(t)`` over sampled x in E."""
        from .geometry import ViolationReport

        rng = np.random.default_rng(rng_seed)
        xs = domain.sample_points(n_samples, rng)
        val = norm(np.array([self(t, x) for x in xs])) - self.f_sharp_bound(t)
        j = int(np.argmax(val))
        return ViolationReport("drift_sup_bound", float(val[j]), tol, n_samples, xs[j])


@dataclass
class SkorohodSolution:
    """Grid solution.  Row ``i`` of each ``*_parts`` array is the step ending at ``times[i+1]``."""

    times: np.ndarray
    x: np.ndarray
    k: np.ndarray
    cumvar: np.ndarray
    normal_parts: np.ndarray
    smooth_parts: np.ndarray
    drift_parts: np.ndarray
    driver: np.ndarray
    driver_ref: str = ""
    n_bisections: int = 0

    @property
    def x0(self):
        return self.x[0]

    @property
    def x_path(self) -> Path:
        return Path(self.times, self.x)

    @property
    def k_path(self) -> BVPath:
        return BVPath(self.times, self.k, self.cumvar)

    @property
    def driver_path(self) -> Path:
        return Path(self.times, self.driver)

    @property
    def total_variation(self) -> float:
        return float(self.cumvar[-1])

    @property
    def dim(self):
        return self.x.shape[1]

    def at(self, times):
        """``(x, k)`` interpolated at ``times``."""
        return self.x_path(times), Path(self.times, self.k)(times)

    def write_csv(self, dest):
        """``t, x1..xd, k1..kd, cumvar`` with round-trip decimals."""
        d = self.dim
        header = ["t"] + [f"x{i + 1}" for i in range(d)] + [f"k{i + 1}" for i in range(d)] + ["cumvar"]
        table = np.concatenate([self.times[:, None], self.x, self.k, self.cumvar[:, None]], axis=1)
        lines = [",".join(header)] + [",".join(format_float(v) for v in row) for row in table]
        text = "\n".join(lines) + "\n"
        if hasattr(dest, "write"):
            dest.write(text)
        else:
            with open(dest, "w", newline="") as fh:
                fh.write(text)


def read_solution_csv(src, driver: Path | None = None) -> SkorohodSolution:
    """Read a solution CSV.  Values are taken as written; invariants are left to :func:`certify`."""
    header, arr = read_table(src)
    ncol = len(header) - 2
    if ncol < 2 or ncol % 2 or header[-1] != "cumvar":
        raise PathFormatError("line 1: expected t,x1..xd,k1..kd,cumvar")
    d = ncol // 2
    expect = [f"x{i + 1}" for i in range(d)] + [f"k{i + 1}" for i in range(d)]
    if header[1:-1] != expect:
        raise PathFormatError(f"line 1: unexpected columns {header[1:-1]}")
    times = arr[:, 0]
    x, k, cv = arr[:, 1:1 + d], arr[:, 1 + d:1 + 2 * d], arr[:, -1]
    n = len(times) - 1
    drv = driver(times) if driver is not None else x + k - x[0]
    zero = np.zeros((n, d))
    return SkorohodSolution(times, x, k, cv, zero.copy(), zero.copy(), zero.copy(), drv, driver_ref=str(src))


# -- engine -----------------------------------------------------------------

def _halve(inc, h, rng):
    a = inc * 0.5
    return a, inc - a


class _Engine:
    """Recursive catching-up stepper shared by the deterministic and stochastic solvers.

    ``noise(t, x, inc)`` maps a driver increment to a state increment and
    ``split(inc, h, rng)`` divides an increment into two halves that sum to it
    exactly.
    """

    def __init__(self, phi: SemiconvexPotential, drift: DriftField | None, cfg: SolverConfig,
                 noise: Callable, split: Callable = _halve, rng=None):
        self.phi, self.drift, self.cfg = phi, drift, cfg
        self.noise, self.split, self.rng = noise, split, rng
        dom = phi.domain
        self.limit = cfg.safety_fraction * dom.uebc_radius
        self.check_excursion = math.isfinite(self.limit)
        self.lag = None if cfg.delay_n is None else 1.0 / cfg.delay_n

    def _drift_state(self, t):
        if self.lag is None:
            return self._x[-1]
        s = t - self.lag
        if s < 0:
            return self._x[0]
        i = bisect.bisect_right(self._t, s) - 1
        if self._t[i] == s:
            return self._x[i]
        t0, t1 = self._t[i], self._t[i + 1]
        w = (s - t0) / (t1 - t0)
        return self._x[i] + w * (self._x[i + 1] - self._x[i])

    def _advance(self, t0, t1, x, inc, depth):
        h = t1 - t0
        nz = self.noise(t0, x, inc)
        w = x + nz
        if self.drift is not None:
            fd = self.drift(t0, self._drift_state(t0)) * h
            w = w + fd
        else:
            fd = np.zeros_like(x)
        gh = self.phi.grad_g(x) * h
        z = w - gh
        if self.check_excursion and self.phi.domain.distance(z) >= self.limit:
            if depth >= self.cfg.max_bisections:
                raise StepCollapse(
                    f"excursion still >= {self.cfg.safety_fraction} r0 after {depth} bisections at t={t0:.6g}", time=t0)
            self.n_bisections += 1
            a, b = self.split(inc, h, self.rng)
            tm = t0 + 0.5 * h
            x = self._advance(t0, tm, x, a, depth + 1)
            return self._advance(tm, t1, x, b, depth + 1)
        x_new = self.phi.domain.nearest(z)
        dk = w - x_new
        self._t.append(t1)
        self._x.append(x_new)
        self._dk.append(dk)
        self._gh.append(gh)
        self._fd.append(fd)
        self._nz.append(nz)
        return x_new

    def run(self, x0, times, incs, driver_ref=""):
        x0 = np.array(x0, dtype=float)
        dom = self.phi.domain
        if x0.shape != (dom.dim,):
            raise ValueError(f"x0 must have shape ({dom.dim},)")
        if dom.distance(x0) > self.cfg.tol_for(dom):
            raise StartOutsideDomain(f"x0={x0.tolist()} is not in the domain")
        self._t, self._x = [float(times[0])], [x0]
        self._dk, self._gh, self._fd, self._nz = [], [], [], []
        self.n_bisections = 0
        x = x0
        for i in range(len(times) - 1):
            x = self._advance(float(times[i]), float(times[i + 1]), x, incs[i], 0)
        return self._finish(driver_ref)

    def _finish(self, driver_ref):
        d = self.phi.dim
        t = np.array(self._t)
        x = np.array(self._x).reshape(len(t), d)
        dk = np.array(self._dk).reshape(len(t) - 1, d)
        gh = np.array(self._gh).reshape(len(t) - 1, d)
        fd = np.array(self._fd).reshape(len(t) - 1, d)
        nz = np.array(self._nz).reshape(len(t) - 1, d)
        zero = np.zeros((1, d))
        k = np.cumsum(np.concatenate([zero, dk]), axis=0)
        cumvar = np.concatenate([[0.0], np.cumsum(norm(dk))])
        driver = np.cumsum(np.concatenate([zero, nz]), axis=0)
        return SkorohodSolution(t, x, k, cumvar, dk - gh, gh, fd, driver, driver_ref, self.n_bisections)


def _main_grid(m: Path, base_step):
    """Driver nodes, each cell subdivided into pieces no longer than ``base_step``."""
    if math.isinf(base_step):
        return m.times, m.values
    pieces = [m.times[:1]]
    for a, b in zip(m.times[:-1], m.times[1:]):
        n = max(1, math.ceil((b - a) / base_step * (1 - 1e-12)))
        sub = a + (b - a) * np.arange(1, n + 1) / n
        sub[-1] = b
        pieces.append(sub)
    times = np.concatenate(pieces)
    return times, m(times)


def solve_with_drift(phi: SemiconvexPotential, x0, drift: DriftField | None, m: Path,
                     config: SolverConfig | None = None, driver_ref="") -> SkorohodSolution:
    """Solve with drift ``f`` (evaluated at ``x(t - 1/n)`` when ``config.delay_n = n``)."""
    cfg = SolverConfig() if config is None else config
    if m.dim != phi.dim:
        raise ValueError(f"driver dimension {m.dim} does not match domain dimension {phi.dim}")
    if np.any(m.values[0] != 0):
        raise ValueError("driver must start at 0")
    times, vals = _main_grid(m, cfg.base_step)
    incs = np.diff(vals, axis=0)
    eng = _Engine(phi, drift, cfg, noise=lambda t, x, inc: inc)
    sol = eng.run(x0, times, incs, driver_ref)
    sol.driver = m(sol.times)
    return sol


def solve(phi: SemiconvexPotential, x0, m: Path, config: SolverConfig | None = None, driver_ref="") -> SkorohodSolution:
    """Solve ``x + k = x0 + m`` with ``dk in d^-phi(x)(dt)``."""
    return solve_with_drift(phi, x0, None, m, config, driver_ref)


def skorohod_map_1d(x0: float, m) -> tuple[np.ndarray, np.ndarray]:
    """Explicit reflection map on ``[0, inf)`` at the nodes of ``m`` (values of shape ``(N+1,)``).

    ``x = x0 + m + max(0, max_{s<=t} -(x0 + m(s)))``, exact for piecewise-linear ``m``
    because the running minimum of a linear interpolant is attained at nodes.
    """
    m = np.asarray(m, dtype=float).reshape(-1)
    y = x0 + m
    push = np.maximum(0.0, np.maximum.accumulate(-y))
    x = y + push
    return x, -push


# -- certificate --------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    residual: float
    tolerance: float
    passed: bool
    witness_time: float | None = None

    def to_dict(self):
        return {
            "name": self.name,
            "residual": _jsonable(self.residual),
            "tolerance": _jsonable(self.tolerance),
            "pass": bool(self.passed),
            "witness_time": None if self.witness_time is None else _jsonable(self.witness_time),
        }


def _jsonable(v):
    v = float(v)
    if math.isfinite(v):
        return v
    return "inf" if v > 0 else ("-inf" if v < 0 else "nan")


@dataclass
class Certificate:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def names(self):
        return [c.name for c in self.checks]

    def failing(self):
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self):
        return {"pass": self.passed, "checks": [c.to_dict() for c in self.checks]}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _check(name, residual, tol, witness=None):
    residual = float(residual)
    ok = bool(residual <= tol) if not math.isnan(residual) else False
    return CheckResult(name, residual, float(tol), ok, None if witness is None else float(witness))


def _kadane(r):
    """Max window sum over the first axis of ``r`` (shape ``(N, P)``); returns (best, end index)."""
    best = np.full(r.shape[1:], -np.inf)
    where = np.zeros(r.shape[1:], dtype=int)
    cur = np.full(r.shape[1:], -np.inf)
    for i in range(len(r)):
        cur = np.maximum(r[i], cur + r[i])
        better = cur > best
        best = np.where(better, cur, best)
        where = np.where(better, i, where)
    return best, where


def jv_residuals(phi: SemiconvexPotential, x, normal, smooth, h, dk_norm, y, rho, gamma):
    """Per-step defect of the discretized integral inequality for probe values ``y`` (shape ``(N+1, P, d)``).

    Step ``i`` contributes
        <y_{i+1} - x_{i+1}, n_i> + <y_i - x_i, s_i> + (g(x_i) - g(y_i)) h_i
        - rho h_i max(e_i, e_{i+1}) - gamma |dk_i| e_{i+1},   e_i = |y_i - x_i|^2,
    which is <= 0 whenever ``n_i`` is a proximal normal at ``x_{i+1}`` and g is
    semiconvex with the potential's constants.  Steps with a probe value
    outside E contribute ``-inf`` (phi(y) is infinite there).
    """
    xs = x[:, None, :]
    e = np.sum((y - xs) ** 2, axis=-1)
    r = (np.sum((y[1:] - xs[1:]) * normal[:, None, :], axis=-1)
         + np.sum((y[:-1] - xs[:-1]) * smooth[:, None, :], axis=-1)
         + (phi.g(x[:-1])[:, None] - phi.g(y[:-1])) * h[:, None]
         - rho * h[:, None] * np.maximum(e[:-1], e[1:])
         - gamma * dk_norm[:, None] * e[1:])
    dom = phi.domain
    inside = dom.distance(y) <= dom.boundary_tol
    ok = inside[:-1] & inside[1:]
    return np.where(ok, r, -np.inf)


def windowed_variation_slack(times, x, k, cumvar, delta, sigma, L, rho):
    """Min over node windows with ``max_r |x_r - x_s| <= delta`` of
    ``|k_t - k_s| / sigma + (3L + 4 rho)(t - s) / sigma - (V_t - V_s)``.

    Returns ``(slack, s_time, n_windows)``; slack is ``inf`` when no window qualifies.
    """
    n = len(times)
    c = (3.0 * L + 4.0 * rho) / sigma
    osc = np.zeros(n)
    best, where, count = math.inf, None, 0
    for j in range(1, n):
        s = np.arange(n - j)
        osc = np.maximum(osc[: n - j], norm(x[j:] - x[: n - j]))
        ok = osc <= delta
        if not np.any(ok):
            break
        s = s[ok]
        t = s + j
        slack = norm(k[t] - k[s]) / sigma + c * (times[t] - times[s]) - (cumvar[t] - cumvar[s])
        count += len(s)
        i = int(np.argmin(slack))
        if slack[i] < best:
            best, where = float(slack[i]), float(times[s[i]])
    return best, where, count


def certify(phi: SemiconvexPotential, sol: SkorohodSolution, m: Path | None = None, probes: Sequence[Path] = (),
            config: SolverConfig | None = None, drift: DriftField | None = None, n_constant_probes=32,
            n_alignment_probes=100, rng_seed=0, checks=None) -> Certificate:
    """Check the defining conditions of a solution on the solution grid.

    Increments are re-derived from the stored ``x`` and ``k``: ``dk_i`` is the
    difference of ``k``, its smooth part is ``grad g(x_i) h_i`` and the rest is
    the normal part at ``x_{i+1}``.  The driver is ``m`` (interpolated on the
    solution grid, which must contain its nodes) or the solution's own driver.
    Drift increments are recomputed from ``drift`` when given.

    Passing is a necessary condition only: the integral inequality is tested
    against a finite probe family.
    """
    cfg = SolverConfig() if config is None else config
    dom = phi.domain
    btol = cfg.tol_for(dom)
    t, x, k, cv = sol.times, sol.x, sol.k, sol.cumvar
    want = set(checks) if checks is not None else None
    cert = Certificate()

    def wanted(name):
        return want is None or name in want

    if m is not None:
        if abs(m.T - t[-1]) > 1e-12 * max(1.0, m.T):
            raise GridMismatch(f"driver horizon {m.T} differs from solution horizon {t[-1]}")
        idx = np.searchsorted(t, m.times)
        idx = np.minimum(idx, len(t) - 1)
        if np.any(np.abs(t[idx] - m.times) > 1e-12 * max(1.0, m.T)):
            raise GridMismatch("solution grid does not contain the driver's nodes")
        mv = m(t)
    else:
        mv = sol.driver

    h = np.diff(t)
    dk = np.diff(k, axis=0)
    dk_norm = norm(dk)
    smooth = phi.grad_g(x[:-1]) * h[:, None]
    normal = dk - smooth
    if drift is not None:
        lagged = x[:-1] if cfg.delay_n is None else _lagged_states(t, x, 1.0 / cfg.delay_n)
        fd = np.array([drift(ti, xi) for ti, xi in zip(t[:-1], lagged)]).reshape(dk.shape) * h[:, None]
    else:
        fd = sol.drift_parts if len(sol.drift_parts) == len(dk) else np.zeros_like(dk)
    V = float(cv[-1]) if np.isfinite(cv[-1]) else math.inf

    # (1) membership
    if wanted("domain_membership"):
        dist = dom.distance(x)
        i = int(np.argmax(dist))
        cert.checks.append(_check("domain_membership", dist[i], btol, t[i]))

    # (2) k(0) = 0 and a consistent variation column
    if wanted("variation"):
        gap = np.concatenate([[abs(cv[0])], [float(norm(k[0]))], dk_norm - np.diff(cv)])
        if not np.all(np.isfinite(gap)):
            gap = np.where(np.isfinite(gap), gap, np.inf)
        i = int(np.argmax(gap))
        cert.checks.append(_check("variation", max(gap[i], 0.0), 1e-12, t[max(i - 2, 0)] if i >= 2 else 0.0))

    # (3) x + k = x0 + sum f h + m
    if wanted("identity"):
        fsum = np.cumsum(np.concatenate([np.zeros((1, x.shape[1])), fd]), axis=0)
        res = norm(x + k - x[0] - fsum - mv)
        i = int(np.argmax(res))
        cert.checks.append(_check("identity", res[i], 1e-10, t[i]))

    rng = np.random.default_rng(rng_seed)

    # (4) integral inequality over a probe family
    if wanted("integral_inequality"):
        const = [dom.sample_points(n_constant_probes, rng, boundary_fraction=0.5)]
        on_bd = x[dom.boundary_distance(x) <= btol]
        if len(on_bd):
            const.append(on_bd[np.linspace(0, len(on_bd) - 1, min(16, len(on_bd))).astype(int)])
        const = np.concatenate(const)
        ys = [np.broadcast_to(const[None, :, :], (len(t),) + const.shape)]
        step = 0.05 * min(dom.scale, dom.uebc_radius)
        shifts = np.concatenate([np.eye(dom.dim), -np.eye(dom.dim)]) * step
        ys.append(np.stack([dom.nearest(x + v) for v in shifts], axis=1))
        for p in probes:
            ys.append(np.asarray(p(t)).reshape(len(t), 1, dom.dim))
        y = np.concatenate(ys, axis=1)
        r = jv_residuals(phi, x, normal, smooth, h, dk_norm, y, phi.rho, phi.gamma)
        best, end = _kadane(r)
        j = int(np.argmax(best))
        resid = max(float(best[j]), 0.0) if len(r) else 0.0
        scale = 1.0 + float(np.max(norm(x)))
        cert.checks.append(_check("integral_inequality", resid, cfg.residual_tol * scale, t[end[j] + 1] if len(r) else 0.0))

    # (5) normal increments only at boundary nodes
    if wanted("boundary_support"):
        interior = dom.boundary_distance(x[1:]) > btol
        nn = norm(normal)
        inside_var = float(np.sum(nn[interior]))
        w = t[1:][interior][int(np.argmax(nn[interior]))] if inside_var > 0 else None
        cert.checks.append(_check("boundary_support", inside_var, cfg.residual_tol * V, w))

    # (6) each normal part is a proximal normal at its base
    if wanted("normal_alignment"):
        yp = dom.sample_points(n_alignment_probes, rng, boundary_fraction=0.5)
        nn = norm(normal)
        active = np.nonzero(nn > 0)[0]
        worst, wt = -math.inf, None
        for s in range(0, len(active), 2048):
            a = active[s:s + 2048]
            base = x[a + 1]
            wv = yp[None, :, :] - base[:, None, :]
            val = (np.sum(wv * normal[a][:, None, :], axis=-1)
                   - phi.gamma * nn[a][:, None] * np.sum(wv * wv, axis=-1))
            i, _ = np.unravel_index(int(np.argmax(val)), val.shape)
            if val.max() > worst:
                worst, wt = float(val.max()), float(t[a[i] + 1])
        cert.checks.append(_check("normal_alignment", max(worst, 0.0) if len(active) else 0.0, 1e-9, wt))

    # (7) variation controlled by displacement on small windows
    if wanted("windowed_variation"):
        try:
            s = dom.suibc
        except NoDirection:
            s = None
        if s is not None:
            slack, where, _ = windowed_variation_slack(t, x, k, cv, s.delta, s.sigma, phi.lipschitz_L, phi.rho)
            resid = 0.0 if math.isinf(slack) else max(0.0, -slack)
            cert.checks.append(_check("windowed_variation", resid, 1e-9 * (1.0 + V), where))
    return cert


def _lagged_states(t, x, lag):
    s = t[:-1] - lag
    out = np.empty((len(s), x.shape[1]))
    for j in range(x.shape[1]):
        out[:, j] = np.interp(np.maximum(s, 0.0), t, x[:, j])
    out[s < 0] = x[0]
    exact = np.searchsorted(t, s)
    hit = (s >= 0) & (exact < len(t)) & (t[np.minimum(exact, len(t) - 1)] == s)
    out[hit] = x[exact[hit]]
    return out


# -- stability and convergence --------------------------------------------------

@dataclass
class StabilityReport:
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    margin: float
    holder_ratio: float
    # same bound with the sup norm of k - kh in place of its variation; never looser
    margin_sup: float = math.nan

    @property
    def passed(self) -> bool:
        return bool(self.margin >= 0)

    def to_dict(self):
        return {"margin": _jsonable(self.margin), "margin_sup": _jsonable(self.margin_sup),
                "holder_ratio": _jsonable(self.holder_ratio), "pass": self.passed}


def stability_gap(phi: SemiconvexPotential, sol1: SkorohodSolution, sol2: SkorohodSolution,
                  m1: Path | None = None, m2: Path | None = None) -> StabilityReport:
    """Compare ``sup_{s<=t} |x - xh|^2`` with
    ``2 (|x0 - xh0|^2 + |m - mh|_t^2 + 2 |m - mh|_t V(k - kh)_t) exp(8 rho t + 4 gamma (V(k)_t + V(kh)_t))``
    at every grid time.  Both solutions must share one grid.  ``margin_sup``
    repeats the comparison with ``sup_{s<=t} |k - kh|`` in place of ``V(k - kh)_t``.
    """
    if sol1.times.shape != sol2.times.shape or np.any(sol1.times != sol2.times):
        raise GridMismatch("stability comparison needs both solutions on one grid")
    t = sol1.times
    d1 = m1(t) if m1 is not None else sol1.driver
    d2 = m2(t) if m2 is not None else sol2.driver
    lhs = np.maximum.accumulate(np.sum((sol1.x - sol2.x) ** 2, axis=-1))
    dm = np.maximum.accumulate(norm(d1 - d2))
    dk = sol1.k - sol2.k
    vdiff = np.concatenate([[0.0], np.cumsum(norm(np.diff(dk, axis=0)))])
    x0gap = float(np.sum((sol1.x[0] - sol2.x[0]) ** 2))
    with np.errstate(over="ignore"):
        growth = np.exp(8 * phi.rho * t + 4 * phi.gamma * (sol1.cumvar + sol2.cumvar))
    rhs = 2.0 * (x0gap + dm**2 + 2.0 * dm * vdiff) * growth
    margin = float(np.min(rhs - lhs))
    ksup = np.maximum.accumulate(norm(dk))
    with np.errstate(invalid="ignore"):
        margin_sup = float(np.min(2.0 * (x0gap + dm**2 + 2.0 * dm * ksup) * growth - lhs))
    sup_m = float(dm[-1])
    ratio = float(np.sqrt(lhs[-1]) / np.sqrt(sup_m)) if sup_m > 0 else math.nan
    return StabilityReport(t, lhs, rhs, margin, ratio, margin_sup)


@dataclass
class RateReport:
    steps: list
    errors_x: list
    errors_k: list
    rate_x: float
    rate_k: float

    def to_dict(self):
        return {
            "steps": [int(s) for s in self.steps],
            "errors_x": [_jsonable(e) for e in self.errors_x],
            "errors_k": [_jsonable(e) for e in self.errors_k],
            "rate_x": _jsonable(self.rate_x),
            "rate_k": _jsonable(self.rate_k),
        }


def _fit_rate(steps, errors):
    s, e = np.asarray(steps, float), np.asarray(errors, float)
    ok = e > 0
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(1.0 / s[ok]), np.log(e[ok]), 1)[0])


def convergence_study(phi: SemiconvexPotential, x0, m: Path, steps: Sequence[int],
                      config: SolverConfig | None = None, drift: DriftField | None = None) -> RateReport:
    """Solve on uniform grids with ``steps`` cells and compare with the solution on ``m``'s own grid.

    Errors are sup norms over the coarse nodes.  The rate is the slope of
    log error against log step size.
    """
    steps = [int(s) for s in steps]
    if any(b <= a for a, b in zip(steps, steps[1:])) or steps[0] < 1:
        raise ValueError("steps must be strictly increasing positive integers")
    cfg = SolverConfig() if config is None else config
    ref = solve_with_drift(phi, x0, drift, m, cfg)
    kref = Path(ref.times, ref.k)
    ex, ek = [], []
    for n in steps:
        grid = np.linspace(0.0, m.T, n + 1)
        grid[-1] = m.T
        sol = solve_with_drift(phi, x0, drift, m.resample(grid), cfg)
        ex.append(float(np.max(norm(sol.x - ref.x_path(sol.times)))))
        ek.append(float(np.max(norm(sol.k - kref(sol.times)))))
    return RateReport(steps, ex, ek, _fit_rate(steps, ex), _fit_rate(steps, ek))
