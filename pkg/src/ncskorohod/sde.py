"""Pathwise simulation of reflected SDEs ``X + K = x0 + int f(X) ds + int G(X) dB``.

A Brownian path is fixed first and the catching-up solver is run along it.
When a step must be halved, the Brownian increment is split by sampling the
bridge midpoint, so refined drivers are still Brownian in law.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import GridMismatch, StepCollapse
from .geometry import norm
from .paths import Path
from .potential import SemiconvexPotential
from .skorohod import DriftField, SkorohodSolution, SolverConfig, _Engine, certify

__all__ = [
    "BrownianDriver",
    "DiffusionField",
    "MonteCarloReport",
    "PathwiseStabilityReport",
    "brownian",
    "simulate",
    "monte_carlo",
    "pathwise_stability",
    "bridge_split",
]

# second entropy word for the bridge generator, so it never replays the driver's stream
_BRIDGE_STREAM = 0x5EED


@dataclass(frozen=True)
class BrownianDriver:
    seed: int
    dim: int
    grid: np.ndarray
    increments: np.ndarray

    @property
    def T(self):
        return float(self.grid[-1])

    @property
    def path(self) -> Path:
        vals = np.concatenate([np.zeros((1, self.dim)), np.cumsum(self.increments, axis=0)])
        return Path(self.grid, vals)


def brownian(seed: int, T: float, n_steps: int, dim: int = 1) -> BrownianDriver:
    """Gaussian increments with variance ``dt`` on a uniform grid; a pure function of its arguments."""
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if T < 0:
        raise ValueError("T must be nonnegative")
    if T == 0:
        return BrownianDriver(int(seed), dim, np.zeros(1), np.zeros((0, dim)))
    grid = np.linspace(0.0, T, n_steps + 1)
    grid[-1] = T
    rng = np.random.default_rng(seed)
    inc = rng.standard_normal((n_steps, dim)) * np.sqrt(np.diff(grid))[:, None]
    return BrownianDriver(int(seed), dim, grid, inc)


class DiffusionField:
    """Diffusion matrix ``G(t, x)`` of shape ``(d, k)`` (``(..., d, k)`` for batched ``x``)."""

    def __init__(self, G, noise_dim, lipschitz_ell=0.0, g_sharp_bound=None, name="custom", vectorized=True):
        self.G = G
        self.noise_dim = int(noise_dim)
        self.lipschitz_ell = float(lipschitz_ell)
        self.g_sharp_bound = g_sharp_bound if g_sharp_bound is not None else (lambda t: math.inf)
        self.name = name
        self.vectorized = vectorized

    def __call__(self, t, x):
        return np.asarray(self.G(t, x), dtype=float)

    def apply(self, t, x, dB):
        """``G(t, x) dB`` with one fixed reduction order for single and batched states."""
        return np.sum(self(t, x) * dB[..., None, :], axis=-1)

    def check_lipschitz(self, domain, t=0.0, n_samples=1000, rng_seed=0, tol=1e-9):
        """Max of ``|G(x) - G(y)|_F - ell |x - y|`` over sampled pairs in E."""
        from .geometry import ViolationReport

        rng = np.random.default_rng(rng_seed)
        a = domain.sample_points(n_samples, rng)
        b = domain.sample_points(n_samples, rng)
        ga = np.array([self(t, x) for x in a])
        gb = np.array([self(t, y) for y in b])
        val = np.sqrt(np.sum((ga - gb) ** 2, axis=(-1, -2))) - self.lipschitz_ell * norm(a - b)
        j = int(np.argmax(val))
        return ViolationReport("diffusion_lipschitz", float(val[j]), tol, n_samples, a[j])

    def check_sharp(self, domain, t=0.0, n_samples=1000, rng_seed=0, tol=1e-9):
        from .geometry import ViolationReport

        rng = np.random.default_rng(rng_seed)
        xs = domain.sample_points(n_samples, rng)
        g = np.array([self(t, x) for x in xs])
        val = np.sqrt(np.sum(g * g, axis=(-1, -2))) - self.g_sharp_bound(t)
        j = int(np.argmax(val))
        return ViolationReport("diffusion_sup_bound", float(val[j]), tol, n_samples, xs[j])


def bridge_split(dB, h, rng):
    """Split an increment over ``h`` at the midpoint of the Brownian bridge.

    The first half is ``N(dB/2, h/4)``; the second is the remainder, adjusted
    until the two halves sum to ``dB`` exactly in floating point.
    """
    a = 0.5 * dB + math.sqrt(0.25 * h) * rng.standard_normal(np.shape(dB))
    for _ in range(4):
        b = dB - a
        if np.all(a + b == dB):
            return a, b
        a = dB - b
    a = dB * 0.5
    return a, dB - a


def _check_grid(bm: BrownianDriver, cfg: SolverConfig):
    if len(bm.grid) > 1 and math.isfinite(cfg.base_step) and np.max(np.diff(bm.grid)) > cfg.base_step * (1 + 1e-12):
        raise GridMismatch("Brownian grid is coarser than base_step; generate the driver at the step you want")


def simulate(phi: SemiconvexPotential, xi0, f: DriftField | None, G: DiffusionField, bm: BrownianDriver,
             config: SolverConfig | None = None) -> SkorohodSolution:
    """One path of the reflected SDE along ``bm``.

    The solution's ``driver`` column is the accumulated noise ``sum G dB``.
    """
    cfg = SolverConfig() if config is None else config
    if G.noise_dim != bm.dim:
        raise ValueError(f"diffusion expects {G.noise_dim}-dimensional noise, driver has {bm.dim}")
    _check_grid(bm, cfg)
    rng = np.random.default_rng([bm.seed, _BRIDGE_STREAM])
    eng = _Engine(phi, f, cfg, noise=G.apply, split=bridge_split, rng=rng)
    return eng.run(xi0, bm.grid, bm.increments, driver_ref=f"brownian(seed={bm.seed})")


# -- Monte Carlo --------------------------------------------------------------

THREADS_ENV = "NCSKOROHOD_THREADS"


def _thread_count():
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


BUILTIN_FUNCTIONALS = ("terminal", "terminal_norm", "sup_norm", "variation")


@dataclass
class FunctionalStats:
    mean: np.ndarray
    variance: np.ndarray
    std_error: np.ndarray

    def to_dict(self):
        def out(a):
            a = np.asarray(a, dtype=float)
            return float(a) if a.ndim == 0 else [float(v) for v in a]
        return {"mean": out(self.mean), "variance": out(self.variance), "std_error": out(self.std_error)}


@dataclass
class MonteCarloReport:
    n_paths: int
    n_failures: int
    failed_paths: list
    stats: dict
    base_seed: int
    n_steps: int
    T: float
    certificate_failures: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        return {
            "n_paths": self.n_paths,
            "n_failures": self.n_failures,
            "failed_paths": list(self.failed_paths),
            "base_seed": self.base_seed,
            "n_steps": self.n_steps,
            "T": self.T,
            "functionals": {k: v.to_dict() for k, v in sorted(self.stats.items())},
            "certificate_failures": dict(sorted(self.certificate_failures.items())),
        }


def _summarize(vals):
    vals = np.asarray(vals, dtype=float)
    n = len(vals)
    mean = vals.mean(axis=0)
    var = vals.var(axis=0, ddof=1) if n > 1 else np.zeros_like(mean)
    return FunctionalStats(mean, var, np.sqrt(var / n))


def _batch_run(phi, x0, f, G, bms, cfg):
    """Step a batch of paths in lockstep on a common grid.

    Uses the same expressions as the scalar engine, so paths that never need
    a bisection agree with :func:`simulate` bit for bit.  Returns terminal
    state, running sup norm, total variation, and a mask of paths that would
    have needed a bisection.
    """
    P = len(bms)
    grid = bms[0].grid
    dB = np.stack([b.increments for b in bms], axis=1)  # (N, P, k)
    X = np.tile(np.asarray(x0, dtype=float), (P, 1))
    V = np.zeros(P)
    sup = norm(X)
    bad = np.zeros(P, dtype=bool)
    dom = phi.domain
    limit = cfg.safety_fraction * dom.uebc_radius
    for i in range(len(grid) - 1):
        t0 = float(grid[i])
        h = float(grid[i + 1]) - t0
        nz = G.apply(t0, X, dB[i])
        w = X + nz
        if f is not None:
            w = w + f(t0, X) * h
        gh = phi.grad_g(X) * h
        z = w - gh
        if math.isfinite(limit):
            bad |= dom.distance(z) >= limit
        Xn = dom.nearest(z)
        V = V + norm(w - Xn)
        X = Xn
        sup = np.maximum(sup, norm(X))
    return X, sup, V, bad


def _functional_values(name, x, sup, v):
    if name == "terminal":
        return x
    if name == "terminal_norm":
        return norm(x)
    if name == "sup_norm":
        return sup
    if name == "variation":
        return v
    raise KeyError(f"unknown functional {name!r}")


def monte_carlo(phi: SemiconvexPotential, xi0, f: DriftField | None, G: DiffusionField, T: float, n_steps: int,
                n_paths: int, base_seed: int = 0, functionals: Sequence = ("terminal",),
                config: SolverConfig | None = None, chunk: int = 1000, certify_paths: bool = False,
                keep_values: bool = False, n_workers: int | None = None) -> MonteCarloReport:
    """Aggregate functionals over ``n_paths`` paths; path ``j`` uses seed ``base_seed + j``.

    ``functionals`` holds built-in names (``terminal``, ``terminal_norm``,
    ``sup_norm``, ``variation``) or ``(name, callable)`` pairs applied to each
    :class:`SkorohodSolution`.  Paths that collapse are counted and skipped.
    Chunks of paths may run on ``n_workers`` threads (default from the
    ``NCSKOROHOD_THREADS`` environment variable, else 1).
    """
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    cfg = SolverConfig() if config is None else config
    named = [q for q in functionals if isinstance(q, str)]
    custom = [q for q in functionals if not isinstance(q, str)]
    for q in named:
        if q not in BUILTIN_FUNCTIONALS:
            raise KeyError(f"unknown functional {q!r}")
    batchable = (not custom and not certify_paths and cfg.delay_n is None and G.vectorized
                 and (f is None or f.vectorized))
    keys = named + [name for name, _ in custom]

    def scalar(j, out):
        bm = brownian(base_seed + j, T, n_steps, G.noise_dim)
        try:
            sol = simulate(phi, xi0, f, G, bm, cfg)
        except StepCollapse:
            out["failed"].append(j)
            return
        for q in named:
            out[q].append(_functional_values(q, sol.x[-1], float(np.max(norm(sol.x))), sol.total_variation))
        for name, fn in custom:
            out[name].append(fn(sol))
        if certify_paths:
            c = certify(phi, sol, config=cfg, checks=("domain_membership", "variation", "identity",
                                                      "boundary_support", "normal_alignment"))
            for name in c.failing():
                out["cert"][name] = out["cert"].get(name, 0) + 1

    def run_chunk(start):
        ids = range(start, min(start + chunk, n_paths))
        out = {q: [] for q in keys}
        out["failed"], out["cert"] = [], {}
        if not batchable:
            for j in ids:
                scalar(j, out)
            return out
        bms = [brownian(base_seed + j, T, n_steps, G.noise_dim) for j in ids]
        X, sup, V, bad = _batch_run(phi, xi0, f, G, bms, cfg)
        for pos, j in enumerate(ids):
            if bad[pos]:
                scalar(j, out)
                continue
            for q in named:
                out[q].append(_functional_values(q, X[pos], sup[pos], V[pos]))
        return out

    starts = range(0, n_paths, chunk)
    workers = _thread_count() if n_workers is None else int(n_workers)
    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run_chunk, starts))
    else:
        parts = [run_chunk(s0) for s0 in starts]
    # chunks are merged in path order, so results do not depend on scheduling
    values = {q: [v for p in parts for v in p[q]] for q in keys}
    failed = [j for p in parts for j in p["failed"]]
    cert_fail = {}
    for p in parts:
        for name, c in p["cert"].items():
            cert_fail[name] = cert_fail.get(name, 0) + c
    stats = {q: _summarize(v) for q, v in values.items() if len(v)}
    return MonteCarloReport(n_paths, len(failed), failed, stats, int(base_seed), int(n_steps), float(T),
                            cert_fail, {q: np.asarray(v) for q, v in values.items()} if keep_values else {})


# -- pathwise stability ---------------------------------------------------------

@dataclass
class PathwiseStabilityReport:
    times: np.ndarray
    damped_gap: np.ndarray
    initial_gap: float
    sup_damped_gap: float

    @property
    def ratio(self) -> float:
        return self.sup_damped_gap / self.initial_gap if self.initial_gap > 0 else math.nan

    def to_dict(self):
        return {"initial_gap": self.initial_gap, "sup_damped_gap": self.sup_damped_gap,
                "ratio": None if math.isnan(self.ratio) else self.ratio}


def pathwise_stability(phi: SemiconvexPotential, f: DriftField | None, G: DiffusionField, xi0_a, xi0_b,
                       bm: BrownianDriver, config: SolverConfig | None = None) -> PathwiseStabilityReport:
    """Run two starting points on one Brownian path and report ``sup_t exp(-V_t) |X_t - Xh_t|``.

    ``V_t = 2 rho t + gamma (V(K)_t + V(Kh)_t) + mu^+ t``, evaluated at the
    Brownian grid nodes.
    """
    a = simulate(phi, xi0_a, f, G, bm, config)
    b = simulate(phi, xi0_b, f, G, bm, config)
    t = bm.grid
    xa, xb = a.x_path(t), b.x_path(t)
    va = np.interp(t, a.times, a.cumvar)
    vb = np.interp(t, b.times, b.cumvar)
    mu_plus = max(f.mu_onesided, 0.0) if f is not None else 0.0
    V = 2 * phi.rho * t + phi.gamma * (va + vb) + mu_plus * t
    gap = np.exp(-V) * norm(xa - xb)
    return PathwiseStabilityReport(t, gap, float(norm(np.asarray(xi0_a, float) - np.asarray(xi0_b, float))),
                                   float(np.max(gap)))
