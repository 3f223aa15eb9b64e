"""Piecewise-linear paths and their functionals.

Every continuous path is stored as values on a strictly increasing grid
starting at 0 and interpolated linearly.  On that class the modulus of
continuity, total variation and sup norm are all computable exactly.
"""

from __future__ import annotations

import csv
import io
import math
from typing import NamedTuple

import numpy as np

from .errors import ArgumentOutOfMuRange, OutOfRange, PathFormatError
from .geometry import norm

__all__ = [
    "Path",
    "BVPath",
    "modulus",
    "mu",
    "mu_inverse",
    "total_variation",
    "paper_constants",
    "PathConstants",
    "read_path_csv",
    "write_path_csv",
    "format_float",
]


class Path:
    """Continuous path ``[0, T] -> R^d``, linear between grid nodes.

    ``values`` of shape ``(N+1,)`` are taken as a 1-D path.
    """

    def __init__(self, times, values):
        t = np.array(times, dtype=float)
        v = np.array(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if t.ndim != 1 or v.ndim != 2 or len(t) != len(v):
            raise ValueError(f"times {t.shape} and values {v.shape} do not match")
        if len(t) == 0:
            raise ValueError("a path needs at least one node")
        if t[0] != 0.0:
            raise ValueError("paths start at t = 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("grid must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValueError("path contains non-finite entries")
        t.setflags(write=False)
        v.setflags(write=False)
        self.times, self.values = t, v

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def __len__(self):
        return len(self.times)

    def __call__(self, t):
        """Linear interpolation at ``t`` (scalar or array), shape ``(..., d)``."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.T):
            raise OutOfRange(f"evaluation time outside [0, {self.T}]")
        if len(self.times) == 1:
            return np.broadcast_to(self.values[0], t.shape + (self.dim,)).copy()
        i = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.n_steps - 1)
        t0, t1 = self.times[i], self.times[i + 1]
        w = ((t - t0) / (t1 - t0))[..., None]
        out = self.values[i] + w * (self.values[i + 1] - self.values[i])
        # nodes are returned exactly
        exact = self.times[i + 1] == t
        return np.where(exact[..., None], self.values[i + 1], out)

    def resample(self, times) -> "Path":
        return Path(times, self(np.asarray(times, dtype=float)))

    def sup_norm(self, t=None) -> float:
        """``sup_{s <= t} |y(s)|``; attained at a node or at ``t``."""
        if t is None or t >= self.T:
            return float(np.max(norm(self.values)))
        keep = self.times <= t
        return float(max(np.max(norm(self.values[keep])), float(norm(self(t)))))

    def running_sup_norm(self):
        return np.maximum.accumulate(norm(self.values))

    def __sub__(self, other: "Path") -> "Path":
        if not np.array_equal(self.times, other.times):
            raise ValueError("paths on different grids")
        return Path(self.times, self.values - other.values)

    def __repr__(self):
        return f"{type(self).__name__}(n_steps={self.n_steps}, T={self.T:g}, dim={self.dim})"


class BVPath(Path):
    """Path with a cumulative variation column.

    If ``cumvar`` is omitted it is the exact node sum of increment norms,
    which is the total variation of the linear interpolant.
    """

    def __init__(self, times, values, cumvar=None):
        super().__init__(times, values)
        if cumvar is None:
            inc = norm(np.diff(self.values, axis=0))
            cumvar = np.concatenate([[0.0], np.cumsum(inc)])
        cv = np.array(cumvar, dtype=float)
        if cv.shape != self.times.shape:
            raise ValueError("cumvar must have one entry per node")
        if cv[0] != 0.0:
            raise ValueError("cumulative variation must start at 0")
        inc = np.diff(cv)
        if np.any(inc < 0):
            raise ValueError("cumulative variation must be nondecreasing")
        short = norm(np.diff(self.values, axis=0)) - inc
        if len(short) and np.max(short) > 1e-12:
            raise ValueError("cumulative variation increments are smaller than the path increments")
        cv.setflags(write=False)
        self.cumvar = cv

    def variation(self, t=None) -> float:
        if t is None:
            return float(self.cumvar[-1])
        return float(np.interp(t, self.times, self.cumvar))


def _check_eps(y: Path, eps):
    if not (0 < eps <= y.T):
        raise OutOfRange(f"eps={eps} outside (0, {y.T}]")


def modulus(y: Path, eps: float) -> float:
    """``sup{|y(t) - y(s)| : |t - s| <= eps}``, exact for linear interpolants.

    On each pair of grid cells ``|y(t) - y(s)|`` is a convex function of
    ``(s, t)`` on a polygon, so its max sits at a polygon vertex: a node pair
    or a pair ``(t_i, t_i + eps)`` / ``(t_j - eps, t_j)``.
    """
    _check_eps(y, eps)
    t, v = y.times, y.values
    best = 0.0
    for k in range(1, len(t)):
        close = (t[k:] - t[:-k]) <= eps
        if not np.any(close):
            break
        best = max(best, float(np.max(norm(v[k:][close] - v[:-k][close]))))
    fwd = t[t + eps <= y.T]
    if len(fwd):
        best = max(best, float(np.max(norm(y(fwd + eps) - y(fwd)))))
    back = t[t - eps >= 0]
    if len(back):
        best = max(best, float(np.max(norm(y(back) - y(back - eps)))))
    return best


def mu(y: Path, eps: float) -> float:
    """``eps + modulus(y, eps)``: strictly increasing."""
    return eps + modulus(y, eps)


def mu_inverse(y: Path, u: float, tol=1e-12) -> float:
    """Solve ``mu(y, eps) = u`` by bisection on ``(0, min(u, T)]``."""
    if not (0 < u <= mu(y, y.T)):
        raise OutOfRange(f"u={u} outside (0, mu(T)]")
    lo, hi = 0.0, min(u, y.T)
    if mu(y, hi) <= u:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if mu(y, mid) < u:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def total_variation(k: Path, s: float = 0.0, t: float | None = None) -> float:
    """Total variation of the interpolant on ``[s, t]`` (node sum with fractional end segments)."""
    t = k.T if t is None else t
    if not (0 <= s <= t <= k.T):
        raise OutOfRange(f"need 0 <= s <= t <= {k.T}, got s={s}, t={t}")
    if s == t:
        return 0.0
    inner = k.times[(k.times > s) & (k.times < t)]
    pts = np.concatenate([[s], inner, [t]])
    vals = k(pts)
    return float(np.sum(norm(np.diff(vals, axis=0))))


class PathConstants(NamedTuple):
    Delta_m: float
    C_Tm: float
    log_C_Tm: float


def paper_constants(m: Path, T: float, C: float, delta: float) -> PathConstants:
    """``Delta_m = 1 / mu_inverse(delta^2 exp(-C(1 + T + |m|_T)))`` and
    ``C_Tm = exp(C(1 + T + |m|_T + Delta_m))``.

    ``C_Tm`` is ``inf`` when the exponent overflows; ``log_C_Tm`` is always finite.
    """
    if C <= 0 or delta <= 0:
        raise ValueError("C and delta must be positive")
    if not (0 < T <= m.T):
        raise OutOfRange(f"T={T} outside (0, {m.T}]")
    mt = m if T == m.T else m.resample(np.concatenate([m.times[m.times < T], [T]]))
    size = mt.sup_norm()
    arg = delta**2 * math.exp(-C * (1.0 + T + size))
    top = mu(mt, T)
    if not (0 < arg <= top):
        raise ArgumentOutOfMuRange(f"delta^2 exp(-C(1+T+|m|)) = {arg:.6g} exceeds mu_m(T) = {top:.6g}")
    delta_m = 1.0 / mu_inverse(mt, arg)
    log_c = C * (1.0 + T + size + delta_m)
    c_tm = math.exp(log_c) if log_c < 709.0 else math.inf
    return PathConstants(delta_m, c_tm, log_c)


# -- CSV --------------------------------------------------------------------

def format_float(x) -> str:
    """Shortest decimal that round-trips exactly."""
    return repr(float(x))


def write_path_csv(dest, path: Path, extra: dict | None = None, names=None):
    """Write ``t,x1..xd[,cumvar][,extra...]``.  ``dest`` is a filename or text stream."""
    names = names or [f"x{i + 1}" for i in range(path.dim)]
    header = ["t"] + list(names)
    cols = [path.times[:, None], path.values]
    if isinstance(path, BVPath):
        header.append("cumvar")
        cols.append(path.cumvar[:, None])
    for key, val in (extra or {}).items():
        val = np.asarray(val, dtype=float).reshape(len(path.times), -1)
        header += [f"{key}{i + 1}" for i in range(val.shape[1])] if val.shape[1] > 1 else [key]
        cols.append(val)
    table = np.concatenate(cols, axis=1)
    own = isinstance(dest, (str, bytes)) or hasattr(dest, "__fspath__")
    fh = open(dest, "w", newline="") if own else dest
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in table:
            w.writerow([format_float(x) for x in row])
    finally:
        if own:
            fh.close()


def read_table(src):
    """Parse a strict numeric CSV; returns ``(header, array)``."""
    own = isinstance(src, (str, bytes)) or hasattr(src, "__fspath__")
    try:
        fh = open(src, newline="") if own else src
    except OSError as exc:
        raise PathFormatError(f"cannot open {src}: {exc}") from exc
    try:
        rows = list(csv.reader(fh))
    finally:
        if own:
            fh.close()
    if not rows:
        raise PathFormatError("empty file")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "t":
        raise PathFormatError("line 1: header must start with 't'")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise PathFormatError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            vals = [float(x) for x in row]
        except ValueError as exc:
            raise PathFormatError(f"line {lineno}: {exc}") from exc
        if not all(math.isfinite(x) for x in vals):
            raise PathFormatError(f"line {lineno}: non-finite value")
        data.append(vals)
    if not data:
        raise PathFormatError("no data rows")
    arr = np.array(data)
    bad = np.nonzero(np.diff(arr[:, 0]) <= 0)[0]
    if len(bad):
        raise PathFormatError(f"line {bad[0] + 3}: times must be strictly increasing")
    if arr[0, 0] != 0.0:
        raise PathFormatError("line 2: first time must be 0")
    return header, arr


def read_path_csv(src) -> Path:
    """Read a ``Path`` (header ``t,x1..xd``) or ``BVPath`` (trailing ``cumvar``)."""
    header, arr = read_table(src)
    expect = [f"x{i + 1}" for i in range(len(header) - 1)]
    if header[-1] == "cumvar":
        expect = [f"x{i + 1}" for i in range(len(header) - 2)] + ["cumvar"]
    if header[1:] != expect:
        raise PathFormatError(f"line 1: unexpected columns {header[1:]}")
    try:
        if header[-1] == "cumvar":
            return BVPath(arr[:, 0], arr[:, 1:-1], arr[:, -1])
        return Path(arr[:, 0], arr[:, 1:])
    except ValueError as exc:
        raise PathFormatError(str(exc)) from exc


def path_to_string(path: Path) -> str:
    buf = io.StringIO()
    write_path_csv(buf, path)
    return buf.getvalue()
