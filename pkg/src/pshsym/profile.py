"""Radial profiles ``f`` with ``u = f(log Phi)`` and their one-dimensional reductions.

A :class:`RadialProfile` is the piecewise-linear interpolant of grid values on
``t_0 < ... < t_m = 0``; below ``t_0`` it is constant (``left_value``) when the
profile is flat near minus infinity. Backward differences are exact for such
profiles, so kinks cost nothing.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DivergentEnergyError, NonconvexInputError, NonFiniteError, ParseError
from .model_measure import ModelGeometry

DEFAULT_TMIN = -20.0
DEFAULT_POINTS = 2001
EPS_CONVEX = 1e-8

_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)


def standard_grid(tmin: float = DEFAULT_TMIN, points: int = DEFAULT_POINTS) -> np.ndarray:
    g = np.linspace(tmin, 0.0, points)
    g[-1] = 0.0
    return g


@dataclass(frozen=True)
class RadialProfile:
    grid: np.ndarray
    values: np.ndarray
    left_value: float | None = None
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 2:
            raise ValueError("grid and values must be 1-d arrays of equal length >= 2")
        if not np.all(np.diff(grid) > 0):
            raise ValueError("grid must be strictly increasing")
        if grid[-1] != 0.0:
            raise ValueError("grid must end at t = 0")
        if not np.all(np.isfinite(values)):
            raise NonFiniteError("profile values must be finite")
        scale = max(1.0, float(np.abs(values).max()))
        if np.any(np.diff(values) < -1e-12 * scale):
            raise ValueError("profile must be non-decreasing")
        if abs(values[-1]) > 1e-9 * scale:
            raise ValueError(f"profile must vanish at t = 0, got f(0) = {values[-1]}")
        if self.left_value is not None and abs(self.left_value - values[0]) > 1e-9 * scale:
            raise ValueError("left_value must equal f(t_0)")

    @property
    def scale(self) -> float:
        return max(1.0, float(np.abs(self.values).max()))

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.grid)

    @property
    def boundary_slope(self) -> float:
        return float(self.slopes[-1])

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        out = np.interp(t, self.grid, self.values)
        below = t < self.grid[0]
        if np.any(below):
            if self.left_value is not None:
                out = np.where(below, self.left_value, out)
            else:
                m0 = self.slopes[0]
                out = np.where(below, self.values[0] + m0 * (t - self.grid[0]), out)
        return out

    def scaled(self, c: float) -> "RadialProfile":
        lv = None if self.left_value is None else c * self.left_value
        return RadialProfile(self.grid, c * self.values, lv)

    def with_flat_tail(self) -> "RadialProfile":
        return RadialProfile(self.grid, self.values, float(self.values[0]))


@dataclass(frozen=True)
class SmoothProfile:
    """Closed-form profile with first and second derivatives (for quadrature)."""

    f: Callable
    df: Callable
    d2f: Callable
    name: str = "smooth"
    flat_below: float | None = None
    length_scale: float = 1.0

    def on_grid(self, grid=None) -> RadialProfile:
        grid = standard_grid() if grid is None else np.asarray(grid)
        vals = np.asarray(self.f(grid), dtype=np.float64)
        vals[-1] = 0.0
        lv = float(vals[0]) if self.flat_below is not None and grid[0] <= self.flat_below else None
        return RadialProfile(grid, vals, lv)


def exp_profile() -> SmoothProfile:
    """``f(t) = e^t - 1``, the radial form of ``Phi - 1``."""
    return SmoothProfile(lambda t: np.expm1(t), np.exp, np.exp, name="exp")


def softmax_truncated_log(a: float, eps: float) -> SmoothProfile:
    """Mollified ``max(t, -a)``: ``eps*log(e^{t/eps} + e^{-a/eps})``, shifted to vanish at 0."""
    shift = eps * np.logaddexp(0.0, -a / eps)

    def f(t):
        return eps * np.logaddexp(np.asarray(t) / eps, -a / eps) - shift

    def df(t):
        return 0.5 * (1.0 + np.tanh((np.asarray(t) + a) / (2 * eps)))

    def d2f(t):
        p = df(t)
        return p * (1.0 - p) / eps

    return SmoothProfile(f, df, d2f, name=f"softmax_trunc_log(a={a},eps={eps})", length_scale=eps)


def truncated_log_profile(a: float, c: float = 1.0, grid=None) -> RadialProfile:
    """``f(t) = c * max(t, -a)`` with the kink placed on the grid."""
    grid = standard_grid() if grid is None else np.asarray(grid)
    if a > 0 and -a > grid[0]:
        grid = np.union1d(grid, [-a])
    vals = c * np.maximum(grid, -a)
    lv = float(vals[0]) if -a >= grid[0] else None
    return RadialProfile(grid, vals, lv)


def zero_profile(grid=None) -> RadialProfile:
    grid = standard_grid() if grid is None else np.asarray(grid)
    return RadialProfile(grid, np.zeros_like(grid), 0.0)


@dataclass(frozen=True)
class EnergyResult:
    value: float
    ibp_value: float
    tail_fraction: float


def energy(p: RadialProfile, geom: ModelGeometry, check_tail: bool = True) -> EnergyResult:
    """``E = int (f')^{n+2} dt`` and the form ``(n+1) int -f f'' (f')^n dt``.

    The second form is evaluated as the Stieltjes integral ``int -f d((f')^{n+1})``
    over the nodes, which is how ``f''`` acts for piecewise-linear ``f``.
    """
    k = geom.n + 2
    h = np.diff(p.grid)
    m = p.slopes
    if np.any(m < -1e-12 * p.scale):
        raise ValueError("energy requires a non-decreasing profile")
    m = np.clip(m, 0.0, None)
    contrib = h * m**k
    value = float(contrib.sum())
    span = p.grid[-1] - p.grid[0]
    decade = p.grid[1:] <= p.grid[0] + 0.1 * span
    tail = float(contrib[decade].sum())
    tail_fraction = tail / value if value > 0 else 0.0
    if check_tail and p.left_value is None and tail_fraction > 1e-3:
        raise DivergentEnergyError(
            f"leftmost decade carries {tail_fraction:.3g} of the energy and the profile has no flat tail"
        )
    m_left = 0.0 if p.left_value is not None else m[0]
    mk = np.concatenate([[m_left], m]) ** (k - 1)
    ibp = float(np.sum(-p.values[:-1] * np.diff(mk)))
    return EnergyResult(value, ibp, tail_fraction)


def _cell_quadrature(p: RadialProfile, integrand):
    """Gauss-Legendre (6 nodes) on each grid cell of ``integrand(t, f(t))``."""
    a, b = p.grid[:-1], p.grid[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    t = mid[:, None] + half[:, None] * _GL_X[None, :]
    fa, fb = p.values[:-1], p.values[1:]
    lam = (t - a[:, None]) / (b - a)[:, None]
    ft = fa[:, None] + lam * (fb - fa)[:, None]
    with np.errstate(over="ignore", invalid="ignore"):
        vals = integrand(t, ft)
    if not np.all(np.isfinite(vals)):
        raise NonFiniteError("integrand overflowed on the profile grid")
    return float(np.sum(half[:, None] * _GL_W[None, :] * vals))


def fiber_integral(p: RadialProfile, F: Callable, geom: ModelGeometry) -> float:
    """``vol * int_{-inf}^0 F(f(t)) e^{l t} dt``; flat tail in closed form."""
    l = geom.l
    body = _cell_quadrature(p, lambda t, ft: F(ft) * np.exp(l * t))
    f0 = p.left_value if p.left_value is not None else p.values[0]
    with np.errstate(over="ignore"):
        tail = float(F(np.asarray(f0))) * math.exp(l * p.grid[0]) / l
    if not math.isfinite(tail):
        raise NonFiniteError("F overflowed on the flat tail")
    return geom.vol * (body + tail)


def dirichlet_norm(w: RadialProfile, geom: ModelGeometry) -> float:
    return energy(w, geom, check_tail=False).value


def moser_exponent(geom: ModelGeometry) -> float:
    return (geom.n + 2) / (geom.n + 1)


def moser_functional(w: RadialProfile, k: float, geom: ModelGeometry, tol: float = 1e-6) -> float:
    """``int_{-inf}^0 exp(k (-w)^{(n+2)/(n+1)}) e^{k t} dt``."""
    if k <= 0:
        raise ValueError("k must be positive")
    d = dirichlet_norm(w, geom)
    if d > 1 + tol:
        warnings.warn(f"Dirichlet norm {d:.6g} exceeds 1; Moser bound does not apply", RuntimeWarning,
                      stacklevel=2)
    pw = moser_exponent(geom)
    body = _cell_quadrature(w, lambda t, wt: np.exp(k * (np.clip(-wt, 0, None) ** pw + t)))
    w0 = w.left_value if w.left_value is not None else w.values[0]
    with np.errstate(over="ignore"):
        tail = math.exp(k * (max(-w0, 0.0) ** pw + w.grid[0])) / k
    if not math.isfinite(tail):
        raise NonFiniteError("Moser functional overflowed")
    return body + tail


@dataclass(frozen=True)
class Conjugate:
    """Piecewise-linear ``f*(q) = sup_{t<=0} (q t - f(t))`` on ``q in [0, Q]``.

    For ``q >= Q`` (the boundary slope) the supremum sits at ``t = 0`` and
    ``f*(q) = -f(0) = 0``.
    """

    q: np.ndarray
    values: np.ndarray

    @property
    def q_max(self) -> float:
        return float(self.q[-1])

    def __call__(self, q):
        return np.interp(q, self.q, self.values, right=self.values[-1])


def convexity_report(p: RadialProfile, eps=EPS_CONVEX) -> dict:
    """Minimum second divided difference over interior nodes; pass iff >= -eps*scale.

    ``eps`` may be an array with one tolerance per interior node.
    """
    if p.grid.size < 3:
        raise ValueError("convexity_report needs at least 3 grid points")
    m = p.slopes
    dd = 2.0 * np.diff(m) / (p.grid[2:] - p.grid[:-2])
    tol = np.asarray(eps, dtype=np.float64) * p.scale
    margin = dd + tol
    i = int(np.argmin(margin))
    return {
        "min_second_difference": float(dd.min()),
        "worst_t": float(p.grid[i + 1]),
        "worst_margin": float(margin[i]),
        "passed": bool(margin[i] >= 0.0),
    }


def legendre(p: RadialProfile, eps=EPS_CONVEX) -> Conjugate:
    rep = convexity_report(p, eps) if p.grid.size >= 3 else {"passed": True}
    if not rep["passed"]:
        raise NonconvexInputError(f"profile is not convex near t = {rep['worst_t']:.4g}")
    # running max repairs rounding-level slope inversions admitted by eps
    m = np.maximum.accumulate(np.clip(p.slopes, 0.0, None))
    q = np.concatenate([[0.0], m])
    vals = np.concatenate([[-p.values[0]], m * p.grid[1:] - p.values[1:]])
    q, idx = np.unique(q, return_index=True)
    return Conjugate(q, vals[idx])


def conjugate_back(c: Conjugate, grid=None) -> RadialProfile:
    """Back-transform ``f(t) = max_k (q_k t - F_k)``; the grid gets the breakpoints added."""
    grid = standard_grid() if grid is None else np.asarray(grid)
    flat = True
    if c.q.size > 1:
        bp = np.diff(c.values) / np.diff(c.q)
        flat = bool(bp.min() >= grid[0])
        grid = np.union1d(grid, bp[(bp > grid[0]) & (bp < 0.0)])
    vals = _max_affine(grid, c.q, c.values)
    if abs(vals[-1]) < 1e-10 * max(1.0, np.abs(vals).max()):
        vals[-1] = 0.0
    return RadialProfile(grid, vals, float(vals[0]) if flat else None)


def _max_affine(t, q, F, chunk=512):
    out = np.empty_like(t)
    for s in range(0, t.size, chunk):
        tt = t[s:s + chunk]
        out[s:s + chunk] = np.max(tt[:, None] * q[None, :] - F[None, :], axis=1)
    return out


def biconjugate_error(p: RadialProfile) -> float:
    c = legendre(p)
    back = _max_affine(p.grid, c.q, c.values)
    return float(np.max(np.abs(back - p.values)))


def write_profile_csv(p: RadialProfile, fh) -> None:
    lv = "none" if p.left_value is None else repr(float(p.left_value))
    fh.write(f"# left_value={lv}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "f"])
    for t, f in zip(p.grid, p.values):
        w.writerow([repr(float(t)), repr(float(f))])


def read_profile_csv(fh) -> RadialProfile:
    text = fh.read() if hasattr(fh, "read") else str(fh)
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# left_value="):
        raise ParseError("profile CSV must start with '# left_value=' header")
    raw = lines[0].split("=", 1)[1].strip()
    try:
        lv = None if raw == "none" else float(raw)
        rows = list(csv.reader(io.StringIO("\n".join(lines[1:]))))
        if rows[0] != ["t", "f"]:
            raise ParseError("missing 't,f' column header")
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
        return RadialProfile(data[:, 0], data[:, 1], lv)
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed profile CSV: {exc}") from exc
