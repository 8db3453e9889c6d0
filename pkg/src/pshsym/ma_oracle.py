"""Monge-Ampere energy of toric functions, computed independently of the radial formula.

With ``dd^c log|w|^2`` of unit mass, ``(dd^c u)^{n+1}`` pushes forward to
``(n+1)! det D^2 g(x) dx`` for ``u = g(x)``, so

    E(u) = ((n+1)! / vol) int (-g) det D^2 g dx.

Two routes are provided:

* :func:`energy_quadrature` smooths ``max`` into a softmax of temperature ``eps``,
  integrates ``(-g) det D^2 g`` by adaptive Gauss-Legendre cubature in the
  coordinates ``(t, y)`` with ``t = log Phi`` and ``y_j = x_j - x_0`` (unit
  Jacobian), and extrapolates linearly to ``eps = 0``;
* :func:`energy_pl_2d` (``n = 1``) is exact for max-of-pieces functions: the real
  Monge-Ampere measure has atoms at vertices (area of the gradient hull) and a
  continuous part along kink curves that involve a log piece, where the segment
  between the two active gradients sweeps area.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize
from scipy.spatial import ConvexHull, QhullError
from scipy.special import logsumexp

from . import kernels
from .errors import ConfigError, InconsistentOraclesError
from .model_measure import ModelGeometry
from .profile import SmoothProfile

DEFAULT_EPS = (0.02, 0.01)


@dataclass(frozen=True)
class MAAtom:
    location: np.ndarray
    mass: float
    value: float
    active: tuple = ()


@dataclass(frozen=True)
class QuadratureConfig:
    tmin: float = -20.0
    ymax: float = 20.0
    eps: tuple = DEFAULT_EPS
    refine: float = 2.0
    order: int = 5
    backend: str | None = None


@dataclass
class QuadratureResult:
    value: float
    error: float
    by_eps: dict = field(default_factory=dict)
    negative_determinant: bool = False
    truncation_warning: bool = False
    tail_fraction: float = 0.0
    leaves: int = 0


# geometry helpers ----------------------------------------------------------

def _logq_from_y(y):
    """``log q`` for ``q = softmax(0, y)``; ``y`` has shape (N, n)."""
    z = np.concatenate([np.zeros((y.shape[0], 1)), y], axis=1)
    return z - logsumexp(z, axis=1, keepdims=True)


def _tensor_gl(order, dim):
    x, w = np.polynomial.legendre.leggauss(order)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.ones(nodes.shape[0])
    for g in np.meshgrid(*([w] * dim), indexing="ij"):
        weights = weights * g.ravel()
    return nodes, weights


def _pieces_only(u):
    if u.smooths:
        raise ConfigError("energy quadrature needs affine, log or smooth radial pieces")
    if u.radials:
        if len(u.radials) > 1 or len(u.aff_b) or len(u.log_A):
            raise ConfigError("radial pieces cannot be mixed with other pieces in quadrature")
        prof, _ = u.radials[0]
        if not isinstance(prof, SmoothProfile):
            raise ConfigError("quadrature needs a smooth radial profile with derivatives")
        return False
    return True


# piecewise (affine + log) route ---------------------------------------------

def _piece_bounds(u, c, hw):
    """Values, gradients and Lipschitz bounds of every piece on each cell, in (t, y)."""
    n = u.dim - 1
    t, y = c[:, 0], c[:, 1:]
    logq = _logq_from_y(y)
    q = np.exp(logq)
    x = t[:, None] + logq
    a, b = u.aff_a, u.aff_b
    sa = a.sum(axis=1)
    N, K, J = c.shape[0], b.size, u.log_A.size
    h = np.empty((N, K + J))
    G = np.zeros((N, K + J, n + 1))
    L = np.zeros((K + J, n + 1))
    curv = np.zeros((K + J, n + 1))
    if K:
        h[:, :K] = x @ a.T + b
        G[:, :K, 0] = sa
        G[:, :K, 1:] = a[None, :, 1:] - q[:, None, 1:] * sa[None, :, None]
        L[:K, 0] = sa
        L[:K, 1:] = np.maximum(a[:, 1:], sa[:, None] - a[:, 1:])
        curv[:K, 1:] = sa[:, None] / 4.0
    if J:
        h[:, K:] = t[:, None] * u.log_A + u.log_b
        G[:, K:, 0] = u.log_A
        L[K:, 0] = u.log_A
    R = hw @ L.T
    return h, G, R, curv


def _refine_cells(u, cfg: QuadratureConfig, eps: float, refine: float):
    n = u.dim - 1
    D = n + 1
    is_log = np.zeros(u.aff_b.size + u.log_A.size, dtype=bool)
    is_log[u.aff_b.size:] = True
    nt = int(math.ceil(-cfg.tmin))
    ny = int(math.ceil(2 * cfg.ymax / 2.5))
    edges = [np.linspace(cfg.tmin, 0.0, nt + 1)] + [np.linspace(-cfg.ymax, cfg.ymax, ny + 1)] * n
    lo = np.stack(np.meshgrid(*[e[:-1] for e in edges], indexing="ij"), -1).reshape(-1, D)
    hi = np.stack(np.meshgrid(*[e[1:] for e in edges], indexing="ij"), -1).reshape(-1, D)
    c, hw = 0.5 * (lo + hi), 0.5 * (hi - lo)
    delta = 30.0 * eps
    leaves_c, leaves_hw = [], []
    min_hw = eps / 64.0
    while c.shape[0]:
        h, G, R, curv = _piece_bounds(u, c, hw)
        M = np.max(h - R, axis=1)
        active = h + R >= (M - delta)[:, None]
        n_act = active.sum(axis=1)
        rank = (n_act - 1) + n * (active & is_log[None, :]).sum(axis=1)
        keep = rank >= n + 1
        c, hw, G, active = c[keep], hw[keep], G[keep], active[keep]
        if not c.shape[0]:
            break
        big = np.where(active[:, :, None], G, -np.inf).max(axis=1)
        small = np.where(active[:, :, None], G, np.inf).min(axis=1)
        bend = np.where(active[:, :, None], curv[None, :, :], 0.0).max(axis=1)
        variation = (big - small + bend * hw) * 2.0 * hw
        split = (variation > refine * eps) & (hw > min_hw)
        leaf = ~split.any(axis=1)
        leaves_c.append(c[leaf])
        leaves_hw.append(hw[leaf])
        c, hw, split = c[~leaf], hw[~leaf], split[~leaf]
        if not c.shape[0]:
            break
        # halve every flagged dimension
        for d in range(D):
            s = split[:, d]
            hh = hw.copy()
            hh[s, d] *= 0.5
            left = c.copy()
            left[s, d] -= hh[s, d]
            right = c[s].copy()
            right[:, d] += hh[s, d]
            c = np.concatenate([left, right])
            hw = np.concatenate([hh, hh[s]])
            split = np.concatenate([split, split[s]])
    if leaves_c:
        return np.concatenate(leaves_c), np.concatenate(leaves_hw)
    return np.zeros((0, D)), np.zeros((0, D))


def _integrate_leaves(u, c, hw, eps, order, weight, backend, chunk=200_000):
    D = u.dim
    nodes, w = _tensor_gl(order, D)
    per = nodes.shape[0]
    total = 0.0
    contrib = np.zeros(c.shape[0])
    min_det = 0.0
    max_det = 0.0
    step = max(1, chunk // per)
    for s in range(0, c.shape[0], step):
        cc, hh = c[s:s + step], hw[s:s + step]
        pts = (cc[:, None, :] + hh[:, None, :] * nodes[None, :, :]).reshape(-1, D)
        jac = np.repeat(np.prod(hh, axis=1), per) * np.tile(w, cc.shape[0])
        t, y = pts[:, 0], pts[:, 1:]
        logq = _logq_from_y(y)
        x = t[:, None] + logq
        g, det = kernels.softmax_ma_density(x, t, np.exp(logq), u.aff_a, u.aff_b, u.log_A, u.log_b,
                                            eps, backend=backend)
        vals = weight(g, det) * jac
        contrib[s:s + step] = vals.reshape(-1, per).sum(axis=1)
        min_det = min(min_det, float(det.min()))
        max_det = max(max_det, float(np.abs(det).max()))
    total = float(contrib.sum())
    return total, contrib, (min_det, max_det)


def _piecewise_integral(u, geom, cfg: QuadratureConfig, weight):
    by_eps = {}
    neg = False
    tail = 0.0
    nleaves = 0
    for eps in cfg.eps:
        vals = []
        for refine in (cfg.refine, cfg.refine / 2):
            c, hw = _refine_cells(u, cfg, eps, refine)
            val, contrib, (mn, mx) = _integrate_leaves(u, c, hw, eps, cfg.order, weight, cfg.backend)
            vals.append(val)
            neg |= mn < -1e-8 * max(mx, 1.0)
            lo_edge = c - hw
            hi_edge = c + hw
            outer = (lo_edge[:, 0] <= cfg.tmin + 1.0) | np.any(np.abs(lo_edge[:, 1:]) >= cfg.ymax - 2.5, axis=1) \
                | np.any(np.abs(hi_edge[:, 1:]) >= cfg.ymax - 2.5, axis=1)
            if val != 0:
                tail = max(tail, abs(float(contrib[outer].sum())) / abs(val))
            nleaves = max(nleaves, c.shape[0])
        by_eps[eps] = (vals[1], abs(vals[1] - vals[0]))
    return by_eps, neg, tail, nleaves


def _extrapolate(by_eps):
    eps = sorted(by_eps)
    if len(eps) == 1:
        v, e = by_eps[eps[0]]
        return v, e
    e1, e2 = eps[0], eps[-1]
    v1, q1 = by_eps[e1]
    v2, q2 = by_eps[e2]
    value = (e2 * v1 - e1 * v2) / (e2 - e1)
    error = abs(v2 - v1) * e1 / (e2 - e1) + q1 + q2
    return value, error


# smooth radial route ---------------------------------------------------------

def _adaptive_t_partition(fun, a, b, tol, max_depth=40):
    """Intervals on which 6-point Gauss-Legendre of ``fun`` agrees with its bisection."""
    x, w = np.polynomial.legendre.leggauss(6)

    def gl(lo, hi):
        m, r = 0.5 * (lo + hi), 0.5 * (hi - lo)
        return r * float(np.dot(w, fun(m + r * x)))

    out = []
    stack = [(a, b, gl(a, b), 0)]
    while stack:
        lo, hi, whole, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        left, right = gl(lo, mid), gl(mid, hi)
        if abs(left + right - whole) <= tol or depth >= max_depth:
            out.append((lo, mid))
            out.append((mid, hi))
        else:
            stack.append((lo, mid, left, depth + 1))
            stack.append((mid, hi, right, depth + 1))
    out.sort()
    return np.array(out)


def _radial_integral(u, geom, cfg: QuadratureConfig, weight, radial_weight):
    prof, shift = u.radials[0]
    n = geom.n
    D = n + 1
    f = lambda t: prof.f(t) + shift  # noqa: E731
    intervals = _adaptive_t_partition(lambda t: radial_weight(f(t), prof.df(t), prof.d2f(t)),
                                      cfg.tmin, 0.0, 1e-13)
    xt, wt = np.polynomial.legendre.leggauss(8)
    tm, tr = 0.5 * intervals.sum(axis=1), 0.5 * np.diff(intervals, axis=1)[:, 0]
    t_nodes = (tm[:, None] + tr[:, None] * xt).ravel()
    t_w = (tr[:, None] * wt).ravel()
    results = []
    neg = False
    for order, width in ((5, 2.0), (8, 2.0)):
        ny = int(round(2 * cfg.ymax / width))
        centers = -cfg.ymax + width * (np.arange(ny) + 0.5)
        xs, ws = np.polynomial.legendre.leggauss(order)
        y1 = (centers[:, None] + 0.5 * width * xs).ravel()
        w1 = np.tile(0.5 * width * ws, ny)
        grids = np.meshgrid(*([y1] * n), indexing="ij")
        y = np.stack([g.ravel() for g in grids], axis=1)
        wy = np.ones(y.shape[0])
        for g in np.meshgrid(*([w1] * n), indexing="ij"):
            wy = wy * g.ravel()
        logq = _logq_from_y(y)
        q = np.exp(logq)
        total = 0.0
        for ti, wti in zip(t_nodes, t_w):
            d1, d2 = float(prof.df(ti)), float(prof.d2f(ti))
            H = d1 * (q[:, :, None] * np.eye(D)[None]) + (d2 - d1) * q[:, :, None] * q[:, None, :]
            det = np.linalg.det(H)
            neg |= bool(det.min() < -1e-10 * max(1.0, np.abs(det).max()))
            g = np.full(det.shape, float(f(ti)))
            total += wti * float(np.dot(wy, weight(g, det)))
        results.append(total)
    return results, neg


# public API --------------------------------------------------------------------

def _run(u, geom, cfg, weight, radial_weight):
    if u.dim != geom.dim:
        raise ConfigError("function dimension does not match the geometry")
    piecewise = _pieces_only(u)
    if piecewise:
        if u.aff_b.size + u.log_A.size == 0:
            return QuadratureResult(0.0, 0.0)
        by_eps, neg, tail, nleaves = _piecewise_integral(u, geom, cfg, weight)
        value, error = _extrapolate(by_eps)
        res = QuadratureResult(value, error, {float(k): v[0] for k, v in by_eps.items()}, neg,
                               tail > 1e-3, tail, nleaves)
    else:
        (coarse, fine), neg = _radial_integral(u, geom, cfg, weight, radial_weight)
        res = QuadratureResult(fine, abs(fine - coarse), {}, neg, False, 0.0, 0)
    if res.negative_determinant:
        warnings.warn("NEGATIVE_DETERMINANT: det D^2 g < 0 somewhere; input is not convex", RuntimeWarning,
                      stacklevel=3)
    if res.truncation_warning:
        warnings.warn(f"TRUNCATION_WARNING: box edges carry {res.tail_fraction:.2e} of the integral",
                      RuntimeWarning, stacklevel=3)
    return res


def energy_quadrature(u, geom: ModelGeometry, cfg: QuadratureConfig | None = None) -> QuadratureResult:
    """``((n+1)!/vol) int (-g) det D^2 g dx``, softmax-mollified and extrapolated to ``eps = 0``."""
    cfg = cfg or QuadratureConfig()
    fac = math.factorial(geom.n + 1) / geom.vol
    n = geom.n
    return _run(u, geom, cfg, lambda g, det: fac * (-g) * det,
                lambda f, df, d2f: np.abs(f) * df**n * d2f)


def ma_mass_quadrature(u, geom: ModelGeometry, cfg: QuadratureConfig | None = None) -> QuadratureResult:
    """Total mass ``(n+1)! int det D^2 g dx`` of ``(dd^c u)^{n+1}`` over the ball."""
    cfg = cfg or QuadratureConfig()
    fac = math.factorial(geom.n + 1)
    n = geom.n
    return _run(u, geom, cfg, lambda g, det: fac * det, lambda f, df, d2f: df**n * d2f)


# exact route in C^2 ---------------------------------------------------------------

@dataclass(frozen=True)
class _Piece:
    kind: str
    a: np.ndarray
    b: float

    def grad(self, q):
        return self.a if self.kind == "aff" else self.a[0] * q


def _pieces(u):
    out = [_Piece("aff", a, float(b)) for a, b in zip(u.aff_a, u.aff_b)]
    out += [_Piece("log", np.array([A]), float(b)) for A, b in zip(u.log_A, u.log_b)]
    return out


def _all_values(u, t, y):
    y = np.atleast_1d(y)
    logq = _logq_from_y(y[:, None])
    x = np.asarray(t)[:, None] + logq
    parts = []
    if u.aff_b.size:
        parts.append(x @ u.aff_a.T + u.aff_b)
    if u.log_A.size:
        parts.append(np.asarray(t)[:, None] * u.log_A + u.log_b)
    return np.concatenate(parts, axis=1), x, np.exp(logq)


def _curve(pi: _Piece, pj: _Piece):
    """``t(y)`` on the kink between ``pi`` and ``pj`` (at least one log piece) and the swept-area rate."""
    if pi.kind == "log" and pj.kind == "log":
        A1, A2 = pi.a[0], pj.a[0]
        if A1 == A2:
            return None
        t0 = (pj.b - pi.b) / (A1 - A2)

        def t_of(y):
            return np.full(np.shape(y), t0)

        def rate(y):
            q1 = 1.0 / (1.0 + np.exp(-np.asarray(y)))
            return 0.5 * abs(A2**2 - A1**2) * q1 * (1.0 - q1)

        return t_of, rate
    aff, lg = (pi, pj) if pi.kind == "aff" else (pj, pi)
    A, beta = lg.a[0], lg.b
    a, b = aff.a, aff.b
    denom = A - a.sum()
    if abs(denom) < 1e-12:
        return None

    def t_of(y):
        y = np.asarray(y, dtype=np.float64)
        lq0 = -np.logaddexp(0.0, y)
        lq1 = y + lq0
        return (a[0] * lq0 + a[1] * lq1 + b - beta) / denom

    def rate(y):
        q1 = 1.0 / (1.0 + np.exp(-np.asarray(y)))
        return 0.5 * A * q1 * (1.0 - q1) * abs(denom)

    return t_of, rate


def _active_intervals(u, i, j, t_of, ymax, npts):
    ys = np.linspace(-ymax, ymax, npts)

    def psi(y):
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        t = t_of(y)
        h, _, _ = _all_values(u, t, y)
        own = h[:, i]
        others = np.delete(h, [i, j], axis=1)
        gap = own - (others.max(axis=1) if others.shape[1] else -np.inf)
        return np.minimum(gap, -t)

    vals = psi(ys)
    pos = vals > 0
    intervals = []
    start = ys[0] if pos[0] else None
    scalar = lambda y: float(psi(y)[0])  # noqa: E731
    for k in range(1, ys.size):
        if pos[k] and not pos[k - 1]:
            start = optimize.brentq(scalar, ys[k - 1], ys[k], xtol=1e-13)
        elif pos[k - 1] and not pos[k]:
            end = optimize.brentq(scalar, ys[k - 1], ys[k], xtol=1e-13)
            intervals.append((start, end))
            start = None
    if start is not None:
        intervals.append((start, ys[-1]))
    return intervals


def _hull_area(points):
    pts = np.unique(np.round(np.asarray(points), 14), axis=0)
    if pts.shape[0] < 3:
        return 0.0
    try:
        return float(ConvexHull(pts).volume)
    except QhullError:
        return 0.0


def _require_pl_2d(u, geom):
    if geom.n != 1 or u.dim != 2:
        raise ConfigError("exact PL oracle is implemented for n = 1 only")
    if u.radials or u.smooths:
        raise ConfigError("exact PL oracle needs affine and log pieces only")


def _vertex_candidates(u, ymax, npts):
    pieces = _pieces(u)
    cands = []
    curves = []
    for i in range(len(pieces)):
        for j in range(i + 1, len(pieces)):
            if pieces[i].kind == "aff" and pieces[j].kind == "aff":
                continue
            cur = _curve(pieces[i], pieces[j])
            if cur is None:
                continue
            t_of, rate = cur
            ivs = _active_intervals(u, i, j, t_of, ymax, npts)
            curves.append((i, j, t_of, rate, ivs))
            for lo, hi in ivs:
                for y in (lo, hi):
                    if abs(y) < ymax - 1e-9:
                        t = float(t_of(y))
                        if t < -1e-10:
                            cands.append(np.array([t + float(_logq_from_y(np.array([[y]]))[0, 0]),
                                                   t + float(_logq_from_y(np.array([[y]]))[0, 1])]))
    aff = [k for k, p in enumerate(pieces) if p.kind == "aff"]
    for ii in range(len(aff)):
        for jj in range(ii + 1, len(aff)):
            for kk in range(jj + 1, len(aff)):
                pi, pj, pk = pieces[aff[ii]], pieces[aff[jj]], pieces[aff[kk]]
                M = np.array([pj.a - pi.a, pk.a - pi.a])
                if abs(np.linalg.det(M)) < 1e-12:
                    continue
                x = np.linalg.solve(M, [pi.b - pj.b, pi.b - pk.b])
                if logsumexp(x) < 0:
                    cands.append(x)
    return pieces, cands, curves


def _vertices(u, ymax=40.0, npts=4001, tol=1e-9):
    pieces, cands, curves = _vertex_candidates(u, ymax, npts)
    seen = []
    out = []
    for x in cands:
        if any(np.max(np.abs(x - s)) < 1e-7 for s in seen):
            continue
        seen.append(x)
        t = float(logsumexp(x))
        q = np.exp(x - t)
        h = np.array([(p.a @ x + p.b) if p.kind == "aff" else (p.a[0] * t + p.b) for p in pieces])
        top = h.max()
        act = np.flatnonzero(h >= top - tol * max(1.0, abs(top)))
        if act.size < 3:
            continue
        grads = [pieces[k].grad(q) for k in act]
        out.append((x, float(top), tuple(int(k) for k in act), _hull_area(grads)))
    return out, curves


def active_vertices(u) -> list:
    """Locations of all points where three or more pieces are maximal (n = 1)."""
    if u.dim != 2:
        return []
    verts, _ = _vertices(u, npts=1201)
    return [v[0] for v in verts]


def pl_atoms_2d(u, geom: ModelGeometry) -> list:
    """Atoms of the real Monge-Ampere measure of ``g`` (mass = area of the gradient hull)."""
    _require_pl_2d(u, geom)
    verts, _ = _vertices(u)
    atoms = []
    for x, val, act, area in verts:
        if area <= 0.0:
            warnings.warn(f"DEGENERATE_VERTEX at {x}: active gradients are collinear", RuntimeWarning,
                          stacklevel=2)
            continue
        atoms.append(MAAtom(location=x, mass=area, value=val, active=act))
    return atoms


@dataclass
class PLEnergy:
    value: float
    atomic: float
    kink: float
    total_area: float
    atoms: list
    quadrature: QuadratureResult | None = None
    relative_gap: float | None = None


def energy_pl_2d(u, geom: ModelGeometry, compare: bool = True, tol: float = 0.05,
                 cfg: QuadratureConfig | None = None) -> PLEnergy:
    """Exact energy for ``n = 1`` max-of-pieces functions.

    Atoms contribute ``(-g(v)) * area``; each kink curve carrying a log piece
    contributes ``int (-g) * rate dy`` with the swept-area rate of the segment between
    the two active gradients. With ``compare`` the mollified quadrature must agree
    within ``tol`` (relative), otherwise :class:`InconsistentOraclesError`.
    """
    _require_pl_2d(u, geom)
    verts, curves = _vertices(u)
    atoms = [MAAtom(x, area, val, act) for x, val, act, area in verts if area > 0]
    atomic = sum(-a.value * a.mass for a in atoms)
    kink = 0.0
    swept = 0.0
    pieces = _pieces(u)
    for i, j, t_of, rate, ivs in curves:
        p = pieces[i]
        for lo, hi in ivs:
            if p.kind == "aff":
                def gval(y, p=p, t_of=t_of):
                    t = t_of(y)
                    lq0 = -np.logaddexp(0.0, y)
                    return p.a[0] * (t + lq0) + p.a[1] * (t + y + lq0) + p.b
            else:
                def gval(y, p=p, t_of=t_of):
                    return p.a[0] * t_of(y) + p.b
            pts = [v for v in (0.0,) if lo < v < hi]
            kink += integrate.quad(lambda y: -gval(y) * rate(y), lo, hi, points=pts or None,
                                   limit=400, epsabs=1e-13, epsrel=1e-11)[0]
            swept += integrate.quad(rate, lo, hi, points=pts or None, limit=400, epsabs=1e-14)[0]
    fac = math.factorial(geom.n + 1) / geom.vol
    res = PLEnergy(value=fac * (atomic + kink), atomic=fac * atomic, kink=fac * kink,
                   total_area=sum(a.mass for a in atoms) + swept, atoms=atoms)
    if compare:
        q = energy_quadrature(u, geom, cfg)
        res.quadrature = q
        scale = max(abs(res.value), 1e-12)
        res.relative_gap = abs(q.value - res.value) / scale
        if res.relative_gap > tol:
            raise InconsistentOraclesError(
                f"exact PL energy {res.value:.6g} and mollified quadrature {q.value:.6g} differ by "
                f"{100 * res.relative_gap:.2f}%"
            )
    return res
