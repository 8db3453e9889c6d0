"""Geodesics and subgeodesics of radial profiles, and the convexity of inverses.

Radial geodesics are Legendre interpolations: ``f_s* = (1-s) f_0* + s f_1*``.
On a fixed slope grid the energy ``int (f')^{n+2} dt = sum_k q_k^{n+2} dt_k`` is
linear in ``f*``, so it is exactly affine in ``s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NonmonotoneInTError
from .model_measure import MCConfig, ModelGeometry, evaluate_on_cloud, sample_cloud
from .profile import (Conjugate, RadialProfile, conjugate_back, energy, exp_profile, legendre,
                      standard_grid)
from .symmetrization import distribution, energy_stderr, familywise_z, symmetrize


@dataclass(frozen=True)
class ProfileFamily:
    s_grid: np.ndarray
    profiles: tuple


def geodesic(f0: RadialProfile, f1: RadialProfile, s: float) -> RadialProfile:
    """``((1-s) f0* + s f1*)*`` on the union of both grids."""
    if not 0.0 <= s <= 1.0:
        raise ValueError("s must lie in [0, 1]")
    c0, c1 = legendre(f0), legendre(f1)
    q = np.union1d(c0.q, c1.q)
    F = (1.0 - s) * c0(q) + s * c1(q)
    grid = np.union1d(f0.grid, f1.grid)
    return conjugate_back(Conjugate(q, F), grid)


def geodesic_family(f0, f1, s_grid) -> ProfileFamily:
    return ProfileFamily(np.asarray(s_grid, dtype=np.float64), tuple(geodesic(f0, f1, s) for s in s_grid))


def profile_max(parts, grid=None) -> RadialProfile:
    """Exact maximum of PL profiles ``f_i - c_i`` and lines ``B t``, crossings included.

    ``parts`` holds ``(profile, shift)`` pairs or ``("line", B)``.
    """
    profs = [(p, c) for p, c in parts if not isinstance(p, str)]
    lines = [B for p, B in parts if isinstance(p, str)]
    if grid is None:
        grid = profs[0][0].grid
        for p, _ in profs[1:]:
            grid = np.union1d(grid, p.grid)
    grid = np.asarray(grid, dtype=np.float64)
    curves = [p(grid) - c for p, c in profs] + [B * grid for B in lines]
    vals = np.stack(curves)
    extra = []
    for i in range(len(curves)):
        for j in range(i + 1, len(curves)):
            d = vals[i] - vals[j]
            k = np.flatnonzero(d[:-1] * d[1:] < 0)
            lam = d[k] / (d[k] - d[k + 1])
            extra.append(grid[k] + lam * (grid[k + 1] - grid[k]))
    if extra:
        grid = np.union1d(grid, np.concatenate(extra))
    vals = np.max(np.stack([p(grid) - c for p, c in profs] + [B * grid for B in lines]), axis=0)
    flat = all(p.left_value is not None for p, _ in profs)
    left = None
    if flat and profs:
        lv = max(p.left_value - c for p, c in profs)
        if all(B * grid[0] <= lv for B in lines) and np.isclose(vals[0], lv):
            left = float(vals[0])
    return RadialProfile(grid, vals, left)


def subgeodesic_max(f0: RadialProfile, f1: RadialProfile, s: float, c: float = 0.5,
                    B: float | None = None) -> RadialProfile:
    """``max(f0 - c s, f1 - c (1-s), B t)``: jointly convex in ``(s, t)`` and zero at ``t = 0``.

    ``B`` defaults to the larger boundary slope, so the envelope only takes over
    where the shifted profiles have dropped below it near the boundary.
    """
    if c < 0:
        raise ConfigError("subgeodesic shift c must be >= 0")
    B = max(f0.boundary_slope, f1.boundary_slope) if B is None else B
    legendre(f0)
    legendre(f1)
    return profile_max([(f0, c * s), (f1, c * (1.0 - s)), ("line", B)])


def joint_convexity_check(f0, f1, c: float = 0.5, s_grid=None, tol: float = 1e-9) -> dict:
    """Midpoint convexity of ``(s, t) -> f_s(t)`` on a grid (self-check of the construction)."""
    s_grid = np.linspace(0, 1, 11) if s_grid is None else np.asarray(s_grid)
    t = np.linspace(f0.grid[0] / 2, 0.0, 41)
    vals = np.stack([subgeodesic_max(f0, f1, s, c)(t) for s in s_grid])
    worst = _midpoint_convexity_defect(vals)
    return {"min_defect": worst, "passed": bool(worst >= -tol * max(1.0, np.abs(vals).max()))}


def _midpoint_convexity_defect(vals) -> float:
    """min over interior stencils of ``(v(p-d) + v(p+d))/2 - v(p)`` for the four directions."""
    worst = np.inf
    for ds, dt in ((1, 0), (0, 1), (1, 1), (1, -1)):
        lo_s, hi_s = ds, vals.shape[0] - ds
        lo_t, hi_t = abs(dt), vals.shape[1] - abs(dt)
        if lo_s >= hi_s or lo_t >= hi_t:
            continue
        mid = vals[lo_s:hi_s, lo_t:hi_t]
        a = vals[lo_s - ds:hi_s - ds, lo_t - dt:hi_t - dt]
        b = vals[lo_s + ds:hi_s + ds, lo_t + dt:hi_t + dt]
        worst = min(worst, float(np.min(0.5 * (a + b) - mid)))
    return worst


def energy_along(family: ProfileFamily, geom: ModelGeometry) -> np.ndarray:
    return np.array([energy(p, geom, check_tail=False).value for p in family.profiles])


def affine_deviation(s, E) -> float:
    """max |E(s) - ((1-s) E(0) + s E(1))| on the grid."""
    s, E = np.asarray(s), np.asarray(E)
    line = (1 - s) * E[0] + s * E[-1]
    return float(np.max(np.abs(E - line)))


def concavity_defect(s, E) -> float:
    """min over interior points of ``E_j - (lam E_{j-1} + (1-lam) E_{j+1})``."""
    s, E = np.asarray(s), np.asarray(E)
    lam = (s[2:] - s[1:-1]) / (s[2:] - s[:-2])
    return float(np.min(E[1:-1] - lam * E[:-2] - (1 - lam) * E[2:]))


# bivariate inverse -------------------------------------------------------------------

@dataclass
class BivariateSample:
    s_grid: np.ndarray
    t_grid: np.ndarray
    values: np.ndarray
    monotone_in_t: bool = True

    def __post_init__(self):
        self.s_grid = np.asarray(self.s_grid, dtype=np.float64)
        self.t_grid = np.asarray(self.t_grid, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.s_grid.size, self.t_grid.size):
            raise ValueError("values must have shape (len(s_grid), len(t_grid))")

    @classmethod
    def from_function(cls, a, s_grid, t_grid):
        S, T = np.meshgrid(s_grid, t_grid, indexing="ij")
        return cls(s_grid, t_grid, a(S, T))


@dataclass
class InverseSample:
    s_grid: np.ndarray
    x_grid: np.ndarray
    values: np.ndarray
    report: dict = field(default_factory=dict)


def inverse_in_t(a: BivariateSample, x_points: int = 201) -> InverseSample:
    """``k(s, x)`` with ``a(s, k(s, x)) = x``, by monotone interpolation per ``s``.

    The attached report holds the minimum midpoint-convexity defect over the four
    stencil directions and a bound on the error of the piecewise-linear inverse.
    """
    A = a.values
    dA = np.diff(A, axis=1)
    if np.any(dA <= 0):
        i, j = np.argwhere(dA <= 0)[0]
        raise NonmonotoneInTError(f"a(s, t) is not strictly increasing in t at s = {a.s_grid[i]:.4g}")
    lo, hi = A[:, 0].max(), A[:, -1].min()
    if not lo < hi:
        raise ValueError("the ranges of a(s, .) do not overlap")
    x = np.linspace(lo, hi, x_points)
    k = np.stack([np.interp(x, row, a.t_grid) for row in A])
    h = np.diff(a.t_grid)
    slopes = dA / h
    d2 = np.abs(np.diff(dA, axis=1)) if dA.shape[1] > 1 else np.zeros((A.shape[0], 1))
    interp_bound = float(0.5 * d2.max() / slopes.min()) if d2.size else 0.0
    uniform = np.allclose(np.diff(a.s_grid), a.s_grid[1] - a.s_grid[0]) if a.s_grid.size > 1 else True
    if uniform:
        defect = _midpoint_convexity_defect(k)
    else:
        # only the x direction has exact midpoints
        defect = float(np.min(0.5 * (k[:, :-2] + k[:, 2:]) - k[:, 1:-1]))
    return InverseSample(a.s_grid, x, k, {
        "min_defect": defect,
        "interpolation_bound": interp_bound,
        "passed": bool(defect >= -1e-6 - interp_bound),
    })


def random_concave_sample(rng, s_points: int = 21, t_points: int = 201, pieces: int = 5) -> BivariateSample:
    """``min`` of up to ``pieces`` affine functions, each strictly increasing in ``t``, with overlapping ranges."""
    s = np.linspace(0, 1, s_points)
    t = np.linspace(-2, 2, t_points)
    S, T = np.meshgrid(s, t, indexing="ij")
    while True:
        m = int(rng.integers(1, pieces + 1))
        alpha = rng.normal(0, 1, m)
        beta = rng.uniform(0.2, 2.0, m)
        gamma = rng.normal(0, 1, m)
        vals = np.min(alpha[:, None, None] * S + beta[:, None, None] * T + gamma[:, None, None], axis=0)
        # redraw until the ranges of a(s, .) share an interval
        if vals[:, 0].max() < vals[:, -1].min():
            return BivariateSample(s, t, vals)


def reference_profile(geom: ModelGeometry | None = None, grid=None) -> RadialProfile:
    """``f(t) = e^t - 1``, the radial form of ``Phi - 1``."""
    grid = standard_grid() if grid is None else grid
    return exp_profile().on_grid(grid)


# subgeodesics of toric functions --------------------------------------------------------

def toric_subgeodesic(u0, u1, s: float, c: float = 0.5, B: float | None = None):
    """``max(u0 - c s, u1 - c (1-s), B log Phi)`` for toric ``u0, u1``."""
    from .toric import ToricTestFunction

    if B is None:
        env = [v for v in (u0.envelope_A, u1.envelope_A) if v is not None]
        B = max(env) if env else 1.0
    us = u0.shifted(c * s).maximum(u1.shifted(c * (1.0 - s)))
    return us.maximum(ToricTestFunction(dim=u0.dim, log_A=[B], log_b=[0.0]))


def symmetrized_subgeodesic_check(u0, u1, geom: ModelGeometry, s_grid=None, mc: MCConfig | None = None,
                                  t_levels: int = 16, c: float = 0.5, k: float = 3.0) -> dict:
    """Joint concavity of ``log A(s, t)`` and concavity of ``s -> E(u_s hat)``.

    ``A(s, t) = |{u_s < t}|`` is estimated on one shared sample cloud; errors of
    each concavity defect come from the per-sample linear combination of
    indicators, so correlations are exact. Thresholds are family-wise at the
    level of a single ``k``-sigma test.
    """
    mc = mc or MCConfig()
    s_grid = np.linspace(0, 1, 5) if s_grid is None else np.asarray(s_grid, dtype=np.float64)
    cloud = sample_cloud(geom, mc)
    fam = [toric_subgeodesic(u0, u1, s, c) for s in s_grid]
    vals = [evaluate_on_cloud(u, cloud) for u in fam]
    top_min = max(float(v.min()) for v in vals)
    levels = np.linspace(top_min, 0.0, t_levels + 2)[1:-1]
    w = cloud.weights
    N = cloud.size
    ind = np.stack([np.stack([v < t for t in levels]) for v in vals])  # (S, T, N)
    A = np.einsum("stn,n->st", ind, w) / N
    if np.any(A <= 0):
        raise ValueError("empty sublevel set on the (s, t) grid")
    logA = np.log(A)
    tests = []
    for ds, dt in ((1, 0), (0, 1), (1, 1), (1, -1)):
        for i in range(ds, len(s_grid) - ds):
            for j in range(abs(dt), levels.size - abs(dt)):
                pts = [(i - ds, j - dt), (i, j), (i + ds, j + dt)]
                coef = np.array([-0.5, 1.0, -0.5])
                defect = float(sum(cf * logA[p] for cf, p in zip(coef, pts)))
                z = w * sum(cf / A[p] * ind[p] for cf, p in zip(coef, pts))
                se = float(z.std() / math.sqrt(N))
                tests.append((defect, se, pts))
    kz = familywise_z(k, len(tests))
    defects = np.array([d for d, _, _ in tests])
    errs = np.array([e for _, e, _ in tests])
    margins = defects + kz * errs
    worst = int(np.argmin(margins))
    del ind
    energies, e_errs = [], []
    for u in fam:
        d = distribution(u, geom, cloud=cloud)
        f = symmetrize(d, geom)
        energies.append(energy(f, geom).value)
        e_errs.append(energy_stderr(f, geom))
    energies, e_errs = np.array(energies), np.array(e_errs)
    e_def = energies[1:-1] - 0.5 * (energies[:-2] + energies[2:])
    e_se = np.sqrt(e_errs[1:-1] ** 2 + 0.25 * (e_errs[:-2] ** 2 + e_errs[2:] ** 2))
    kz_e = familywise_z(k, e_def.size)
    return {
        "levels": levels.tolist(),
        "s_grid": s_grid.tolist(),
        "log_area_min_defect": float(defects.min()),
        "log_area_worst_margin": float(margins[worst]),
        "log_area_min_z": float(np.min(defects / np.where(errs > 0, errs, np.inf))),
        "log_area_threshold_z": kz,
        "log_area_tests": len(tests),
        "log_area_passed": bool(margins[worst] >= 0),
        "energies": energies.tolist(),
        "energy_stderr": e_errs.tolist(),
        "energy_min_defect": float(e_def.min()),
        "energy_min_z": float(np.min(e_def / e_se)),
        "energy_threshold_z": kz_e,
        "energy_passed": bool(np.all(e_def + kz_e * e_se >= 0)),
        "passed": bool(margins[worst] >= 0 and np.all(e_def + kz_e * e_se >= 0)),
    }
