"""Distribution functions and the radial rearrangement ``u -> f(log Phi)``.

The rearrangement is pinned by equidistribution: ``{f(log Phi) < s}`` is the ball
``{log Phi < tau(s)}`` of mass ``(vol/l) e^{l tau}``, so

    tau(s) = f^{-1}(s) = (1/l) log(l sigma(s) / vol).

All estimates come from one sample cloud (common random numbers), so ``sigma``
is exactly monotone sample by sample.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .errors import NonmonotoneSigmaError
from .model_measure import (MCConfig, ModelGeometry, SampleCloud, VolumeEstimate, evaluate_on_cloud,
                            sample_cloud)
from .profile import RadialProfile, standard_grid

DEFAULT_LEVELS = 64
PROFILE_LEVELS = 256
MIN_NODE_COUNT = 400


@dataclass
class DistributionFunction:
    """``sigma(t) = |{u < t}|`` at the probe levels, with the empirical law kept for re-use."""

    levels: np.ndarray
    sigma: np.ndarray
    stderr: np.ndarray
    min_u: float
    samples: int
    seed: int
    dropped: list = field(default_factory=list)
    # empirical law: sorted values and cumulative sums of w and w^2
    _values: np.ndarray = field(default=None, repr=False)
    _cw: np.ndarray = field(default=None, repr=False)
    _cw2: np.ndarray = field(default=None, repr=False)

    @property
    def estimates(self) -> list:
        return [VolumeEstimate(float(s), float(e), self.samples, self.seed, empty=bool(s == 0))
                for s, e in zip(self.sigma, self.stderr)]

    @property
    def has_samples(self) -> bool:
        return self._values is not None

    def _index(self, s, inclusive=False):
        side = "right" if inclusive else "left"
        return np.searchsorted(self._values, np.asarray(s, dtype=np.float64), side=side)

    def sigma_at(self, s, inclusive=False):
        """``|{u < s}|`` (``<=`` when ``inclusive``) and its standard error."""
        k = self._index(s, inclusive)
        m1 = self._cw[k] / self.samples
        m2 = self._cw2[k] / self.samples
        var = np.clip(m2 - m1**2, 0.0, None) / self.samples
        return m1, np.sqrt(var)

    def covariance(self, s):
        """Covariance matrix of the estimates ``sigma(s_a)``."""
        s = np.asarray(s, dtype=np.float64)
        k = self._index(s)
        m1 = self._cw[k] / self.samples
        kmin = np.minimum.outer(k, k)
        m2 = self._cw2[kmin] / self.samples
        return (m2 - np.outer(m1, m1)) / self.samples


def default_levels(min_u: float, count: int = DEFAULT_LEVELS) -> np.ndarray:
    """``count`` levels in ``(min_u, 0)``, geometrically denser toward 0."""
    mags = np.geomspace(abs(min_u), 1e-3 * abs(min_u), count + 1)[1:]
    return -mags


def distribution(u, geom: ModelGeometry, levels=None, mc: MCConfig | None = None,
                 cloud: SampleCloud | None = None) -> DistributionFunction:
    """``sigma`` at each level from a single shared sample cloud."""
    mc = mc or MCConfig()
    if cloud is None:
        cloud = sample_cloud(geom, mc)
    vals = evaluate_on_cloud(u, cloud)
    order = np.argsort(vals, kind="stable")
    sv = vals[order]
    w = cloud.weights[order]
    cw = np.concatenate([[0.0], np.cumsum(w)])
    cw2 = np.concatenate([[0.0], np.cumsum(w * w)])
    min_u = float(sv[0])
    if levels is None:
        levels = default_levels(min_u) if min_u < 0 else np.array([])
    levels = np.sort(np.asarray(levels, dtype=np.float64))
    d = DistributionFunction(levels, np.zeros(0), np.zeros(0), min_u, cloud.size, cloud.seed,
                             _values=sv, _cw=cw, _cw2=cw2)
    sig, se = d.sigma_at(levels)
    d.sigma, d.stderr = np.asarray(sig), np.asarray(se)
    return d


def _check_monotone(d: DistributionFunction):
    inc = np.diff(d.sigma)
    tol = 3.0 * (d.stderr[1:] + d.stderr[:-1])
    if np.any(inc < -tol):
        j = int(np.argmin(inc + tol))
        raise NonmonotoneSigmaError(f"sigma decreases between levels {d.levels[j]:.4g} and {d.levels[j + 1]:.4g}")


def _effective_count(d: DistributionFunction, k0, k1):
    w = d._cw[k1] - d._cw[k0]
    w2 = d._cw2[k1] - d._cw2[k0]
    return np.where(w2 > 0, w * w / np.where(w2 > 0, w2, 1.0), 0.0)


def _thin_levels(d: DistributionFunction, s, min_count):
    """Keep levels (bottom up) whose interval since the last kept one has ``min_count`` samples."""
    k = d._index(s)
    top = d._values.size
    k_last = int(d._index(d.min_u, inclusive=True))
    keep = np.zeros(s.size, dtype=bool)
    for j, kj in enumerate(k):
        if _effective_count(d, k_last, kj) >= min_count and _effective_count(d, kj, top) >= min_count:
            keep[j] = True
            k_last = kj
    return s[keep], int(s.size - keep.sum())


def _tau(sigma, geom):
    return np.log(geom.l * np.asarray(sigma) / geom.vol) / geom.l


def symmetrize(d: DistributionFunction, geom: ModelGeometry, levels=None, grid=None,
               profile_levels: int = PROFILE_LEVELS, min_count: int = MIN_NODE_COUNT) -> RadialProfile:
    """Radial profile ``f`` with ``f^{-1}(s) = (1/l) log(l sigma(s) / vol)``.

    Nodes are ``(tau(s_j), s_j)`` for the probe levels plus ``profile_levels``
    uniform levels in ``(min_u, 0)``, the bottom node ``(tau_min, min_u)`` (mass of
    the minimum set, at least one sample) and the top node ``(0, 0)``. Levels with
    equal ``tau`` keep the highest ``s`` (left-continuous inverse); levels with
    ``sigma = 0`` are dropped and recorded in ``meta``. Levels are thinned so each
    node interval holds at least ``min_count`` effective samples, below which the
    slope noise is Poisson rather than Gaussian. The profile is flat below
    ``tau_min`` and linear between nodes.
    """
    _check_monotone(d)
    if d.min_u >= 0:
        raise ValueError("symmetrization needs min u < 0")
    s = d.levels if levels is None else np.asarray(levels, dtype=np.float64)
    if d.has_samples and profile_levels:
        s = np.union1d(s, np.linspace(d.min_u, 0.0, profile_levels + 2)[1:-1])
    s = s[(s > d.min_u) & (s < 0)]
    thinned = 0
    if d.has_samples and min_count:
        s, thinned = _thin_levels(d, s, min_count)
    if d.has_samples:
        sig, _ = d.sigma_at(s)
        sig = np.asarray(sig)
        scale = max(1.0, abs(d.min_u))
        sig_min, _ = d.sigma_at(d.min_u + 1e-12 * scale, inclusive=True)
        sig_min = max(float(sig_min), float(d._cw[1]) / d.samples)
    else:
        sig = np.interp(s, d.levels, d.sigma)
        sig_min = float(d.sigma[d.sigma > 0][0]) if np.any(d.sigma > 0) else 0.0
    dropped = s[sig <= 0].tolist()
    s, sig = s[sig > 0], sig[sig > 0]
    ball = geom.vol / geom.l
    sig = np.minimum(sig, ball)
    tau = _tau(sig, geom)
    tau_min = float(_tau(sig_min, geom))
    node_t = np.concatenate([[tau_min], tau, [0.0]])
    node_s = np.concatenate([[d.min_u], s, [0.0]])
    node_p = np.concatenate([[sig_min], sig, [ball]]) / ball
    # equal tau: keep the highest level
    keep = np.concatenate([node_t[1:] > node_t[:-1], [True]])
    node_t, node_s, node_p = node_t[keep], node_s[keep], node_p[keep]
    order = np.argsort(node_t, kind="stable")
    node_t, node_s, node_p = node_t[order], np.maximum.accumulate(node_s[order]), node_p[order]
    base = standard_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    base = base[base > tau_min]
    # drop grid points that nearly coincide with a node (rounding noise in slopes)
    j = np.clip(np.searchsorted(node_t, base), 1, node_t.size - 1)
    near = np.minimum(np.abs(base - node_t[j - 1]), np.abs(base - node_t[j])) < 1e-6
    g = np.union1d(base[~near], node_t)
    vals = np.interp(g, node_t, node_s)
    vals[-1] = 0.0
    meta = {
        "nodes_t": node_t,
        "nodes_s": node_s,
        "nodes_p": node_p,
        "samples": d.samples,
        "dropped_levels": dropped,
        "thinned_levels": thinned,
    }
    prof = RadialProfile(g, vals, float(vals[0]), meta=meta)
    meta["convexity_eps"] = _convexity_tolerance(prof, node_t, node_s, node_p, d.samples)
    return prof


def _convexity_tolerance(prof, node_t, node_s, node_p, samples, z=None):
    """Per-node tolerance on second differences from the noise in ``tau`` increments.

    The slope on node interval ``j`` is ``ds / dtau`` and ``dtau = (1/l) log(p_{j+1}/p_j)``
    has standard error about ``sqrt(dp (1 - dp) / N) / (l p_mid)``; ``l`` cancels in the
    relative error. Nodes not in the node set get the default tolerance.
    """
    dtau = np.diff(node_t)
    dp = np.diff(node_p)
    pmid = 0.5 * (node_p[1:] + node_p[:-1])
    rel = np.sqrt(np.clip(dp * (1 - dp), 0, None) / samples) / np.maximum(pmid, 1e-300)
    ltau = np.log(node_p[1:] / node_p[:-1])
    # relative error of dtau is rel / ltau (l cancels)
    slope = np.diff(node_s) / np.where(dtau > 0, dtau, np.inf)
    rel_dtau = rel / np.where(ltau > 0, ltau, np.inf)
    m = slope.size
    if z is None:
        z = familywise_z(3.0, m - 1)
    hl, hr = np.diff(prof.grid)[:-1], np.diff(prof.grid)[1:]
    # rounding floor: slopes carry errors of about eps_mach * scale / h
    eps = np.maximum(1e-8, 16 * np.finfo(float).eps / (np.minimum(hl, hr) * (hl + hr)))
    interior = prof.grid[1:-1]
    idx = np.searchsorted(node_t, interior)
    at_node = (idx < node_t.size) & (np.isclose(node_t[np.minimum(idx, node_t.size - 1)], interior,
                                                 rtol=0, atol=1e-13))
    h = prof.grid[2:] - prof.grid[:-2]
    for pos in np.flatnonzero(at_node):
        k = idx[pos]
        if k == 0 or k >= m:
            continue
        # evaluate both slope errors at the larger slope, as under local linearity
        m_top = max(slope[k - 1], slope[k])
        noise = m_top * math.hypot(rel_dtau[k - 1], rel_dtau[k])
        eps[pos] = max(eps[pos], z * noise * 2.0 / h[pos] / prof.scale)
    return eps


def convexity_tolerance(prof: RadialProfile, k: float = 3.0, family: int = 1) -> np.ndarray:
    """Per-node convexity tolerance, family-wise over ``family`` profiles tested together."""
    meta = prof.meta
    m = max(meta["nodes_t"].size - 2, 1)
    z = familywise_z(k, m * max(family, 1))
    return _convexity_tolerance(prof, meta["nodes_t"], meta["nodes_s"], meta["nodes_p"], meta["samples"], z=z)


def energy_stderr(prof: RadialProfile, geom: ModelGeometry) -> float:
    """Delta-method standard error of ``E(f)`` from the multinomial noise of the node masses."""
    meta = prof.meta
    t, s, p = meta["nodes_t"], meta["nodes_s"], meta["nodes_p"]
    N = meta["samples"]
    k = geom.n + 2
    dt = np.diff(t)
    m = np.diff(s) / dt
    mk = m**k
    # dE/dtau_j = (k-1) (m_j^k - m_{j-1}^k), with m_{-1} = 0 below the flat tail
    dE = (k - 1) * (np.concatenate([mk, [0.0]]) - np.concatenate([[0.0], mk]))
    grad = dE / (geom.l * p)
    grad[-1] = 0.0  # the top node is fixed at p = 1
    cov = (np.minimum.outer(p, p) - np.outer(p, p)) / N
    return float(math.sqrt(max(grad @ cov @ grad, 0.0)))


def profile_sublevel_volume(prof: RadialProfile, s, geom: ModelGeometry, value_shift: float = 0.0):
    """``|{f(log Phi) + value_shift < s}|`` in closed form."""
    s = np.asarray(s, dtype=np.float64) - value_shift
    vals, grid = prof.values, prof.grid
    lo = prof.left_value if prof.left_value is not None else -np.inf
    k = np.searchsorted(vals, s, side="left")
    out = np.empty(s.shape)
    for i, (si, ki) in enumerate(zip(np.atleast_1d(s), np.atleast_1d(k))):
        if si <= lo:
            out.flat[i] = 0.0
            continue
        if ki >= vals.size:
            tau = 0.0
        elif ki == 0:
            m0 = prof.slopes[0]
            tau = grid[0] + (si - vals[0]) / m0 if m0 > 0 else grid[0]
        else:
            v0, v1 = vals[ki - 1], vals[ki]
            lam = (si - v0) / (v1 - v0) if v1 > v0 else 1.0
            tau = grid[ki - 1] + lam * (grid[ki] - grid[ki - 1])
        out.flat[i] = geom.vol / geom.l * math.exp(geom.l * min(tau, 0.0))
    return out


def verify_equidistribution(u, prof: RadialProfile, geom: ModelGeometry, levels=None,
                            mc: MCConfig | None = None, cloud: SampleCloud | None = None,
                            dist: DistributionFunction | None = None, value_shift: float = 0.0) -> dict:
    """Max ``|sigma_u - sigma_f|`` over probe levels, in units of the MC standard error."""
    if dist is None:
        dist = distribution(u, geom, levels, mc, cloud)
    elif levels is not None:
        sig, se = dist.sigma_at(levels)
        dist = DistributionFunction(np.asarray(levels), np.asarray(sig), np.asarray(se), dist.min_u,
                                    dist.samples, dist.seed)
    target = profile_sublevel_volume(prof, dist.levels, geom, value_shift)
    se = np.maximum(dist.stderr, 1.0 / dist.samples * geom.vol / geom.l)
    z = np.abs(dist.sigma - target) / se
    j = int(np.argmax(z))
    return {
        "max_discrepancy_stderr": float(z[j]),
        "worst_level": float(dist.levels[j]),
        "passed": bool(z[j] <= 3.0),
    }


def familywise_z(k: float, m: int) -> float:
    """Sidak threshold giving ``m`` one-sided tests the false-alarm rate of one ``k``-sigma test."""
    alpha = norm.sf(k)
    return float(norm.isf(-np.expm1(np.log1p(-alpha) / max(m, 1))))


def log_concavity_check(d: DistributionFunction, k: float = 3.0, familywise: bool = True,
                        family: int = 1) -> dict:
    """Concavity defects of ``log sigma`` over consecutive level triples.

    For ``t_{j-1} < t_j < t_{j+1}`` the defect is
    ``log sigma_j - lam log sigma_{j-1} - (1-lam) log sigma_{j+1}`` with the
    interpolation weight ``lam``; its error uses the exact covariance of the
    three estimates. ``passed_pointwise`` applies ``k`` standard errors to every
    triple; ``passed`` uses the family-wise threshold when ``familywise`` is set
    (where ``log sigma`` is affine each triple is a pure-noise test), taken over
    ``family`` distributions tested together.
    """
    pos = d.sigma > 0
    t, sig = d.levels[pos], d.sigma[pos]
    if t.size < 3:
        raise ValueError("log-concavity check needs at least 3 positive levels")
    cov = d.covariance(t) if d.has_samples else np.diag(d.stderr[pos] ** 2)
    lam = (t[2:] - t[1:-1]) / (t[2:] - t[:-2])
    ls = np.log(sig)
    defect = ls[1:-1] - lam * ls[:-2] - (1 - lam) * ls[2:]
    errs = np.empty(defect.size)
    for j in range(defect.size):
        g = np.array([-lam[j] / sig[j], 1.0 / sig[j + 1], -(1 - lam[j]) / sig[j + 2]])
        c = cov[j:j + 3, j:j + 3]
        errs[j] = math.sqrt(max(g @ c @ g, 0.0))
    kz = familywise_z(k, defect.size * max(family, 1)) if familywise else k
    margin = defect + kz * errs
    i = int(np.argmin(margin))
    zmin = float(np.min(defect / np.where(errs > 0, errs, np.inf)))
    return {
        "min_defect": float(defect.min()),
        "worst_level": float(t[i + 1]),
        "worst_margin": float(margin[i]),
        "worst_error": float(errs[i]),
        "min_z": zmin,
        "threshold_z": kz,
        "triples": int(defect.size),
        "passed_pointwise": bool(np.all(defect + k * errs >= 0.0)),
        "passed": bool(margin[i] >= 0.0),
    }


def strict_monotonicity_check(d: DistributionFunction, k: float = 3.0) -> dict:
    """Forward increments of ``sigma`` relative to their standard errors."""
    if d.min_u >= 0:
        return {"status": "NOT_APPLICABLE", "passed": True}
    t = d.levels[(d.levels > d.min_u) & (d.levels < 0)]
    sig, _ = d.sigma_at(t) if d.has_samples else (d.sigma, d.stderr)
    sig = np.asarray(sig)
    if d.has_samples:
        cov = d.covariance(t)
        var_inc = np.diag(cov)[1:] + np.diag(cov)[:-1] - 2 * np.diag(cov, 1)
    else:
        var_inc = d.stderr[1:] ** 2 + d.stderr[:-1] ** 2
    inc = np.diff(sig)
    se_inc = np.sqrt(np.clip(var_inc, 0, None))
    total = float(sig[-1] - sig[0])
    se_total = float(math.sqrt(max(np.sum(var_inc), 0.0)))
    zero = int(np.sum(inc <= 0))
    return {
        "status": "OK",
        "min_increment": float(inc.min()),
        "min_increment_stderr": float(np.min(inc / np.where(se_inc > 0, se_inc, np.inf))),
        "zero_increments": zero,
        "total_increase": total,
        "total_stderr": se_total,
        "passed": bool(np.all(inc > -k * se_inc) and total > k * se_total),
    }


def write_distribution_csv(d: DistributionFunction, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "sigma", "stderr"])
    for t, s, e in zip(d.levels, d.sigma, d.stderr):
        w.writerow([repr(float(t)), repr(float(s)), repr(float(e))])
