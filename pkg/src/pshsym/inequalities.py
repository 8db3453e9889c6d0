"""Both sides of the Moser and Moser-Trudinger type inequalities, with margins.

The Moser constant ``C`` is not known in closed form; :func:`calibrate_moser`
estimates it as the supremum of the Moser functional over a seeded family of
normalized profiles plus truncated-linear candidates, and uses ``1.05`` times
that. ``D = log(C / l)``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .model_measure import MCConfig, ModelGeometry, evaluate_on_cloud, sample_cloud, weighted_mean
from .profile import (RadialProfile, energy, exp_profile, fiber_integral, moser_exponent, moser_functional,
                      standard_grid, truncated_log_profile)

ANALYTIC_TOL = 1e-9
MC_SIGMAS = 3.0
CALIBRATION_FACTOR = 1.05
SCALES = (0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass
class InequalityResult:
    name: str
    lhs: float
    rhs: float
    margin: float
    passed: bool
    inputs_digest: str
    tolerance: float = ANALYTIC_TOL
    status: str = "OK"
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["extra"] = {k: _plain(v) for k, v in self.extra.items()}
        return d


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def digest(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, RadialProfile):
            h.update(np.ascontiguousarray(p.grid).tobytes())
            h.update(np.ascontiguousarray(p.values).tobytes())
            h.update(repr(p.left_value).encode())
        elif isinstance(p, np.ndarray):
            h.update(np.ascontiguousarray(p).tobytes())
        else:
            h.update(json.dumps(_plain(p), sort_keys=True, default=repr).encode())
    return h.hexdigest()[:16]


def _result(name, lhs, rhs, tol, key, **extra):
    margin = rhs - lhs
    return InequalityResult(name, float(lhs), float(rhs), float(margin), bool(margin >= -tol), key, tol,
                            extra=extra)


def not_applicable(name, key, reason) -> InequalityResult:
    return InequalityResult(name, math.nan, math.nan, math.nan, True, key, status="NOT_APPLICABLE",
                            extra={"reason": reason})


# profiles -----------------------------------------------------------------------------

def normalize(w: RadialProfile, geom: ModelGeometry) -> RadialProfile:
    """Divide by ``E^{1/(n+2)}`` so that ``int (w')^{n+2} dt = 1``."""
    E = energy(w, geom, check_tail=False).value
    if E <= 0:
        raise ValueError("cannot normalize a profile with zero energy")
    return w.scaled(E ** (-1.0 / (geom.n + 2)))


def random_profile(rng, grid=None) -> RadialProfile:
    """Convex increasing PL profile with 1-6 kinks in ``[-10, 0)``, flat below the first."""
    grid = standard_grid() if grid is None else grid
    m = int(rng.integers(1, 7))
    kinks = np.sort(rng.uniform(-10.0, 0.0, m))
    slopes = np.cumsum(rng.exponential(1.0, m))
    grid = np.union1d(grid, kinks)
    # f'(t) = slopes[i] on (kinks[i], kinks[i+1]); f(0) = 0
    ends = np.append(kinks[1:], 0.0)
    vals = np.zeros_like(grid)
    for k, e, s in zip(kinks, ends, slopes):
        below = np.clip(np.minimum(grid, e) - k, 0.0, None)
        vals += s * (below - (e - k))
    return RadialProfile(grid, vals, float(vals[0]))


def random_normalized_profiles(count: int, geom: ModelGeometry, seed: int = 0) -> list:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 5])))
    return [normalize(random_profile(rng), geom) for _ in range(count)]


def truncated_linear_family(geom: ModelGeometry, a_values=None) -> list:
    """Normalized ``c max(t, -a)`` (``c = a^{-1/(n+2)}``), the near-extremal candidates."""
    a_values = np.geomspace(0.01, 200.0, 61) if a_values is None else a_values
    grid = standard_grid(tmin=min(-20.0, -1.5 * max(a_values)), points=4001)
    return [truncated_log_profile(a, a ** (-1.0 / (geom.n + 2)), grid) for a in a_values]


# Moser ---------------------------------------------------------------------------------

@dataclass(frozen=True)
class MoserCalibration:
    C_est: float
    C: float
    argmax: str
    family_size: int

    def D(self, l: float) -> float:
        return math.log(self.C / l)


def calibrate_moser(geom: ModelGeometry, count: int = 200, seed: int = 0,
                    factor: float = CALIBRATION_FACTOR, scales=SCALES) -> MoserCalibration:
    """``C = factor * sup`` of the Moser functional (k = 1) over the calibration family.

    The family is the seeded random profiles with their rescalings ``w_k`` for
    ``k`` in ``scales`` (``M(w_k, 1) = k M(w, k)``, evaluated that way) and the
    truncated-linear candidates.
    """
    best, where = -math.inf, ""
    size = 0
    for i, w in enumerate(random_normalized_profiles(count, geom, seed)):
        for k in scales:
            v = k * moser_functional(w, k, geom)
            size += 1
            if v > best:
                best, where = v, f"random[{i}] k={k}"
    for i, w in enumerate(truncated_linear_family(geom)):
        v = moser_functional(w, 1.0, geom)
        size += 1
        if v > best:
            best, where = v, f"truncated_linear[{i}]"
    return MoserCalibration(best, factor * best, where, size)


def moser_check(w: RadialProfile, geom: ModelGeometry, C: float) -> InequalityResult:
    """``int exp((-w)^{(n+2)/(n+1)}) e^t dt <= C`` for a normalized ``w``."""
    lhs = moser_functional(w, 1.0, geom)
    return _result("moser", lhs, C, ANALYTIC_TOL * max(1.0, C), digest("moser", w, geom.n, C), n=geom.n)


def scaled_moser_check(w: RadialProfile, k: float, geom: ModelGeometry, C: float) -> InequalityResult:
    """``int exp(k (-w)^{(n+2)/(n+1)}) e^{k t} dt <= C / k``; ``k * lhs`` is also recorded."""
    lhs = moser_functional(w, k, geom)
    return _result("scaled_moser", lhs, C / k, ANALYTIC_TOL * max(1.0, C / k),
                   digest("scaled_moser", w, k, geom.n, C), k=k, k_times_lhs=k * lhs)


def scaled_profile(w: RadialProfile, k: float, geom: ModelGeometry) -> RadialProfile:
    """``w_k(s) = k^{(n+1)/(n+2)} w(s / k)``, which has the same Dirichlet norm as ``w``."""
    c = k ** ((geom.n + 1) / (geom.n + 2))
    lv = None if w.left_value is None else c * w.left_value
    return RadialProfile(k * w.grid, c * w.values, lv)


def elementary_inequality_check(x: float, y: float, n: int) -> InequalityResult:
    """``x y <= x^{n+2}/(n+2) + (n+1)/(n+2) y^{(n+2)/(n+1)}``."""
    if x <= 0 or y <= 0:
        raise ValueError("x and y must be positive")
    p = (n + 2) / (n + 1)
    xp, yq = x ** (n + 2), y**p
    lhs = x * y
    rhs = xp / (n + 2) + (n + 1) / (n + 2) * yq
    tol = ANALYTIC_TOL * max(1.0, rhs)
    res = _result("elementary", lhs, rhs, tol, digest("elementary", x, y, n), n=n)
    res.extra["equality"] = bool(abs(xp - yq) <= 1e-12 * max(1.0, xp))
    return res


# Moser-Trudinger --------------------------------------------------------------------------

def mt_coefficient(geom: ModelGeometry) -> float:
    """``((n+1)/l)^{n+1} (n+2)^{-(n+2)}``."""
    n, l = geom.n, geom.l
    return ((n + 1) / l) ** (n + 1) * float(n + 2) ** (-(n + 2))


def strong_mt_check(p: RadialProfile, geom: ModelGeometry, C: float) -> InequalityResult:
    """``vol int exp(l (-f)^{(n+2)/(n+1)}) e^{l t} dt <= C / l`` after normalizing ``E(f) = 1``."""
    key = digest("strong_mt", p, geom.n, geom.l, C)
    E = energy(p, geom, check_tail=False).value
    if E <= 0:
        return not_applicable("strong_mt", key, "zero energy")
    f = p.scaled(E ** (-1.0 / (geom.n + 2)))
    pw = moser_exponent(geom)
    lhs = fiber_integral(f, lambda y: np.exp(geom.l * np.clip(-y, 0, None) ** pw), geom)
    rhs = C / geom.l
    return _result("strong_mt", lhs, rhs, ANALYTIC_TOL * max(1.0, rhs), key, l=geom.l, n=geom.n, energy=E)


def mt_radial(p: RadialProfile, geom: ModelGeometry, C: float) -> InequalityResult:
    """``log int e^{-u} Omega_l <= coef E(u) + log(C/l)`` for ``u = f(log Phi)``."""
    E = energy(p, geom).value
    lhs = math.log(fiber_integral(p, lambda y: np.exp(-y), geom))
    rhs = mt_coefficient(geom) * E + math.log(C / geom.l)
    return _result("mt", lhs, rhs, ANALYTIC_TOL * max(1.0, abs(rhs)), digest("mt", p, geom.n, geom.l, C),
                   l=geom.l, n=geom.n, energy=E, route="fiber")


def exp_integral_mc(u, geom: ModelGeometry, mc: MCConfig, cloud=None):
    """``int e^{-u} Omega_l`` by Monte-Carlo with its standard error."""
    cloud = cloud if cloud is not None else sample_cloud(geom, mc)
    vals = evaluate_on_cloud(u, cloud)
    return weighted_mean(np.exp(-vals), cloud.weights)


def mt_toric(u, geom: ModelGeometry, C: float, E: float, mc: MCConfig, cloud=None,
             symmetrized: RadialProfile | None = None) -> InequalityResult:
    """MT inequality with a Monte-Carlo left side; ``E`` comes from the Monge-Ampere oracle."""
    mean, se = exp_integral_mc(u, geom, mc, cloud)
    lhs = math.log(mean)
    tol = MC_SIGMAS * se / mean
    rhs = mt_coefficient(geom) * E + math.log(C / geom.l)
    extra = {"l": geom.l, "n": geom.n, "energy": E, "route": "monte_carlo", "integral": mean,
             "integral_stderr": se}
    if symmetrized is not None:
        sym = fiber_integral(symmetrized, lambda y: np.exp(-y), geom)
        extra["symmetrized_integral"] = sym
        extra["symmetrized_log"] = math.log(sym)
        extra["equidistribution_z"] = abs(sym - mean) / se if se > 0 else 0.0
    return _result("mt", lhs, rhs, tol, digest("mt_toric", getattr(u, "label", ""), geom.n, geom.l, C, E,
                                                mc.samples, mc.seed), **extra)


def mt_check(u, geom: ModelGeometry, C: float, E: float | None = None, mc: MCConfig | None = None,
             **kw) -> InequalityResult:
    """Dispatch on the input: radial profiles use the fiber integral, toric functions Monte-Carlo."""
    if isinstance(u, RadialProfile):
        return mt_radial(u, geom, C)
    if E is None:
        from .ma_oracle import energy_pl_2d, energy_quadrature

        E = energy_pl_2d(u, geom).value if geom.n == 1 and u.is_piecewise else energy_quadrature(u, geom).value
    return mt_toric(u, geom, C, E, mc or MCConfig(), **kw)


def truncated_log_mt_closed_form(a: float, geom: ModelGeometry, C: float) -> InequalityResult:
    """``u = max(log Phi, -a)``: ``int e^{-u} Omega_l = vol (e^{(1-l) a} / l + int_{-a}^0 e^{(l-1) t} dt)``."""
    l, vol = geom.l, geom.vol
    if abs(1 - l) < 1e-12:
        integral = vol * (1.0 + a)
    else:
        integral = vol * (math.exp((1 - l) * a) / l + (1 - math.exp((1 - l) * a)) / (l - 1))
    lhs = math.log(integral)
    rhs = mt_coefficient(geom) * a + math.log(C / l)
    return _result("mt_closed_form", lhs, rhs, ANALYTIC_TOL, digest("mt_cf", a, geom.n, l, C), a=a, l=l)


def reference_energy(geom: ModelGeometry) -> float:
    return energy(exp_profile().on_grid(), geom).value
