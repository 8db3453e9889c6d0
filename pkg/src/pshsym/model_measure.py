"""The model geometry: the unit ball in C^{n+1} with the measure Omega_l.

Points are handled in log-polar coordinates ``x_j = log|w_j|^2``; phases never
enter because every function we integrate is S^1-invariant in each variable.
The measure is normalised as

    Omega_l = vol * n! / pi^{n+1} * dlambda(w) / |w|^{2(n+1-l)},

so that the ball has mass ``vol / l``. After integrating out the phases its
density with respect to ``dx`` is ``vol * n! * (sum e^{x_j})^{l-n-1} * prod e^{x_j}``.

Monte-Carlo sampling uses the exact radial law: ``log|w|^2 = log(U) / l`` and a
uniform direction on the sphere, whose squared moduli are Dirichlet(1, ..., 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, DivergedError


@dataclass(frozen=True)
class ModelGeometry:
    """Ambient C^{n+1}, homogeneity ``l`` in (0, n+1] and ``vol = Vol(-L)``."""

    n: int
    l: float
    vol: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"n must be an integer >= 1, got {self.n!r}")
        if not (0.0 < self.l <= self.n + 1):
            raise ConfigError(f"l must lie in (0, n+1] = (0, {self.n + 1}], got {self.l!r}")
        if not (self.vol > 0.0 and math.isfinite(self.vol)):
            raise ConfigError(f"vol must be positive, got {self.vol!r}")

    @property
    def dim(self) -> int:
        return self.n + 1

    @property
    def ball_mass(self) -> float:
        return self.vol / self.l


@dataclass(frozen=True)
class MCConfig:
    samples: int = 1_000_000
    seed: int = 0
    shards: int = 1

    def __post_init__(self):
        if self.samples < 1000:
            raise ConfigError(f"samples must be >= 1000, got {self.samples}")
        if self.shards < 1:
            raise ConfigError("shards must be >= 1")
        if not (0 <= self.seed < 2**64):
            raise ConfigError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class VolumeEstimate:
    value: float
    stderr: float
    samples: int
    seed: int | None = None
    empty: bool = False


@dataclass
class SampleCloud:
    """Samples in log-polar form with importance weights w.r.t. Omega_l.

    ``t = log Phi = LSE(x)`` and ``logq = x - t`` (so ``sum exp(logq) = 1``).
    """

    t: np.ndarray
    logq: np.ndarray
    weights: np.ndarray
    seed: int
    _x: np.ndarray | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.t.shape[0]

    @property
    def x(self) -> np.ndarray:
        if self._x is None:
            self._x = self.t[:, None] + self.logq
        return self._x


def _check_x(x):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if not np.all(np.isfinite(x)):
        raise ValueError("log-polar coordinates must be finite")
    return x


def log_omega_density(x, geom: ModelGeometry) -> np.ndarray:
    """log of the Omega_l density with respect to ``dx`` (phases integrated)."""
    x = _check_x(x)
    if x.shape[1] != geom.dim:
        raise ValueError(f"expected {geom.dim} coordinates, got {x.shape[1]}")
    t = logsumexp(x, axis=1)
    return (math.log(geom.vol) + math.lgamma(geom.n + 1)
            + (geom.l - geom.n - 1) * t + x.sum(axis=1))


def omega_density(x, geom: ModelGeometry):
    """Density of Omega_l w.r.t. ``dx``; scalar in, scalar out."""
    scalar = np.ndim(x) == 1
    out = np.exp(log_omega_density(x, geom))
    return float(out[0]) if scalar else out


def ball_volume(geom: ModelGeometry) -> float:
    return geom.vol / geom.l


def log_proposal_density(t, logq, n: int, l_prop: float) -> np.ndarray:
    """Density in ``x`` of the sampler: ``t ~ l_prop e^{l_prop t}``, q ~ Dirichlet(1,..,1).

    The map x -> (t, y) with ``y_j = x_j - x_0`` has unit Jacobian and the simplex
    density ``n!`` carries the factor ``prod q_j`` from dq/dy.
    """
    return math.log(l_prop) + math.lgamma(n + 1) + l_prop * t + np.sum(logq, axis=1)


def _shard_sizes(total, shards):
    base, extra = divmod(total, shards)
    return [base + (1 if i < extra else 0) for i in range(shards)]


def sample_cloud(geom: ModelGeometry, mc: MCConfig, proposal_l: float | None = None,
                 stream: int = 0) -> SampleCloud:
    """Draw ``mc.samples`` points from the radial/uniform-direction sampler.

    Each shard uses its own Philox substream keyed by ``(seed, stream, shard)``;
    shards are concatenated in order so results do not depend on scheduling.
    ``proposal_l`` defaults to ``geom.l`` (constant weights ``vol/l``).
    """
    l_prop = geom.l if proposal_l is None else float(proposal_l)
    if l_prop <= 0:
        raise ConfigError("proposal exponent must be positive")
    d = geom.dim
    ts, lqs = [], []
    for shard, size in enumerate(_shard_sizes(mc.samples, mc.shards)):
        ss = np.random.SeedSequence([mc.seed, stream, shard])
        rng = np.random.Generator(np.random.Philox(ss))
        u = 1.0 - rng.random(size)
        ts.append(np.log(u) / l_prop)
        e = rng.standard_exponential((size, d))
        le = np.log(e)
        lqs.append(le - logsumexp(le, axis=1, keepdims=True))
    t = np.concatenate(ts)
    logq = np.concatenate(lqs)
    x = t[:, None] + logq
    logw = log_omega_density(x, geom) - log_proposal_density(t, logq, geom.n, l_prop)
    w = np.exp(logw)
    if not np.all(np.isfinite(w)):
        raise DivergedError("importance weights are not finite")
    return SampleCloud(t=t, logq=logq, weights=w, seed=mc.seed, _x=x)


def evaluate_on_cloud(u, cloud: SampleCloud) -> np.ndarray:
    """Values of ``u`` on the cloud; ``u`` is a toric function or a callable of x."""
    if hasattr(u, "evaluate_logpolar"):
        vals = u.evaluate_logpolar(cloud.t, cloud.logq)
    else:
        vals = np.asarray(u(cloud.x), dtype=np.float64)
    if np.any(np.isnan(vals)):
        raise DivergedError("function returned NaN on the sample cloud")
    return vals


def weighted_mean(values, weights):
    """Mean of ``weights * values`` with its standard error."""
    y = weights * values
    n = y.shape[0]
    mean = float(y.mean())
    se = float(y.std(ddof=1) / math.sqrt(n))
    return mean, se


def sublevel_volume(u, t: float, geom: ModelGeometry, mc: MCConfig,
                    proposal_l: float | None = None,
                    cloud: SampleCloud | None = None) -> VolumeEstimate:
    """Monte-Carlo estimate of ``|{u < t}|_{Omega_l}``."""
    if t >= 0 and not np.isclose(t, 0.0):
        raise ValueError("levels must be negative (functions vanish on the boundary)")
    if cloud is None:
        cloud = sample_cloud(geom, mc, proposal_l)
    vals = evaluate_on_cloud(u, cloud)
    below = vals < t
    if not below.any():
        return VolumeEstimate(0.0, 0.0, cloud.size, mc.seed, empty=True)
    value, se = weighted_mean(below.astype(np.float64), cloud.weights)
    return VolumeEstimate(value, se, cloud.size, mc.seed)


def log_phi(x) -> np.ndarray:
    """``log Phi = log |w|^2`` in log-polar coordinates."""
    return logsumexp(np.atleast_2d(x), axis=1)
