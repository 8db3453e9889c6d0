"""S^1-invariant test functions ``u = g(log|w_1|^2, ..., log|w_{n+1}|^2)``.

A :class:`ToricTestFunction` is the maximum of

* affine pieces ``a.x + b`` with ``a >= 0`` componentwise,
* log pieces ``A * log Phi + b`` (the radial envelope is ``A * log Phi``),
* radial pieces ``f(log Phi) + b`` for a profile ``f``,
* smooth pieces ``g(x) + b`` given as callables (only used for diagnostics).

Only the moduli ``|w_j|`` enter, so phase invariance holds by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .errors import InvalidCountError, OutOfDomainError, ParseError
from .model_measure import ModelGeometry

DOMAIN_TOL = 1e-12


@dataclass(frozen=True)
class ToricTestFunction:
    dim: int
    aff_a: np.ndarray = None
    aff_b: np.ndarray = None
    log_A: np.ndarray = None
    log_b: np.ndarray = None
    radials: tuple = ()
    smooths: tuple = ()
    seed: int | None = None
    label: str = ""
    _json_extra: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        d = self.dim
        a = np.zeros((0, d)) if self.aff_a is None else np.asarray(self.aff_a, dtype=np.float64).reshape(-1, d)
        b = np.zeros(0) if self.aff_b is None else np.asarray(self.aff_b, dtype=np.float64).reshape(-1)
        if a.shape[0] != b.shape[0]:
            raise ValueError("affine slopes and offsets differ in length")
        if np.any(a < 0):
            raise ValueError("affine slopes must be componentwise non-negative")
        a, b = _dedupe(a, b)
        A = np.zeros(0) if self.log_A is None else np.asarray(self.log_A, dtype=np.float64).reshape(-1)
        lb = np.zeros_like(A) if self.log_b is None else np.asarray(self.log_b, dtype=np.float64).reshape(-1)
        if A.shape != lb.shape:
            raise ValueError("log coefficients and offsets differ in length")
        if np.any(A <= 0):
            raise ValueError("log coefficients must be positive")
        object.__setattr__(self, "aff_a", a)
        object.__setattr__(self, "aff_b", b)
        object.__setattr__(self, "log_A", A)
        object.__setattr__(self, "log_b", lb)

    # constructors ---------------------------------------------------------

    @classmethod
    def radial(cls, profile, dim: int, label: str = "radial") -> "ToricTestFunction":
        return cls(dim=dim, radials=((profile, 0.0),), label=label)

    @classmethod
    def pl(cls, slopes, offsets, envelope_A: float | None = None, seed=None,
           label: str = "pl") -> "ToricTestFunction":
        slopes = np.atleast_2d(np.asarray(slopes, dtype=np.float64))
        log_A = [] if envelope_A is None else [envelope_A]
        return cls(dim=slopes.shape[1], aff_a=slopes, aff_b=offsets, log_A=log_A,
                   log_b=[0.0] * len(log_A), seed=seed, label=label)

    @classmethod
    def smooth(cls, g: Callable, dim: int, envelope_A: float | None = None,
               label: str = "smooth") -> "ToricTestFunction":
        log_A = [] if envelope_A is None else [envelope_A]
        return cls(dim=dim, log_A=log_A, log_b=[0.0] * len(log_A), smooths=((g, 0.0),), label=label)

    # properties -----------------------------------------------------------

    @property
    def kind(self) -> str:
        if self.smooths:
            return "smooth"
        if self.radials and not len(self.aff_b):
            return "radial"
        return "pl"

    @property
    def envelope_A(self) -> float | None:
        zero = np.flatnonzero(self.log_b == 0.0)
        return float(self.log_A[zero].max()) if zero.size else None

    @property
    def is_piecewise(self) -> bool:
        """True if every piece is affine or log-homogeneous."""
        return not self.radials and not self.smooths

    def shifted(self, c: float) -> "ToricTestFunction":
        """``u - c``."""
        return replace(
            self,
            aff_b=self.aff_b - c,
            log_b=self.log_b - c,
            radials=tuple((p, b - c) for p, b in self.radials),
            smooths=tuple((g, b - c) for g, b in self.smooths),
        )

    def maximum(self, other: "ToricTestFunction") -> "ToricTestFunction":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return ToricTestFunction(
            dim=self.dim,
            aff_a=np.vstack([self.aff_a, other.aff_a]),
            aff_b=np.concatenate([self.aff_b, other.aff_b]),
            log_A=np.concatenate([self.log_A, other.log_A]),
            log_b=np.concatenate([self.log_b, other.log_b]),
            radials=self.radials + other.radials,
            smooths=self.smooths + other.smooths,
            label=f"max({self.label},{other.label})",
        )

    # evaluation -----------------------------------------------------------

    def evaluate_logpolar(self, t, logq) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        logq = np.asarray(logq, dtype=np.float64)
        x = t[:, None] + logq
        out = kernels.toric_max(x, t, self.aff_a, self.aff_b, self.log_A, self.log_b)
        for prof, b in self.radials:
            f = prof.f if hasattr(prof, "df") else prof
            np.maximum(out, f(t) + b, out=out)
        for g, b in self.smooths:
            np.maximum(out, np.asarray(g(x)) + b, out=out)
        return out

    def evaluate(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} coordinates")
        t = logsumexp(x, axis=1)
        if np.any(t > DOMAIN_TOL):
            raise OutOfDomainError("point outside the closed unit ball (sum e^x > 1)")
        return self.evaluate_logpolar(t, x - t[:, None])

    def __call__(self, x):
        return self.evaluate(x)

    # serialization --------------------------------------------------------

    def to_json(self) -> dict:
        if self.radials or self.smooths:
            raise ValueError("only piecewise functions serialize to JSON")
        return {
            "kind": self.kind,
            "dim": self.dim,
            "pieces": [{"a": [float(v) for v in a], "b": float(b)} for a, b in zip(self.aff_a, self.aff_b)],
            "log_pieces": [{"A": float(A), "b": float(b)} for A, b in zip(self.log_A, self.log_b)],
            "envelope_A": self.envelope_A,
            "seed": self.seed,
            "label": self.label,
        }

    @classmethod
    def from_json(cls, rec: dict) -> "ToricTestFunction":
        try:
            pieces = rec.get("pieces", [])
            dim = int(rec["dim"]) if "dim" in rec else len(pieces[0]["a"])
            a = np.array([p["a"] for p in pieces], dtype=np.float64).reshape(-1, dim)
            b = np.array([p["b"] for p in pieces], dtype=np.float64)
            if "log_pieces" in rec:
                A = [p["A"] for p in rec["log_pieces"]]
                lb = [p["b"] for p in rec["log_pieces"]]
            else:
                A = [] if rec.get("envelope_A") is None else [rec["envelope_A"]]
                lb = [0.0] * len(A)
            return cls(dim=dim, aff_a=a, aff_b=b, log_A=A, log_b=lb, seed=rec.get("seed"),
                       label=rec.get("label", "pl"))
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ParseError(f"malformed toric function record: {exc}") from exc


def _dedupe(a, b):
    if a.shape[0] < 2:
        return a, b
    keys, inv = np.unique(a, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    best = np.full(keys.shape[0], -np.inf)
    np.maximum.at(best, inv, b)
    return keys, best


def load_corpus(text: str) -> list:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    if isinstance(data, dict):
        data = data.get("functions", [data])
    return [ToricTestFunction.from_json(rec) for rec in data]


def dump_corpus(funcs) -> str:
    return json.dumps([u.to_json() for u in funcs], indent=1, sort_keys=True)


# checks -------------------------------------------------------------------

def _ball_points(rng, count, dim, spread=3.0):
    t = -rng.exponential(spread, count)
    e = rng.standard_exponential((count, dim))
    logq = np.log(e) - np.log(e.sum(axis=1, keepdims=True))
    return t[:, None] + logq


def psh_check(u: ToricTestFunction, samples: int = 2000, seed: int = 0, tol: float = 1e-9) -> dict:
    """Midpoint convexity on random segments and monotonicity in each ``x_j``."""
    rng = np.random.default_rng(seed)
    x1 = _ball_points(rng, samples, u.dim)
    x2 = _ball_points(rng, samples, u.dim)
    xm = 0.5 * (x1 + x2)
    v1, v2, vm = u.evaluate(x1), u.evaluate(x2), u.evaluate(xm)
    scale = max(1.0, float(np.max(np.abs(np.concatenate([v1, v2])))))
    conv_viol = vm - 0.5 * (v1 + v2)
    i = int(np.argmax(conv_viol))
    j = rng.integers(0, u.dim, samples)
    step = rng.uniform(0.01, 2.0, samples)
    xd = x1.copy()
    xd[np.arange(samples), j] -= step
    mono_viol = u.evaluate(xd) - v1
    k = int(np.argmax(mono_viol))
    worst = max(conv_viol[i], mono_viol[k])
    report = {
        "passed": bool(worst <= tol * scale),
        "worst_convexity_violation": float(conv_viol[i]),
        "worst_monotonicity_violation": float(mono_viol[k]),
    }
    if conv_viol[i] > tol * scale:
        report["certificate"] = {"segment": [x1[i].tolist(), x2[i].tolist()]}
    elif mono_viol[k] > tol * scale:
        report["certificate"] = {"point": x1[k].tolist(), "axis": int(j[k]), "step": float(step[k])}
    return report


def boundary_residual(u: ToricTestFunction, samples: int = 200, seed: int = 0) -> float:
    """max |u| over random points of the boundary ``sum e^x = 1``."""
    rng = np.random.default_rng(seed)
    e = rng.standard_exponential((samples, u.dim))
    x = np.log(e) - np.log(e.sum(axis=1, keepdims=True))
    return float(np.max(np.abs(u.evaluate(x))))


def random_corpus(count: int, geom: ModelGeometry, seed: int, box: float = 12.0,
                  slope_scale=(0.25, 2.0), max_tries: int = 1000) -> list:
    """Seeded PL toric functions with a constant floor and a radial envelope.

    Each function has 3-8 affine pieces: a constant floor ``b0 in [-3, -0.5]`` and
    pieces with slopes ``s * Dirichlet(1,...,1)``, ``s`` uniform in ``slope_scale``,
    offsets in ``[-3, 0]``; the envelope is ``A log Phi`` with ``A in [0.5, 2]``.
    Draws whose piece vertices fall outside ``[-box, 0]^{n+1}`` are redrawn.
    """
    if count < 1:
        raise InvalidCountError(f"count must be >= 1, got {count}")
    d = geom.dim
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    out = []
    tries = 0
    while len(out) < count:
        tries += 1
        if tries > max_tries * count:
            raise RuntimeError("corpus generator failed to satisfy its postconditions")
        k = int(rng.integers(3, 9))
        slopes = np.zeros((k, d))
        offsets = np.zeros(k)
        offsets[0] = rng.uniform(-3.0, -0.5)
        for i in range(1, k):
            slopes[i] = rng.uniform(*slope_scale) * rng.dirichlet(np.ones(d))
            offsets[i] = rng.uniform(-3.0, 0.0)
        A = float(rng.uniform(0.5, 2.0))
        u = ToricTestFunction.pl(slopes, offsets, envelope_A=A, seed=seed,
                                 label=f"corpus[{seed}:{len(out)}]")
        if not _vertices_in_box(u, box):
            continue
        out.append(u)
    return out


def _vertices_in_box(u: ToricTestFunction, box: float) -> bool:
    from .ma_oracle import active_vertices

    for v in active_vertices(u):
        if np.any(v < -box):
            return False
    return True
