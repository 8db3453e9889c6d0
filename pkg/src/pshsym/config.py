"""Run configuration: a flat ``key = value`` file plus command-line overrides."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

from .errors import ConfigError, ParseError

DEFAULT_TOLERANCES = {
    "energy_monotonicity": 0.02,
    "oracle_agreement": 0.05,
    "geodesic_affine": 1e-3,
    "subgeodesic_concave": 1e-3,
    "energy_identity_smooth": 1e-3,
    "energy_identity_mollified": 0.01,
    "radial_energy": 0.01,
    "mc_sigmas": 3.0,
    "volume_relative_stderr": 0.005,
}


@dataclass(frozen=True)
class RunConfig:
    n: int = 1
    l_values: tuple = (0.5, 1.0, 2.0)
    corpus_l_values: tuple = (0.5, 1.0)
    samples: int = 1_000_000
    seed: int = 0
    shards: int = 1
    grid_tmin: float = -20.0
    grid_points: int = 2001
    corpus_size: int = 20
    subgeodesic_pairs: int = 3
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    moser_C_override: float | None = None
    workers: int = 1

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"n must be an integer >= 1, got {self.n!r}")
        for l in tuple(self.l_values) + tuple(self.corpus_l_values):
            if not 0 < l <= self.n + 1:
                raise ConfigError(f"l = {l} outside (0, n+1] = (0, {self.n + 1}]")
        if not self.l_values:
            raise ConfigError("l_values must not be empty")
        if self.samples < 1000:
            raise ConfigError(f"samples must be >= 1000, got {self.samples}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.shards < 1:
            raise ConfigError("shards must be >= 1")
        if self.grid_points < 101:
            raise ConfigError(f"grid_points must be >= 101, got {self.grid_points}")
        if not self.grid_tmin < 0:
            raise ConfigError("grid_tmin must be negative")
        if self.corpus_size < 1:
            raise ConfigError(f"corpus_size must be >= 1, got {self.corpus_size}")
        if self.subgeodesic_pairs < 1 or 2 * self.subgeodesic_pairs > max(self.corpus_size, 2):
            raise ConfigError("subgeodesic_pairs must be >= 1 and use at most corpus_size functions")
        if self.moser_C_override is not None and self.moser_C_override <= 0:
            raise ConfigError("moser_C must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        unknown = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ConfigError(f"unknown tolerance names: {sorted(unknown)}")

    def tol(self, name: str) -> float:
        return float(self.tolerances.get(name, DEFAULT_TOLERANCES[name]))

    def echo(self) -> dict:
        d = asdict(self)
        d["l_values"] = list(self.l_values)
        d["corpus_l_values"] = list(self.corpus_l_values)
        d["tolerances"] = dict(sorted(self.tolerances.items()))
        d.pop("workers")
        return d


_INT_KEYS = {"n", "samples", "seed", "shards", "grid_points", "corpus_size", "subgeodesic_pairs", "workers"}
_FLOAT_KEYS = {"grid_tmin"}
_LIST_KEYS = {"l_values": "l_values", "l": "l_values", "corpus_l_values": "corpus_l_values"}


def parse_floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"expected a list of numbers, got {text!r}") from exc


def parse_config_text(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment; ``tolerance.NAME = value`` sets tolerances."""
    out: dict = {}
    tols: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key in _INT_KEYS:
                out[key] = int(value)
            elif key in _FLOAT_KEYS:
                out[key] = float(value)
            elif key in _LIST_KEYS:
                out[_LIST_KEYS[key]] = parse_floats(value)
            elif key in ("moser_C", "moser_C_override"):
                out["moser_C_override"] = None if value.lower() in ("", "none") else float(value)
            elif key.startswith("tolerance."):
                tols[key.split(".", 1)[1]] = float(value)
            else:
                raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"config line {lineno}: bad value for {key!r}: {value!r}") from exc
    if tols:
        merged = dict(DEFAULT_TOLERANCES)
        merged.update(tols)
        out["tolerances"] = merged
    return out


def load_config(path: str | None = None, **overrides) -> RunConfig:
    values: dict = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                values.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    values.update({k: v for k, v in overrides.items() if v is not None})
    if "n" in values and "l_values" not in values:
        base = RunConfig.__dataclass_fields__["l_values"].default
        values["l_values"] = tuple(l for l in base if l <= values["n"] + 1)
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
