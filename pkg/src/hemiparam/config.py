"""Run configuration: TOML file plus command-line overrides."""

from __future__ import annotations

import math
import sys
from dataclasses import asdict, dataclass, replace

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

METHODS = ("tutte", "conformal", "area", "balanced")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    input: str | None = None
    method: str = "area"
    alpha: float | None = None
    beta: float | None = None
    gamma: float | None = None
    c: float | None = None  # None: size from the registered mesh
    eps_eta: float = math.pi / 160
    n_max: int = 20
    samples: int = 0  # 0: reconstruct at the mapped input vertices
    output: str = "out"
    seed: int = 0
    weld: bool = False
    absolute_distance: bool = False
    jobs: int = 1
    n_max_probe: int = 10
    c_min: float = 0.2
    c_max: float = 2.0
    with_armse: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    def weights(self):
        from .balanced import BalanceWeights

        return BalanceWeights(self.alpha, self.beta, self.gamma)


FIELD_TYPES = {
    "input": str,
    "method": str,
    "alpha": float,
    "beta": float,
    "gamma": float,
    "c": float,
    "eps_eta": float,
    "n_max": int,
    "samples": int,
    "output": str,
    "seed": int,
    "weld": bool,
    "absolute_distance": bool,
    "jobs": int,
    "n_max_probe": int,
    "c_min": float,
    "c_max": float,
    "with_armse": bool,
}


def _coerce(key, value):
    kind = FIELD_TYPES[key]
    if value is None:
        return None
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{key}: expected a string, got {value!r}")
    return value


def from_mapping(values: dict, base: RunConfig | None = None) -> RunConfig:
    unknown = sorted(set(values) - set(FIELD_TYPES))
    if unknown:
        raise ConfigError(f"unknown configuration key(s): {', '.join(unknown)}")
    return replace(base or RunConfig(), **{k: _coerce(k, v) for k, v in values.items()})


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    return from_mapping(data)


def dump_config(cfg: RunConfig) -> str:
    """TOML text; unset optional fields are omitted."""
    return tomli_w.dumps({k: v for k, v in cfg.to_dict().items() if v is not None})


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_config(cfg))


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """File values first, then non-``None`` overrides."""
    cfg = load_config(path) if path else RunConfig()
    return from_mapping({k: v for k, v in (overrides or {}).items() if v is not None}, cfg)


def validate(cfg: RunConfig, need_input: bool = True) -> RunConfig:
    if need_input and not cfg.input:
        raise ConfigError("missing required field 'input'")
    if cfg.method not in METHODS:
        raise ConfigError(f"invalid method {cfg.method!r}; valid methods: {', '.join(METHODS)}")
    w = (cfg.alpha, cfg.beta, cfg.gamma)
    if cfg.method == "balanced":
        given = [x is not None for x in w]
        if sum(given) < 2:
            raise ConfigError("method 'balanced' needs at least two of alpha, beta, gamma")
        if sum(given) == 2:
            missing = 1.0 - sum(x for x in w if x is not None)
            w = tuple(missing if x is None else x for x in w)
            cfg = replace(cfg, alpha=w[0], beta=w[1], gamma=w[2])
        try:
            cfg.weights()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    elif any(x is not None for x in w):
        raise ConfigError("alpha/beta/gamma apply only to method 'balanced'")
    if cfg.c is not None and not cfg.c > 0:
        raise ConfigError("c must be positive")
    if not 0 < cfg.eps_eta < math.pi / 2:
        raise ConfigError("eps_eta must lie in (0, pi/2)")
    if cfg.n_max < 0 or cfg.n_max_probe < 0:
        raise ConfigError("n_max must be nonnegative")
    if cfg.samples < 0 or (0 < cfg.samples < 4):
        raise ConfigError("samples must be 0 or at least 4")
    if cfg.jobs < 1:
        raise ConfigError("jobs must be at least 1")
    if not 0 < cfg.c_min < cfg.c_max:
        raise ConfigError("need 0 < c_min < c_max")
    return cfg
