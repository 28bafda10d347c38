"""Experiment configuration: an INI file with model, friction, numerics and output sections.

Example::

    [model]
    kind = black-scholes
    b = 0.1
    sigma = 0.2

    [friction]
    eps = 1e-2, 1e-3, 1e-4
    p = 1
    xB = -1.5
    xS = 2.5
    T = 1

    [numerics]
    n = 10000
    paths = 2000
    seed = 7
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass

from .models import BlackScholesModel, FrictionParams, StochVolModel
from .paths import InvalidArgument


class ConfigError(ValueError):
    pass


MODEL_KEYS = {
    "black-scholes": {"b": None, "sigma": None, "S0": 1.0},
    "stoch-vol": {
        "b0": None, "b1": None, "sigma0": None, "sigma1": None,
        "kappa": 1.0, "mean": 0.0, "xi": 0.5, "S0": 1.0, "Y0": 0.0,
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    model: BlackScholesModel | StochVolModel
    eps: tuple[float, ...]
    p: float
    xB: float
    xS: float
    T: float
    n: int
    paths: int
    seed: int
    workers: int = 1
    out_dir: str = "out"
    formats: tuple[str, ...] = ("csv", "json")
    regime_eps: float = 0.05

    def friction(self, eps: float | None = None) -> FrictionParams:
        return FrictionParams(self.eps[0] if eps is None else eps, self.p, self.xB, self.xS, self.T)


def _num(cp, section, key, default=None, kind=float):
    name = f"{section}.{key}"
    if not cp.has_section(section) or not cp.has_option(section, key):
        if default is None:
            raise ConfigError(f"{name}: missing")
        return default
    raw = cp.get(section, key)
    try:
        return kind(float(raw)) if kind is int else kind(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {kind.__name__}") from None


def parse_config(text: str, seed: int | None = None, workers: int | None = None, out_dir: str | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str  # keep xB / xS / S0 case
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None

    kind = cp.get("model", "kind", fallback="black-scholes").strip().lower()
    if kind not in MODEL_KEYS:
        raise ConfigError(f"model.kind: expected one of {sorted(MODEL_KEYS)}, got {kind!r}")
    params = {k: _num(cp, "model", k, d) for k, d in MODEL_KEYS[kind].items()}
    try:
        model = BlackScholesModel(**params) if kind == "black-scholes" else StochVolModel(**params)
    except InvalidArgument as exc:
        raise ConfigError(f"model: {exc}") from None

    raw_eps = cp.get("friction", "eps", fallback=None)
    if raw_eps is None:
        raise ConfigError("friction.eps: missing")
    try:
        eps = tuple(float(e) for e in raw_eps.replace(";", ",").split(",") if e.strip())
    except ValueError:
        raise ConfigError(f"friction.eps: cannot parse {raw_eps!r}") from None
    if not eps or any(not 0 < e < 1 for e in eps):
        raise ConfigError("friction.eps: every spread must lie in (0, 1)")
    if len(set(eps)) != len(eps) or list(eps) not in (sorted(eps), sorted(eps, reverse=True)):
        raise ConfigError("friction.eps: list must be sorted without repeats")
    eps = tuple(sorted(eps, reverse=True))

    p = _num(cp, "friction", "p")
    T = _num(cp, "friction", "T")
    xB = _num(cp, "friction", "xB")
    xS = _num(cp, "friction", "xS")
    for e in eps:
        try:
            FrictionParams(e, p, xB, xS, T)
        except InvalidArgument as exc:
            raise ConfigError(f"friction: {exc}") from None

    n = _num(cp, "numerics", "n", kind=int)
    paths = _num(cp, "numerics", "paths", kind=int)
    if n < 2:
        raise ConfigError("numerics.n: need at least 2 steps")
    if paths < 2:
        raise ConfigError("numerics.paths: need at least 2 paths")
    env_seed = os.environ.get("SMALLCOSTS_SEED")
    cfg_seed = _num(cp, "numerics", "seed", 0, kind=int)
    seed = seed if seed is not None else int(env_seed) if env_seed else cfg_seed
    env_workers = os.environ.get("SMALLCOSTS_WORKERS")
    cfg_workers = _num(cp, "numerics", "workers", 1, kind=int)
    workers = workers if workers is not None else int(env_workers) if env_workers else cfg_workers

    out = out_dir or cp.get("output", "dir", fallback="out")
    formats = tuple(f.strip() for f in cp.get("output", "formats", fallback="csv, json").split(",") if f.strip())
    regime = _num(cp, "verify", "regime_eps", 0.05)
    return ExperimentConfig(
        model=model, eps=eps, p=p, xB=xB, xS=xS, T=T, n=n, paths=paths, seed=seed,
        workers=max(1, workers), out_dir=out, formats=formats, regime_eps=regime,
    )


def load_config(path: str, **overrides) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, **overrides)
