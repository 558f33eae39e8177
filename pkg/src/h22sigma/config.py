"""Run configuration: nested dataclasses loaded from YAML (or JSON) with strict keys."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .sampler import SamplerConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LatticeConfig:
    d: int
    L: int

    def validate(self, path: str) -> None:
        _require(self.d in (1, 2, 3), f"{path}.d must be 1, 2 or 3")
        _require(isinstance(self.L, int) and self.L >= 1, f"{path}.L must be a positive integer")


@dataclass(frozen=True)
class CouplingsConfig:
    beta: float
    eps: float
    beta_edge: list | None = None
    eps_site: list | None = None

    def validate(self, path: str) -> None:
        _require(_num(self.beta) and self.beta >= 0, f"{path}.beta must be >= 0")
        _require(_num(self.eps) and self.eps > 0, f"{path}.eps must be > 0")
        if self.beta_edge is not None:
            _require(all(_num(b) and b >= 0 for b in self.beta_edge), f"{path}.beta_edge entries must be >= 0")
        if self.eps_site is not None:
            _require(all(_num(e) and e > 0 for e in self.eps_site), f"{path}.eps_site entries must be > 0")


@dataclass(frozen=True)
class ObservableSpec:
    kind: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class WardConfig:
    quadrature: bool = True
    logdet_scale: float = 1.0
    site: int = 0


@dataclass(frozen=True)
class SaddleConfig:
    d: int
    L: int
    betas: list
    epsilons: list

    def validate(self, path: str) -> None:
        LatticeConfig(self.d, self.L).validate(path)
        _require(len(self.betas) > 0 and all(_num(b) and b > 0 for b in self.betas), f"{path}.betas must be > 0")
        _require(
            len(self.epsilons) > 0 and all(_num(e) and e > 0 for e in self.epsilons), f"{path}.epsilons must be > 0"
        )


@dataclass(frozen=True)
class RegionsConfig:
    L: int
    x: list
    y: list
    theta: float
    a: float
    alpha: float
    betas: list
    eps: float
    fields: int = 100
    cap: float = 1.0
    noise: float = 0.05

    def validate(self, path: str) -> None:
        _require(self.L >= 2, f"{path}.L must be >= 2")
        _require(len(self.x) == 3 and len(self.y) == 3, f"{path}.x and {path}.y must be 3D coordinates")
        _require(self.theta >= math.pi / 10, f"{path}.theta must be >= pi/10")
        _require(self.a > 1, f"{path}.a must exceed 1")
        _require(0 < self.alpha < 0.5, f"{path}.alpha must lie in (0, 1/2)")
        _require(len(self.betas) > 0 and all(b > 0 for b in self.betas), f"{path}.betas must be > 0")
        _require(self.eps > 0, f"{path}.eps must be > 0")


@dataclass(frozen=True)
class WalkConfig:
    walkers: int
    max_jumps: int
    environments: str = "zero"  # "zero" or "sampled"
    n_environments: int = 1
    eps: float | None = None  # walker death rate; defaults to couplings.eps, 0 disables death

    def validate(self, path: str) -> None:
        _require(self.walkers >= 1 and self.max_jumps >= 1, f"{path}.walkers and max_jumps must be >= 1")
        _require(self.environments in ("zero", "sampled"), f"{path}.environments must be 'zero' or 'sampled'")
        _require(self.n_environments >= 1, f"{path}.n_environments must be >= 1")
        _require(self.eps is None or (_num(self.eps) and self.eps >= 0), f"{path}.eps must be >= 0")


@dataclass(frozen=True)
class ErrwConfig:
    graph: str
    size: int
    a: float
    steps: int
    start: int = 0

    def validate(self, path: str) -> None:
        _require(self.graph in ("triangle", "star", "path", "cycle"), f"{path}.graph must be triangle, star, path or cycle")
        _require(self.a > 0, f"{path}.a must be > 0")
        _require(self.steps >= 1, f"{path}.steps must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    lattice: LatticeConfig | None = None
    couplings: CouplingsConfig | None = None
    sampler: SamplerConfig | None = None
    observables: list = field(default_factory=list)
    ward: WardConfig | None = None
    saddle: SaddleConfig | None = None
    regions: RegionsConfig | None = None
    walk: WalkConfig | None = None
    errw: ErrwConfig | None = None
    output: str | None = None
    seed: int = 0

    def to_dict(self) -> dict:
        return _to_plain(self)

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def sha256(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def require(self, *sections: str) -> None:
        for s in sections:
            _require(getattr(self, s) is not None, f"section '{s}' is required for this command")


_NESTED = {
    "lattice": LatticeConfig,
    "couplings": CouplingsConfig,
    "sampler": SamplerConfig,
    "ward": WardConfig,
    "saddle": SaddleConfig,
    "regions": RegionsConfig,
    "walk": WalkConfig,
    "errw": ErrwConfig,
}


def _require(cond, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def _num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {path}: {', '.join(unknown)}")
    missing = [
        f.name
        for f in dataclasses.fields(cls)
        if f.name not in data and f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING
    ]
    if missing:
        raise ConfigError(f"missing key(s) in {path}: {', '.join(missing)}")
    try:
        obj = cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if hasattr(obj, "validate"):
        obj.validate(path)
    return obj


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    return obj


def from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    kwargs = {}
    top = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    for key, value in data.items():
        if key in _NESTED:
            kwargs[key] = None if value is None else _build(_NESTED[key], value, key)
        elif key == "observables":
            obs = []
            for k, item in enumerate(value or []):
                spec = _build(ObservableSpec, item, f"observables[{k}]")
                _require(isinstance(spec.params, dict), f"observables[{k}].params must be a mapping")
                obs.append(spec)
            kwargs[key] = obs
        elif key == "seed":
            _require(isinstance(value, int) and 0 <= value < 2**64, "seed must be an unsigned 64-bit integer")
            kwargs[key] = value
        else:
            kwargs[key] = value
    return RunConfig(**kwargs)


def loads(text: str) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    return from_dict(data)


def load(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text)
