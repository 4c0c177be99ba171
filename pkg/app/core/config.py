"""Run configuration: a tree of frozen dataclasses read from dotted key-value text.

    # comments start with '#'
    geometry.L = 6.283185307179586
    grids.epsilons = 1, 0.5, 0.25
    tolerances.contour = 1e-8
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

from app.core.errors import ConfigError
from app.core.settings import (
    DEFAULT_ALPHA,
    DEFAULT_ALPHAS,
    DEFAULT_EPSILONS,
    DEFAULT_FIBER_BASIS,
    DEFAULT_FIBER_CUTOFF,
    DEFAULT_GRID_POINTS,
    DEFAULT_K,
    DEFAULT_L,
    DEFAULT_MAX_MODE,
    DEFAULT_OUT_DIR,
    DEFAULT_SIGMAS,
    DEFAULT_TAU,
    DEFAULT_TAUS,
    DEFAULT_TIMES,
    DEFAULT_TS,
    FLOAT_FORMAT,
    TOLERANCES,
)


@dataclass(frozen=True)
class GeometryConfig:
    L: float = DEFAULT_L
    k: int = DEFAULT_K
    tau: float = DEFAULT_TAU
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if not (math.isfinite(self.L) and self.L > 0):
            raise ConfigError(f"geometry.L must be positive, got {self.L}")
        if self.k < 2 or self.k % 2:
            raise ConfigError(f"geometry.k must be even and >= 2, got {self.k}")
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise ConfigError(f"geometry.tau must be positive, got {self.tau}")
        if not 0 <= self.alpha < 2 * math.pi:
            raise ConfigError(f"geometry.alpha must lie in [0, 2π), got {self.alpha}")


@dataclass(frozen=True)
class DiscretizationConfig:
    N: int = DEFAULT_GRID_POINTS
    fiber_basis: int = DEFAULT_FIBER_BASIS
    max_mode: int = DEFAULT_MAX_MODE
    cutoff: int = DEFAULT_FIBER_CUTOFF

    def __post_init__(self):
        if self.N < 8:
            raise ConfigError(f"discretization.N must be >= 8, got {self.N}")
        if not 4 <= self.fiber_basis <= 16:
            raise ConfigError(f"discretization.fiber_basis must lie in [4, 16], got {self.fiber_basis}")
        if self.max_mode < 1:
            raise ConfigError(f"discretization.max_mode must be >= 1, got {self.max_mode}")
        if self.cutoff < 1:
            raise ConfigError(f"discretization.cutoff must be >= 1, got {self.cutoff}")


@dataclass(frozen=True)
class SweepGrid:
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS
    times: tuple[float, ...] = DEFAULT_TIMES
    taus: tuple[float, ...] = DEFAULT_TAUS
    Ts: tuple[float, ...] = DEFAULT_TS
    sigmas: tuple[float, ...] = DEFAULT_SIGMAS
    alphas: tuple[float, ...] = DEFAULT_ALPHAS

    def __post_init__(self):
        for name in ("epsilons", "times", "taus", "Ts", "sigmas"):
            values = getattr(self, name)
            if not values or any(not (math.isfinite(v) and v > 0) for v in values):
                raise ConfigError(f"grids.{name} must be a non-empty list of positive numbers")
        if len(self.epsilons) < 2 or any(b >= a for a, b in zip(self.epsilons, self.epsilons[1:])):
            raise ConfigError("grids.epsilons must hold at least two strictly decreasing values")
        if any(not 0 <= a < 2 * math.pi for a in self.alphas):
            raise ConfigError("grids.alphas must lie in [0, 2π)")


@dataclass(frozen=True)
class OutputConfig:
    dir: Path = DEFAULT_OUT_DIR


@dataclass(frozen=True)
class RunConfig:
    geometry: GeometryConfig = GeometryConfig()
    discretization: DiscretizationConfig = DiscretizationConfig()
    grids: SweepGrid = SweepGrid()
    tolerances: dict = field(default_factory=lambda: dict(TOLERANCES))
    output: OutputConfig = OutputConfig()
    seed: int = 0

    def __post_init__(self):
        unknown = set(self.tolerances) - set(TOLERANCES)
        if unknown:
            raise ConfigError(f"unknown tolerance keys: {sorted(unknown)}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")

    def tolerance(self, name: str) -> float:
        return self.tolerances.get(name, TOLERANCES[name])

    def with_output(self, out_dir) -> "RunConfig":
        return dataclasses.replace(self, output=OutputConfig(Path(out_dir)))

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(self, seed=int(seed))


_SECTIONS = {
    "geometry": GeometryConfig,
    "discretization": DiscretizationConfig,
    "grids": SweepGrid,
    "output": OutputConfig,
}


def _convert(key: str, kind, raw: str):
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is Path:
            return Path(raw)
        # tuples of floats
        return tuple(float(x) for x in raw.split(",") if x.strip())
    except ValueError as e:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from e


def _field_kind(cls, name: str):
    kind = {f.name: f.type for f in dataclasses.fields(cls)}[name]
    return {"float": float, "int": int, "Path": Path}.get(kind, tuple)


def parse_config(text: str) -> RunConfig:
    sections: dict[str, dict] = {name: {} for name in _SECTIONS}
    tolerances = dict(TOLERANCES)
    seed = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key == "seed":
            seed = _convert(key, int, raw)
            continue
        section, _, name = key.partition(".")
        if section == "tolerances":
            if name not in TOLERANCES:
                raise ConfigError(f"line {lineno}: unknown tolerance {key!r}")
            tolerances[name] = _convert(key, float, raw)
            continue
        cls = _SECTIONS.get(section)
        if cls is None or name not in {f.name for f in dataclasses.fields(cls)}:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        sections[section][name] = _convert(key, _field_kind(cls, name), raw)
    return RunConfig(
        geometry=GeometryConfig(**sections["geometry"]),
        discretization=DiscretizationConfig(**sections["discretization"]),
        grids=SweepGrid(**sections["grids"]),
        tolerances=tolerances,
        output=OutputConfig(**sections["output"]),
        seed=seed,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_config(text)


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return format(value, FLOAT_FORMAT)
    return str(value)


def dump_config(config: RunConfig) -> str:
    lines = []
    for section in _SECTIONS:
        part = getattr(config, section)
        for f in dataclasses.fields(part):
            lines.append(f"{section}.{f.name} = {_format(getattr(part, f.name))}")
    for name in TOLERANCES:
        lines.append(f"tolerances.{name} = {_format(float(config.tolerance(name)))}")
    lines.append(f"seed = {config.seed}")
    return "\n".join(lines) + "\n"
