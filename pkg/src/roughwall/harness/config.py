"""Experiment configuration read from TOML files.

Schema (all sections optional, defaults shown by ``ExperimentConfig()``)::

    seed = 0
    out = "runs/riblet"
    variants = ["dirichlet", "navier", "corrector"]

    [geometry]
    inner_radius = 1.0
    outer_radius = 2.0
    profile = "cosine"        # constant | cosine | two-scale | fourier
    amplitude = 0.125
    offset = 0.0
    outer_speed = 1.0         # 0 gives the zero-data problem

    [cell]
    resolution = 256          # cells per period
    depth = 0.0               # truncation depth, 0 picks it from the decay bound
    tolerance = 1e-10
    method = "fitted"
    samples = 4               # slip samples along the circle
    chart = "circle"          # chart of the single-cell command
    lambda = [1.0, 0.0]

    [macro]
    eps = ["1/16", "1/32", "1/64", "1/128"]
    elements_per_period = 64  # node intervals per period are twice this
    layer_elements = 48
    wall_spacing = "1/512"
    growth = 1.1
    max_spacing = "1/16"

    [divbench]
    eps = ["1/8", "1/16", "1/32"]
    q = 2

Fractions may be written as strings like ``"1/16"``.
"""

from __future__ import annotations

import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..errors import ConfigError
from ..geometry import MacroResolution, make_profile

VARIANT_CHOICES = ("dirichlet", "navier", "corrector")


def parse_number(value) -> float:
    """Float from a number or a fraction string such as ``"1/16"``."""
    if isinstance(value, bool):
        raise ConfigError(f"expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    try:
        return float(Fraction(str(value).strip()))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"cannot read {value!r} as a number") from None


def parse_list(value) -> list:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    return [parse_number(v) for v in value]


@dataclass(frozen=True)
class GeometryConfig:
    inner_radius: float = 1.0
    outer_radius: float = 2.0
    profile: str = "cosine"
    amplitude: float = 0.125
    offset: float = 0.0
    outer_speed: float = 1.0

    def make_profile(self):
        return make_profile(self.profile, self.amplitude, self.offset)


@dataclass(frozen=True)
class CellConfig:
    resolution: int = 256
    depth: float = 0.0
    tolerance: float = 1e-10
    method: str = "fitted"
    samples: int = 4
    chart: str = "circle"
    jump: tuple = (1.0, 0.0)

    @property
    def truncation_depth(self):
        return self.depth if self.depth > 0 else None


@dataclass(frozen=True)
class MacroConfig:
    eps: tuple = (1 / 16, 1 / 32, 1 / 64, 1 / 128)
    elements_per_period: int = 64
    layer_elements: int = 48
    wall_spacing: float = 1 / 512
    growth: float = 1.1
    max_spacing: float = 1 / 16

    @property
    def cells_per_period(self) -> int:
        return 2 * self.elements_per_period

    def resolution(self, scale: int = 1) -> MacroResolution:
        return MacroResolution(
            elements_per_period=scale * self.elements_per_period,
            layer_elements=scale * self.layer_elements,
            wall_spacing=self.wall_spacing / scale,
            growth=self.growth,
            max_spacing=self.max_spacing / scale,
        )


@dataclass(frozen=True)
class DivbenchConfig:
    eps: tuple = (1 / 8, 1 / 16, 1 / 32)
    q: float = 2.0


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    cell: CellConfig = field(default_factory=CellConfig)
    macro: MacroConfig = field(default_factory=MacroConfig)
    divbench: DivbenchConfig = field(default_factory=DivbenchConfig)
    variants: tuple = VARIANT_CHOICES
    out: str = "runs/default"
    seed: int = 0

    def __post_init__(self):
        validate(self)

    def to_dict(self) -> dict:
        return asdict(self)

    def with_eps(self, eps) -> "ExperimentConfig":
        return replace(self, macro=replace(self.macro, eps=tuple(float(e) for e in eps)))


def validate(cfg: ExperimentConfig) -> None:
    eps = cfg.macro.eps
    if len(eps) < 1 or any(e <= 0 for e in eps):
        raise ConfigError("macro.eps needs positive entries")
    for a, b in zip(eps, eps[1:]):
        if not math.isclose(a / b, 2.0, rel_tol=1e-9):
            raise ConfigError(f"macro.eps must halve at every step, got {a:g} -> {b:g}")
    if cfg.macro.cells_per_period < 8:
        raise ConfigError(f"{cfg.macro.cells_per_period} cells per roughness period; at least 8 required")
    if cfg.macro.layer_elements < 1:
        raise ConfigError("macro.layer_elements must be positive")
    bad = [v for v in cfg.variants if v not in VARIANT_CHOICES]
    if bad:
        raise ConfigError(f"unknown variants {bad}; expected a subset of {VARIANT_CHOICES}")
    if "corrector" in cfg.variants and cfg.cell.method != "fitted":
        raise ConfigError("corrector fields need the fitted cell solver")
    if cfg.cell.resolution < 4:
        raise ConfigError("cell.resolution must be at least 4")
    if not 0 < cfg.geometry.inner_radius < cfg.geometry.outer_radius:
        raise ConfigError("need 0 < inner_radius < outer_radius")


def _section(cls, raw: dict, name: str, renames=None, lists=(), numbers=()):
    raw = dict(raw or {})
    for src, dst in (renames or {}).items():
        if src in raw:
            raw[dst] = raw.pop(src)
    known = {f.name for f in fields(cls)}
    extra = sorted(set(raw) - known)
    if extra:
        raise ConfigError(f"unknown keys in [{name}]: {extra}")
    for key in lists:
        if key in raw:
            raw[key] = tuple(parse_list(raw[key]))
    for key in numbers:
        if key in raw:
            raw[key] = parse_number(raw[key])
    return cls(**raw)


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    top = {"geometry", "cell", "macro", "divbench", "variants", "out", "seed"}
    extra = sorted(set(data) - top)
    if extra:
        raise ConfigError(f"unknown top-level keys: {extra}")
    try:
        geometry = _section(
            GeometryConfig, data.get("geometry"), "geometry",
            numbers=("inner_radius", "outer_radius", "amplitude", "offset", "outer_speed"),
        )
        cell = _section(
            CellConfig, data.get("cell"), "cell", renames={"lambda": "jump"},
            lists=("jump",), numbers=("depth", "tolerance"),
        )
        macro = _section(
            MacroConfig, data.get("macro"), "macro", lists=("eps",),
            numbers=("wall_spacing", "growth", "max_spacing"),
        )
        divbench = _section(DivbenchConfig, data.get("divbench"), "divbench", lists=("eps",), numbers=("q",))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    kw = {}
    if "variants" in data:
        kw["variants"] = tuple(data["variants"])
    if "out" in data:
        kw["out"] = str(data["out"])
    if "seed" in data:
        kw["seed"] = int(data["seed"])
    return ExperimentConfig(geometry, cell, macro, divbench, **kw)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data)
