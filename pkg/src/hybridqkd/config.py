"""JSON run configuration with the laboratory preset (`defaults: table1`).

A document is a JSON object with optional sections; every absent key takes
its preset value.  Unknown sections or keys are rejected, and validation
errors carry the dotted path of the offending field (``source.mu``).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from ._validation import ParameterError, require, require_range
from .channel import BackgroundParams, ETA0_B, FiberChannel, FreeSpaceChannel
from .compensation import CompensatorSpec, SourceCrystal
from .keyrate import LinkParams, link_for_lengths
from .protocol_sim import SimConfig
from .source import SourceParams

__all__ = [
    "LinkSection",
    "SimulationSection",
    "TomographySection",
    "CompensationSection",
    "SweepSection",
    "RunConfig",
    "PRESETS",
    "load_config",
    "parse_config",
    "dump_config",
]

PRESETS = ("table1",)


@dataclass(frozen=True)
class LinkSection:
    """Receiver efficiencies and error model; ``y0b`` of null means the solar model."""

    eta0_a: float = 0.042
    eta0_b: float = ETA0_B
    y0a: float = 3e-5
    y0b: float | None = None
    e0: float = 0.5
    ed: float = 0.015
    f_ec: float = 1.16
    q: float = 0.5

    def __post_init__(self):
        for name in ("eta0_a", "eta0_b", "y0a"):
            require_range(getattr(self, name), name, 0.0, 1.0)
        if self.y0b is not None:
            require_range(self.y0b, "y0b", 0.0, 1.0)
        require_range(self.e0, "e0", 0.0, 0.5)
        require_range(self.ed, "ed", 0.0, 0.5)
        require_range(self.f_ec, "f_ec", 1.0)
        require_range(self.q, "q", 0.0, 1.0, lo_open=True)


@dataclass(frozen=True)
class SimulationSection:
    seed: int = 0
    n_pulses: int = 1_000_000
    visibility: float = 1.0
    visibility_x: float | None = None
    coincidence_window_s: float = 3.2e-9
    double_click_policy: str = "random"
    pair_statistics: str = "thermal"
    block_size: int = 1 << 18
    workers: int = 1
    chsh_counts_per_setting: float = 25_000.0

    def __post_init__(self):
        require(self.workers >= 1, "workers", "must be >= 1")
        require_range(self.chsh_counts_per_setting, "chsh_counts_per_setting", 0.0,
                      lo_open=True)


@dataclass(frozen=True)
class TomographySection:
    """Synthetic tomography run; ``visibility`` of null uses the source visibility.

    If ``counts`` is given the 16 measured counts are reconstructed instead.
    """

    n_per_setting: float = 10_000.0
    visibility: float | None = None
    counts: tuple | None = None
    max_iter: int = 10_000

    def __post_init__(self):
        require_range(self.n_per_setting, "n_per_setting", 0.0, lo_open=True)
        if self.visibility is not None:
            require_range(self.visibility, "visibility", 0.0, 1.0)
        if self.counts is not None:
            require(len(self.counts) == 16, "counts", "expected 16 counts")
            for c in self.counts:
                require_range(c, "counts", 0.0)
        require(self.max_iter >= 1, "max_iter", "must be >= 1")


@dataclass(frozen=True)
class CompensationSection:
    length_mm: float = 5.0
    cut_angle_deg: float = 45.4
    temperature_c: float = 32.5
    optic_axis: str = "horizontal"
    source_length_mm: float = 4.5
    source_temperature_c: float = 75.0
    pump_nm: float = 1064.0
    spectral_range_nm: tuple = (1547.0, 1563.0)
    n_wavelengths: int = 161
    temperature_range_c: tuple = (20.0, 200.0)
    angle_range_deg: tuple = (10.0, 80.0)

    def __post_init__(self):
        self.spec()
        self.source()
        for name in ("spectral_range_nm", "temperature_range_c", "angle_range_deg"):
            lo, hi = getattr(self, name)
            require(hi > lo, name, "range must satisfy start < stop")
        require(self.n_wavelengths >= 2, "n_wavelengths", "must be >= 2")

    def spec(self) -> CompensatorSpec:
        return CompensatorSpec(self.length_mm, self.cut_angle_deg, self.temperature_c,
                               self.optic_axis)

    def source(self) -> SourceCrystal:
        return SourceCrystal(self.source_length_mm, self.source_temperature_c, self.pump_nm)


@dataclass(frozen=True)
class SweepSection:
    """Sweep grids as (start, stop, step) in km, stop inclusive."""

    fiber_km: tuple = (0.0, 200.0, 2.0)
    space_km: tuple = (0.0, 1000.0, 10.0)

    def __post_init__(self):
        for name in ("fiber_km", "space_km"):
            start, stop, step = getattr(self, name)
            require(start >= 0, name, "start must be >= 0")
            require(stop >= start, name, "stop must be >= start")
            require(step > 0, name, "step must be > 0")


_SECTIONS = {
    "source": SourceParams,
    "link": LinkSection,
    "fiber": FiberChannel,
    "free_space": FreeSpaceChannel,
    "background": BackgroundParams,
    "simulation": SimulationSection,
    "tomography": TomographySection,
    "compensation": CompensationSection,
    "sweep": SweepSection,
}

_INT_FIELDS = {"seed", "n_pulses", "block_size", "workers", "n_wavelengths", "max_iter"}
_OPTIONAL_NUMBERS = {"y0b", "visibility_x", "visibility"}


@dataclass(frozen=True)
class RunConfig:
    source: SourceParams = field(default_factory=SourceParams)
    link: LinkSection = field(default_factory=LinkSection)
    fiber: FiberChannel = field(default_factory=FiberChannel)
    free_space: FreeSpaceChannel = field(default_factory=FreeSpaceChannel)
    background: BackgroundParams = field(default_factory=BackgroundParams)
    simulation: SimulationSection = field(default_factory=SimulationSection)
    tomography: TomographySection = field(default_factory=TomographySection)
    compensation: CompensationSection = field(default_factory=CompensationSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    def base_link(self) -> LinkParams:
        """Key-rate parameters at zero channel length (receiver efficiencies only)."""
        l = self.link
        kwargs = dict(mu=self.source.mu, eta_a=l.eta0_a, eta_b=l.eta0_b, eta0_a=l.eta0_a,
                      eta0_b=l.eta0_b, y0a=l.y0a, e0=l.e0, ed=l.ed, f_ec=l.f_ec, q=l.q,
                      rep_rate=self.source.rep_rate)
        if l.y0b is not None:
            kwargs["y0b"] = l.y0b
        return LinkParams(**kwargs)

    def link_params(self) -> LinkParams:
        """Key-rate parameters at the configured fiber and free-space lengths."""
        link = link_for_lengths(self.base_link(), self.fiber.length_km,
                                self.free_space.path_length_m / 1e3, self.fiber,
                                self.free_space, self.background)
        if self.link.y0b is not None:
            link = replace(link, y0b=self.link.y0b)
        return link

    def sim_config(self, seed: int | None = None) -> SimConfig:
        s = self.simulation
        try:
            return SimConfig(seed=s.seed if seed is None else seed, n_pulses=s.n_pulses,
                             link=self.link_params(), visibility=s.visibility,
                             visibility_x=s.visibility_x,
                             coincidence_window_s=s.coincidence_window_s,
                             double_click_policy=s.double_click_policy,
                             pair_statistics=s.pair_statistics, block_size=s.block_size)
        except ParameterError as exc:
            raise ParameterError(f"simulation.{exc.field}", exc.message) from None


def _coerce(value: Any, default: Any, name: str, path: str):
    def number(v):
        require(isinstance(v, (int, float)) and not isinstance(v, bool), path,
                f"expected a number, got {v!r}")
        require(math.isfinite(v), path, f"must be finite, got {v!r}")
        return float(v)

    if name in _INT_FIELDS:
        require(isinstance(value, int) and not isinstance(value, bool), path,
                f"expected an integer, got {value!r}")
        return value
    if name == "counts":
        if value is None:
            return None
        require(isinstance(value, list), path, "expected a list of 16 counts")
        return tuple(number(v) for v in value)
    if name in _OPTIONAL_NUMBERS and value is None:
        return None
    if isinstance(default, str):
        require(isinstance(value, str), path, f"expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        require(isinstance(value, list) and len(value) == len(default), path,
                f"expected a list of {len(default)} numbers")
        return tuple(number(v) for v in value)
    return number(value)


def _build_section(name: str, doc: Any):
    cls = _SECTIONS[name]
    require(isinstance(doc, dict), name, "section must be a JSON object")
    known = {f.name: f for f in fields(cls)}
    defaults = cls()
    kwargs = {}
    for key, value in doc.items():
        path = f"{name}.{key}"
        require(key in known, path, "unknown key")
        kwargs[key] = _coerce(value, getattr(defaults, key), key, path)
    try:
        return cls(**kwargs)
    except ParameterError as exc:
        raise ParameterError(f"{name}.{exc.field}", exc.message) from None


def parse_config(doc: Any) -> RunConfig:
    """Validate a decoded JSON document."""
    require(isinstance(doc, dict), "config", "top level must be a JSON object")
    preset = doc.get("defaults", "table1")
    require(preset in PRESETS, "defaults", f"unknown preset {preset!r}")
    sections = {}
    for key, value in doc.items():
        if key == "defaults":
            continue
        require(key in _SECTIONS, key, "unknown section")
        sections[key] = _build_section(key, value)
    cfg = RunConfig(**sections)
    try:
        cfg.link_params()
    except ParameterError as exc:
        raise ParameterError(f"link.{exc.field}", exc.message) from None
    cfg.sim_config()
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    """Read a JSON config file; ``None`` gives the preset.

    Raises ``ParameterError`` (field ``config``) for unreadable or
    malformed files.
    """
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParameterError("config", f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParameterError("config", f"invalid JSON: {exc}") from None
    return parse_config(doc)


def dump_config(cfg: RunConfig) -> dict:
    """Fully explicit document that ``parse_config`` maps back to ``cfg``."""
    out: dict = {"defaults": "table1"}
    for name in _SECTIONS:
        section = asdict(getattr(cfg, name))
        out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in section.items()}
    return out
