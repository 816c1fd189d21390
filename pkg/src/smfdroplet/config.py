"""Flat ``section.key = value`` run configuration with a canonical text form."""
from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Callable

from .analysis import PhysicalAnchors
from .dynamics import EvolutionConfig, Wavefunction
from .errors import ConfigError
from .grid import SpectralGrid, make_grid
from .optics import SystemParams
from .tracking import INTENSITY_KINDS

MODES = ("ground_state", "evolve", "sense", "threshold_scan", "predict")
PROFILES = ("gaussian", "homogeneous", "file")
ANCHOR_KEYS = ("anchors.lambda0", "anchors.d_mirror", "anchors.gamma", "anchors.mass")


def fmt_float(value: float) -> str:
    return format(float(value), ".17g")


def _float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("must be finite")
    return value


def _int(text: str) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError("must be an integer")
    return int(value)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError("must be true or false")


def _dt(text: str):
    return "auto" if text.strip().lower() == "auto" else _float(text)


def _float_list(text: str) -> tuple[float, ...]:
    values = tuple(_float(t) for t in text.split(",") if t.strip())
    if not values:
        raise ValueError("must list at least one number")
    return values


def _choice(options):
    def parse(text: str) -> str:
        text = text.strip()
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text
    return parse


def _str(text: str) -> str:
    return text.strip()


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any = None  # None: optional, omitted from the canonical form when unset


SCHEMA: dict[str, Key] = {
    "mode": Key(_choice(MODES), "sense"),
    "output_dir": Key(_str, "out"),
    "params.omega_r_bar": Key(_float, 1.14e-5),
    "params.b0": Key(_float, 100.0),
    "params.delta": Key(_float, -10000.0),
    "params.mirror_R": Key(_float, 0.99),
    "params.p0": Key(_float, 2.28e-6),
    "params.a_bar": Key(_float, 0.0),
    "grid.n_points": Key(_int, 1024),
    "grid.length": Key(_float, 20.0 * math.pi),
    "evolution.dt": Key(_dt, 1.0),
    "evolution.t_final": Key(_float, 3.0e5),
    "evolution.snapshot_stride": Key(_int, 1000),
    "evolution.boundary_guard": Key(_float, 0.8),
    "evolution.intensity_kind": Key(_choice(INTENSITY_KINDS), INTENSITY_KINDS[0]),
    "evolution.strict_heating": Key(_bool, False),
    "evolution.probe_tol": Key(_float, 1e-3),
    "seed.profile": Key(_choice(PROFILES), "gaussian"),
    "seed.center": Key(_float, 0.0),
    "seed.width": Key(_float, 0.562),
    "seed.momentum": Key(_float, 0.0),
    "seed.probe_amplitude": Key(_float, 0.0),
    "seed.path": Key(_str),
    "seed.relax": Key(_bool, False),
    "ground_state.dt": Key(_float, 4.0),
    "ground_state.tol": Key(_float, 1e-9),
    "ground_state.max_steps": Key(_int, 200_000),
    "scan.p0_factors": Key(_float_list, (0.25, 0.5, 0.8, 1.25, 2.0, 4.0)),
    "scan.probe_amplitude": Key(_float, 1e-4),
    "scan.dt": Key(_float, 10.0),
    "scan.t_max": Key(_float, 2.0e6),
    "scan.n_points": Key(_int, 32),
    "scan.length": Key(_float, 2.0 * math.pi),
    "anchors.lambda0": Key(_float),
    "anchors.d_mirror": Key(_float),
    "anchors.gamma": Key(_float),
    "anchors.mass": Key(_float),
}


def _render(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return fmt_float(value)
    if isinstance(value, tuple):
        return ", ".join(fmt_float(v) for v in value)
    return str(value)


class RunConfig:
    """Validated configuration. Unknown keys are rejected."""

    def __init__(self, values: dict[str, Any] | None = None):
        merged = {k: spec.default for k, spec in SCHEMA.items()}
        for key, value in (values or {}).items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown configuration key {key!r}")
            merged[key] = value
        self.values = merged
        self._validate()

    @classmethod
    def from_text(cls, text: str, overrides: list[str] | None = None) -> "RunConfig":
        raw: dict[str, str] = {}
        lines = text.splitlines() + list(overrides or [])
        for lineno, line in enumerate(lines, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            raw[key] = value
        values = {}
        for key, text_value in raw.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown configuration key {key!r}")
            try:
                values[key] = SCHEMA[key].parse(text_value)
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc} (got {text_value!r})") from None
        return cls(values)

    @classmethod
    def from_file(cls, path: str | Path, overrides: list[str] | None = None) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text, overrides)

    @classmethod
    def reference(cls, overrides: list[str] | None = None) -> "RunConfig":
        text = resources.files("smfdroplet").joinpath("reference.cfg").read_text()
        return cls.from_text(text, overrides)

    def canonical(self) -> str:
        lines = [f"{k} = {_render(v)}" for k, v in sorted(self.values.items()) if v is not None]
        return "\n".join(lines) + "\n"

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values

    def replace(self, **changes) -> "RunConfig":
        values = dict(self.values)
        for key, value in changes.items():
            values[key.replace("__", ".")] = value
        return RunConfig(values)

    # -- typed views ----------------------------------------------------

    def params(self) -> SystemParams:
        v = self.values
        try:
            return SystemParams(v["params.omega_r_bar"], v["params.b0"], v["params.delta"],
                                v["params.mirror_R"], v["params.p0"], v["params.a_bar"])
        except ValueError as exc:
            raise ConfigError(f"params.{exc}") from None

    def grid(self) -> SpectralGrid:
        try:
            return make_grid(self.values["grid.n_points"], self.values["grid.length"])
        except ValueError as exc:
            raise ConfigError(f"grid: {exc}") from None

    def scan_grid(self) -> SpectralGrid:
        try:
            return make_grid(self.values["scan.n_points"], self.values["scan.length"])
        except ValueError as exc:
            raise ConfigError(f"scan: {exc}") from None

    def evolution(self, dt: float | None = None) -> EvolutionConfig:
        v = self.values
        if dt is None:
            dt = 1.0 if v["evolution.dt"] == "auto" else v["evolution.dt"]
        return EvolutionConfig(dt, v["evolution.t_final"], v["evolution.snapshot_stride"],
                               "real_time", v["evolution.boundary_guard"],
                               v["evolution.intensity_kind"])

    def anchors(self) -> PhysicalAnchors | None:
        given = [self.values[k] for k in ANCHOR_KEYS]
        if all(g is None for g in given):
            return None
        if any(g is None for g in given):
            missing = [k for k, g in zip(ANCHOR_KEYS, given) if g is None]
            raise ConfigError(f"incomplete physical anchors, missing {', '.join(missing)}")
        try:
            return PhysicalAnchors(*given)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def seed(self, grid: SpectralGrid) -> Wavefunction:
        v = self.values
        profile = v["seed.profile"]
        if profile == "gaussian":
            return Wavefunction.gaussian(grid, v["seed.center"], v["seed.width"], v["seed.momentum"])
        if profile == "homogeneous":
            return Wavefunction.homogeneous(grid, v["seed.probe_amplitude"])
        from .io import read_snapshot
        return Wavefunction(read_snapshot(v["seed.path"], grid)).normalized()

    def _validate(self) -> None:
        v = self.values
        self.params()
        self.grid()
        if v["evolution.dt"] != "auto":
            self.evolution()
        self.anchors()
        if v["seed.profile"] == "file" and not v["seed.path"]:
            raise ConfigError("seed.path is required when seed.profile = file")
        if v["seed.width"] <= 0:
            raise ConfigError(f"seed.width must be > 0, got {v['seed.width']}")
        for key in ("ground_state.dt", "ground_state.tol", "scan.dt", "scan.t_max",
                    "scan.probe_amplitude", "evolution.probe_tol"):
            if not v[key] > 0:
                raise ConfigError(f"{key} must be > 0, got {v[key]}")
        if v["ground_state.max_steps"] < 1:
            raise ConfigError("ground_state.max_steps must be >= 1")
        if any(f <= 0 for f in v["scan.p0_factors"]):
            raise ConfigError("scan.p0_factors must all be positive")
        self.scan_grid()
