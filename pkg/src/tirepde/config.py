"""YAML scenario files: schema, defaults and line-numbered validation.

A scenario file is a mapping of sections. Every key is optional; an empty
file gives the reference scenario (default vehicle, gamma = 500, eta = 1,
dt = 1e-6 s, 50 cells). Example::

    schema_version: 1
    mode: closed-loop
    seed: 7
    observer:
      gamma: 500
      realization: kernel
    grid:
      T: 1.0
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .model import ParameterError, PlantState, VehicleParams, build_matrices
from .sensors import SensorSpec
from .transport import CFLError, GridSpec, SteeringSpec

SCHEMA_VERSION = 1
MODES = ("open-loop", "closed-loop", "freq-analysis", "certify-poles", "acceptance")


class ConfigError(ValueError):
    """Invalid scenario file or override; message carries the location."""


# section -> key -> (kind, default); kinds: float, int, bool, str, pair (two floats), opt_str
_VEHICLE = {f.name: ("int" if f.name == "chi" else "float", f.default)
            for f in dataclasses.fields(VehicleParams)}

SCHEMA = {
    "vehicle": _VEHICLE,
    "grid": {"N": ("int", 50), "dt": ("float", 1e-6), "T": ("float", 2.0)},
    "steering": {
        "offset": ("pair", (1.0, 0.0)),
        "amplitude": ("pair", (2.0, 0.0)),
        "omega": ("pair", (10.0, 0.0)),
        "units": ("str", "deg"),
    },
    "sensors": {
        "enabled": ("bool", True),
        "std": ("pair", (0.01, 0.5)),
        "period": ("pair", (0.005, 0.01)),
    },
    "observer": {
        "gamma": ("float", 500.0),
        "eta": ("float", 1.0),
        "filter_order": ("int", 1),
        "realization": ("str", "rational"),
        "fit_order_max": ("int", 80),
        "fit_tol": ("float", 1e-3),
        "filter_file": ("opt_str", None),
        "dt_kernel": ("float", 1e-5),
        "kernel_horizon": ("float", 0.05),
    },
    "initial": {
        "X0": ("pair", (0.03, -0.25)),
        "z0": ("pair", (0.0033, 0.0033)),
        "X0_hat": ("pair", (0.0, 0.0)),
        "z0_hat": ("pair", (0.0, 0.0)),
    },
    "output": {
        "log_period": ("float", 1e-3),
        "snapshot_period": ("float", 0.01),
        "plots": ("bool", True),
    },
    "analysis": {
        "omega_min": ("float", 1e-2),
        "omega_max": ("float", 1e5),
        "n_omega": ("int", 2000),
        "k_max": ("int", 50),
    },
}
TOP_LEVEL = {
    "schema_version": ("int", SCHEMA_VERSION),
    "mode": ("str", "closed-loop"),
    "seed": ("int", 0),
    "output_dir": ("str", "out"),
}


@dataclass(frozen=True)
class ObserverSettings:
    gamma: float = 500.0
    eta: float = 1.0
    filter_order: int = 1
    realization: str = "rational"
    fit_order_max: int = 80
    fit_tol: float = 1e-3
    filter_file: str | None = None
    dt_kernel: float = 1e-5
    kernel_horizon: float = 0.05


@dataclass(frozen=True)
class AnalysisSettings:
    omega_min: float = 1e-2
    omega_max: float = 1e5
    n_omega: int = 2000
    k_max: int = 50

    def omega(self) -> np.ndarray:
        return np.logspace(np.log10(self.omega_min), np.log10(self.omega_max), self.n_omega)


@dataclass(frozen=True)
class ScenarioConfig:
    """Fully validated scenario."""

    vehicle: VehicleParams = field(default_factory=VehicleParams)
    grid: GridSpec = field(default_factory=GridSpec)
    steering: SteeringSpec = field(default_factory=SteeringSpec)
    sensors: SensorSpec | None = field(default_factory=SensorSpec)
    observer: ObserverSettings = field(default_factory=ObserverSettings)
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)
    X0: tuple = (0.03, -0.25)
    z0: tuple = (0.0033, 0.0033)
    X0_hat: tuple = (0.0, 0.0)
    z0_hat: tuple = (0.0, 0.0)
    mode: str = "closed-loop"
    seed: int = 0
    output_dir: str = "out"
    log_period: float = 1e-3
    snapshot_period: float = 0.01
    plots: bool = True
    source: str = "<defaults>"

    def plant_ic(self) -> PlantState:
        ic = PlantState.uniform(np.array(self.X0), self.z0, self.grid.N)
        ic.project_bc()
        return ic

    def observer_ic(self) -> PlantState:
        ic = PlantState.uniform(np.array(self.X0_hat), self.z0_hat, self.grid.N)
        ic.project_bc()
        return ic

    def describe(self) -> str:
        o = self.observer
        sens = self.sensors.describe() if self.sensors else "ideal (noise off)"
        return (f"mode={self.mode} seed={self.seed} N={self.grid.N} dt={self.grid.dt:g} "
                f"T={self.grid.T:g} gamma={o.gamma:g} eta={o.eta:g} "
                f"realization={o.realization} sensors: {sens}")


# -- parsing ------------------------------------------------------------------

def _where(src: str, line: int | None) -> str:
    return f"{src}:{line}" if line is not None else src


def _coerce(kind: str, value, where: str, key: str):
    def bad(expect):
        return ConfigError(f"{where}: '{key}' expects {expect}, got {value!r}")

    # YAML 1.1 reads exponent forms such as 1e-6 as strings
    if kind in ("float", "int"):
        value = _as_number(value)
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise bad("a number")
        return float(value)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise bad("an integer")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise bad("true or false")
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise bad("a string")
        return value
    if kind == "opt_str":
        if value is not None and not isinstance(value, str):
            raise bad("a string or null")
        return value
    if kind == "pair":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return (float(value), float(value))
        if isinstance(value, list):
            value = [_as_number(v) for v in value]
        if (not isinstance(value, list) or len(value) != 2
                or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)):
            raise bad("a number or a list of two numbers")
        return tuple(float(v) for v in value)
    raise AssertionError(kind)


def _as_number(value):
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return value
    return value


def _node_lines(node) -> dict:
    """Map ``(section, key)`` / ``(key,)`` to 1-based source lines."""
    lines = {}
    if not isinstance(node, yaml.MappingNode):
        return lines
    for knode, vnode in node.value:
        k = knode.value
        lines[(k,)] = knode.start_mark.line + 1
        if isinstance(vnode, yaml.MappingNode):
            for k2, _ in vnode.value:
                lines[(k, k2.value)] = k2.start_mark.line + 1
    return lines


def _parse_override(item: str):
    if "=" not in item:
        raise ConfigError(f"--set {item!r}: expected key=value")
    key, raw = item.split("=", 1)
    path = tuple(p for p in key.strip().split(".") if p)
    if not path or len(path) > 2:
        raise ConfigError(f"--set {item!r}: key must be 'name' or 'section.name'")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"--set {item!r}: cannot parse value ({exc.problem})") from None
    return path, value


def load_raw(text: str, source: str = "<string>") -> tuple[dict, dict]:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"{_where(source, line)}: malformed YAML ({getattr(exc, 'problem', exc)})") from None
    if data is None:
        return {}, {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}:1: top level must be a mapping of sections")
    return data, _node_lines(node)


def build_config(data: dict, lines: dict | None = None, source: str = "<string>",
                 overrides=(), seed: int | None = None) -> ScenarioConfig:
    """Validate a raw mapping (plus ``key=value`` overrides) into a ScenarioConfig.

    Precedence: overrides > ``seed`` argument > file > defaults.
    """
    lines = lines or {}
    origin = {}
    data = {k: (dict(v) if isinstance(v, dict) else v) for k, v in data.items()}
    if seed is not None:
        data["seed"] = seed
        origin[("seed",)] = "--seed"
    for item in overrides:
        path, value = _parse_override(item)
        if len(path) == 1:
            data[path[0]] = value
        else:
            sec = data.setdefault(path[0], {})
            if not isinstance(sec, dict):
                raise ConfigError(f"--set {item!r}: '{path[0]}' is not a section")
            sec[path[1]] = value
        origin[path] = f"--set {item}"

    def loc(*path):
        return origin.get(path) or _where(source, lines.get(path))

    values = {}
    for key, raw in data.items():
        if key in TOP_LEVEL:
            values[key] = _coerce(TOP_LEVEL[key][0], raw, loc(key), key)
        elif key in SCHEMA:
            if raw is None:
                raw = {}
            if not isinstance(raw, dict):
                raise ConfigError(f"{loc(key)}: section '{key}' must be a mapping")
            for sub, v in raw.items():
                if sub not in SCHEMA[key]:
                    known = ", ".join(SCHEMA[key])
                    raise ConfigError(f"{loc(key, sub)}: unknown key '{key}.{sub}' (known: {known})")
                values[(key, sub)] = _coerce(SCHEMA[key][sub][0], v, loc(key, sub), f"{key}.{sub}")
        else:
            known = ", ".join(list(TOP_LEVEL) + list(SCHEMA))
            raise ConfigError(f"{loc(key)}: unknown key '{key}' (known: {known})")

    def get(sec, key):
        return values.get((sec, key), SCHEMA[sec][key][1])

    def top(key):
        return values.get(key, TOP_LEVEL[key][1])

    if top("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"{loc('schema_version')}: unsupported schema_version "
                          f"{top('schema_version')} (this build reads {SCHEMA_VERSION})")
    mode = top("mode")
    if mode not in MODES:
        raise ConfigError(f"{loc('mode')}: mode must be one of {', '.join(MODES)}, got {mode!r}")
    seed_v = top("seed")
    if not 0 <= seed_v < 2**64:
        raise ConfigError(f"{loc('seed')}: seed must be an unsigned 64-bit integer")

    try:
        vehicle = VehicleParams(**{k: get("vehicle", k) for k in SCHEMA["vehicle"]})
    except ParameterError as exc:
        raise ConfigError(f"{loc('vehicle', exc.field)}: {exc}") from None

    def section(sec, ctor, keys=None):
        keys = keys or list(SCHEMA[sec])
        try:
            return ctor(**{k: get(sec, k) for k in keys})
        except ValueError as exc:
            bad = next((k for k in keys if k in str(exc)), None)
            where = loc(sec, bad) if bad else loc(sec)
            raise ConfigError(f"{where}: {exc}") from None

    grid = section("grid", GridSpec)
    try:
        grid.check_cfl(build_matrices(vehicle))
    except CFLError as exc:
        raise ConfigError(f"{loc('grid', 'dt')}: {exc}") from None
    steering = section("steering", SteeringSpec)
    sensors = None
    if get("sensors", "enabled"):
        sensors = section("sensors", lambda **kw: SensorSpec(seed=seed_v, **kw), ["std", "period"])
        try:
            sensors.period_steps(grid.dt)
        except ValueError as exc:
            raise ConfigError(f"{loc('sensors', 'period')}: {exc}") from None
    obs = section("observer", ObserverSettings)
    if obs.gamma <= 0 or obs.eta <= 0:
        raise ConfigError(f"{loc('observer')}: gamma and eta must be > 0")
    if obs.realization not in ("rational", "kernel"):
        raise ConfigError(f"{loc('observer', 'realization')}: realization must be "
                          f"'rational' or 'kernel', got {obs.realization!r}")
    if obs.filter_order != 1:
        raise ConfigError(f"{loc('observer', 'filter_order')}: only the first-order "
                          f"low-pass is implemented (filter_order: 1)")
    analysis = section("analysis", AnalysisSettings)
    if not 0 < analysis.omega_min < analysis.omega_max or analysis.n_omega < 10:
        raise ConfigError(f"{loc('analysis')}: need 0 < omega_min < omega_max and n_omega >= 10")
    log_period = get("output", "log_period")
    snap = get("output", "snapshot_period")
    if log_period < grid.dt or snap < grid.dt:
        raise ConfigError(f"{loc('output')}: log and snapshot periods must be >= dt")

    return ScenarioConfig(
        vehicle=vehicle, grid=grid, steering=steering, sensors=sensors, observer=obs,
        analysis=analysis, X0=get("initial", "X0"), z0=get("initial", "z0"),
        X0_hat=get("initial", "X0_hat"), z0_hat=get("initial", "z0_hat"),
        mode=mode, seed=seed_v, output_dir=top("output_dir"), log_period=log_period,
        snapshot_period=snap, plots=get("output", "plots"), source=source,
    )


def parse_config(path=None, overrides=(), seed: int | None = None) -> ScenarioConfig:
    """Read and validate a scenario file; ``path=None`` means all defaults."""
    if path is None:
        return build_config({}, overrides=overrides, seed=seed, source="<defaults>")
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    data, lines = load_raw(text, str(path))
    return build_config(data, lines, str(path), overrides, seed)


def default_config_text() -> str:
    """A fully populated scenario file listing every key with its default."""
    out = [f"schema_version: {SCHEMA_VERSION}"]
    for k, (_, v) in TOP_LEVEL.items():
        if k != "schema_version":
            out.append(f"{k}: {_fmt(v)}")
    for sec, keys in SCHEMA.items():
        out.append(f"{sec}:")
        out += [f"  {k}: {_fmt(v)}" for k, (_, v) in keys.items()]
    return "\n".join(out) + "\n"


def _fmt(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, float):
        return repr(v)
    return str(v)
