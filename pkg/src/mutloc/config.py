"""Scenario configuration: dataclasses plus JSON loading with field-level diagnostics."""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .errors import ConfigError

DIRECTION_MODES = ("alternate", "a_observed", "b_observed")
PGO_MODES = ("batch", "incremental")
TILT_AXES = ("either", "roll", "pitch")


@dataclass(frozen=True)
class Circle:
    center_forward: float = 4.5
    radius: float = 2.0
    kind: str = field(default="circle", init=False)


@dataclass(frozen=True)
class Sinusoid:
    amplitude: float = 2.5
    wavelength: float = 3.5
    span: float = 3.5
    start: float = 3.0
    kind: str = field(default="sinusoid", init=False)


@dataclass(frozen=True)
class Waypoints:
    poses: tuple[tuple[float, float, float], ...] = ()
    kind: str = field(default="waypoints", init=False)


@dataclass(frozen=True)
class ImlNoise:
    sigma_x: float = 0.15
    sigma_y: float = 0.15
    sigma_yaw_deg: float = 20.0


@dataclass(frozen=True)
class IrSettings:
    gamma: float = 0.6
    sigma_t: float = 0.005
    sigma_r_deg: float = 0.3
    iterations: int = 4


@dataclass(frozen=True)
class OdomNoise:
    sigma_t: float = 0.002
    sigma_yaw_deg: float = 0.05


@dataclass(frozen=True)
class Outliers:
    rate: float = 0.0
    magnitude_deg: float = 15.0
    axis: str = "either"  # "roll", "pitch" or "either" (drawn per outlier)


@dataclass(frozen=True)
class PgoSettings:
    kappa: float = 100.0
    tau: float = 0.5
    sigma_deg: float = 10.0
    mode: str = "batch"


@dataclass(frozen=True)
class Fov:
    half_angle_deg: float = 45.0
    min_range: float = 0.5
    max_range: float = 7.0


@dataclass(frozen=True)
class ScenarioConfig:
    trajectory: Circle | Sinusoid | Waypoints = field(default_factory=Circle)
    rendezvous_count: int = 20
    direction: str = "alternate"
    # stationary observer pose, or rendezvous_count + 1 poses (start first)
    observer: tuple[tuple[float, float, float], ...] = ((0.0, 0.0, 0.0),)
    iml_noise: ImlNoise = field(default_factory=ImlNoise)
    ir: IrSettings = field(default_factory=IrSettings)
    odom_noise: OdomNoise = field(default_factory=OdomNoise)
    outlier: Outliers = field(default_factory=Outliers)
    pgo: PgoSettings = field(default_factory=PgoSettings)
    fov: Fov = field(default_factory=Fov)
    model_points: int = 200
    seed: int = 0

    def __post_init__(self):
        validate(self)

    def with_seed(self, seed: int) -> ScenarioConfig:
        return replace(self, seed=int(seed))

    def noise_free(self) -> ScenarioConfig:
        return replace(
            self,
            iml_noise=ImlNoise(0.0, 0.0, 0.0),
            ir=replace(self.ir, sigma_t=0.0, sigma_r_deg=0.0),
            odom_noise=OdomNoise(0.0, 0.0),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["observer"] = [list(p) for p in self.observer]
        traj = d["trajectory"]
        traj["type"] = traj.pop("kind")
        if "poses" in traj:
            traj["poses"] = [list(p) for p in traj["poses"]]
        return d


def _nonneg(value, name):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value >= 0):
        raise ConfigError(f"must be a finite number >= 0, got {value!r}", name)


def _positive(value, name):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ConfigError(f"must be a finite number > 0, got {value!r}", name)


def validate(cfg: ScenarioConfig) -> None:
    if not isinstance(cfg.rendezvous_count, int) or cfg.rendezvous_count < 1:
        raise ConfigError("must be an integer >= 1", "rendezvous_count")
    if cfg.direction not in DIRECTION_MODES:
        raise ConfigError(f"must be one of {DIRECTION_MODES}", "direction")
    t = cfg.trajectory
    if isinstance(t, Circle):
        _positive(t.radius, "trajectory.radius")
        _positive(t.center_forward, "trajectory.center_forward")
    elif isinstance(t, Sinusoid):
        _nonneg(t.amplitude, "trajectory.amplitude")
        _positive(t.wavelength, "trajectory.wavelength")
        _nonneg(t.span, "trajectory.span")
    elif isinstance(t, Waypoints):
        if len(t.poses) not in (cfg.rendezvous_count, cfg.rendezvous_count + 1):
            raise ConfigError("need rendezvous_count or rendezvous_count + 1 poses", "trajectory.poses")
    else:
        raise ConfigError("unknown trajectory", "trajectory")
    if len(cfg.observer) not in (1, cfg.rendezvous_count + 1):
        raise ConfigError("give one pose or rendezvous_count + 1 poses", "observer")
    for name, v in [
        ("iml_noise.sigma_x", cfg.iml_noise.sigma_x),
        ("iml_noise.sigma_y", cfg.iml_noise.sigma_y),
        ("iml_noise.sigma_yaw_deg", cfg.iml_noise.sigma_yaw_deg),
        ("ir.sigma_t", cfg.ir.sigma_t),
        ("ir.sigma_r_deg", cfg.ir.sigma_r_deg),
        ("odom_noise.sigma_t", cfg.odom_noise.sigma_t),
        ("odom_noise.sigma_yaw_deg", cfg.odom_noise.sigma_yaw_deg),
        ("outlier.magnitude_deg", cfg.outlier.magnitude_deg),
        ("fov.min_range", cfg.fov.min_range),
    ]:
        _nonneg(v, name)
    if not 0.0 < cfg.ir.gamma <= 1.0:
        raise ConfigError("must lie in (0, 1]", "ir.gamma")
    if not isinstance(cfg.ir.iterations, int) or cfg.ir.iterations < 1:
        raise ConfigError("must be an integer >= 1", "ir.iterations")
    if not 0.0 <= cfg.outlier.rate <= 1.0:
        raise ConfigError("must lie in [0, 1]", "outlier.rate")
    if cfg.outlier.axis not in TILT_AXES:
        raise ConfigError(f"must be one of {TILT_AXES}", "outlier.axis")
    _positive(cfg.pgo.kappa, "pgo.kappa")
    _positive(cfg.pgo.tau, "pgo.tau")
    _positive(cfg.pgo.sigma_deg, "pgo.sigma_deg")
    if cfg.pgo.mode not in PGO_MODES:
        raise ConfigError(f"must be one of {PGO_MODES}", "pgo.mode")
    _positive(cfg.fov.half_angle_deg, "fov.half_angle_deg")
    if not cfg.fov.max_range > cfg.fov.min_range:
        raise ConfigError("must exceed fov.min_range", "fov.max_range")
    if not isinstance(cfg.model_points, int) or cfg.model_points < 1:
        raise ConfigError("must be an integer >= 1", "model_points")
    if not isinstance(cfg.seed, int) or cfg.seed < 0:
        raise ConfigError("must be a non-negative integer", "seed")


# -- JSON --------------------------------------------------------------------

_SECTIONS = {
    "iml_noise": ImlNoise,
    "ir": IrSettings,
    "odom_noise": OdomNoise,
    "outlier": Outliers,
    "pgo": PgoSettings,
    "fov": Fov,
}
_TRAJECTORIES = {"circle": Circle, "sinusoid": Sinusoid, "waypoints": Waypoints}
_TOP_LEVEL = {"trajectory", "rendezvous_count", "direction", "observer", "model_points", "seed", *_SECTIONS}


def _section(cls, data, name):
    if not isinstance(data, dict):
        raise ConfigError("must be an object", name)
    fields = {k: f for k, f in cls.__dataclass_fields__.items() if f.init}
    out = {}
    for key, val in data.items():
        where = f"{name}.{key}"
        if key not in fields:
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(fields))})", where)
        kind = type(fields[key].default)
        if kind in (int, float):
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ConfigError(f"must be a number, got {val!r}", where)
            if kind is int:
                if not float(val).is_integer():
                    raise ConfigError(f"must be an integer, got {val!r}", where)
                val = int(val)
            else:
                val = float(val)
        elif kind is str and not isinstance(val, str):
            raise ConfigError(f"must be a string, got {val!r}", where)
        out[key] = val
    return cls(**out)


def _pose_list(value, name):
    if isinstance(value, list) and len(value) == 3 and all(isinstance(v, (int, float)) for v in value):
        value = [value]
    if not isinstance(value, list) or not value:
        raise ConfigError("must be [x, y, yaw] or a list of them", name)
    out = []
    for i, p in enumerate(value):
        if not (isinstance(p, list) and len(p) == 3 and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in p)):
            raise ConfigError("each pose must be [x, y, yaw]", f"{name}[{i}]")
        out.append(tuple(float(v) for v in p))
    return tuple(out)


def config_from_dict(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("top level must be a JSON object")
    for key in data:
        if key not in _TOP_LEVEL:
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(_TOP_LEVEL))})", key)
    kwargs = {}
    if "trajectory" in data:
        traj = data["trajectory"]
        if not isinstance(traj, dict) or "type" not in traj:
            raise ConfigError("must be an object with a 'type'", "trajectory")
        kind = traj["type"]
        if kind not in _TRAJECTORIES:
            raise ConfigError(f"unknown type {kind!r} (allowed: {', '.join(_TRAJECTORIES)})", "trajectory.type")
        body = {k: v for k, v in traj.items() if k != "type"}
        if kind == "waypoints":
            if set(body) != {"poses"}:
                raise ConfigError("waypoints take exactly one key, 'poses'", "trajectory")
            kwargs["trajectory"] = Waypoints(_pose_list(body["poses"], "trajectory.poses"))
        else:
            kwargs["trajectory"] = _section(_TRAJECTORIES[kind], body, "trajectory")
    for key in ("rendezvous_count", "model_points", "seed"):
        if key in data:
            v = data[key]
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"must be an integer, got {v!r}", key)
            kwargs[key] = v
    if "direction" in data:
        kwargs["direction"] = data["direction"]
    if "observer" in data:
        kwargs["observer"] = _pose_list(data["observer"], "observer")
    for key, cls in _SECTIONS.items():
        if key in data:
            kwargs[key] = _section(cls, data[key], key)
    return ScenarioConfig(**kwargs)


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", line=exc.lineno) from None
    try:
        return config_from_dict(data)
    except ConfigError as exc:
        if exc.field is None or exc.line is not None:
            raise
        raise ConfigError(str(exc).split(": ", 1)[1], exc.field, _locate(text, exc.field)) from None


def _locate(text: str, field_path: str) -> int | None:
    """Best-effort line number of a dotted field path inside JSON text."""
    lines = text.splitlines()
    start, found = 0, None
    for part in re.sub(r"\[\d+\]", "", field_path).split("."):
        key = f'"{part}"'
        for i in range(start, len(lines)):
            if key in lines[i]:
                start = found = i
                break
    return None if found is None else found + 1


def dump_config(cfg: ScenarioConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2) + "\n"
