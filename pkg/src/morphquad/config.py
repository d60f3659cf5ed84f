"""Flat ``section.key=value`` scenario configuration files."""
from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .curvature_map import ArmGeometry
from .dynamics import ConfigError, GustModel, VehicleParams
from .flight_control import ControllerGains, ControlSetpoint, Mode, MorphProfile
from .morphology import ArmStiffness, x_layout

CONFIG_DIR_ENV = "MORPHQUAD_CONFIG_DIR"
DEFAULT_SEED = 7

REQUIRED_KEYS = ("scenario.name", "vehicle.mass_kg", "vehicle.inertia_kgm2", "vehicle.max_thrust_n")

# config key -> dataclass attribute
VEHICLE_KEYS = {
    "vehicle.motor_tau_s": "motor_time_constant",
    "vehicle.k_drag_m": "k_drag",
    "vehicle.drag_coeff_nspm": "drag_coeff",
    "vehicle.gravity_mps2": "gravity",
    "vehicle.beta_rate_dps": "beta_rate_limit",
    "vehicle.beta_tau_s": "beta_time_constant",
    "vehicle.efficiency_at_limit": "efficiency_at_limit",
}
GEOM_KEYS = {
    "geom.L1_mm": "L1", "geom.L2_mm": "L2", "geom.r_mm": "r", "geom.K": "K", "geom.La_mm": "La",
    "geom.alpha_max_deg": "alpha_max", "geom.beta_limit_deg": "beta_physical_limit",
    "geom.beta_knee_deg": "beta_efficiency_knee",
}
GAIN_SCALARS = {
    "pos_p_xy", "pos_p_z", "vel_p_xy", "vel_i_xy", "vel_d_xy", "vel_p_z", "vel_i_z", "vel_d_z",
    "vel_int_limit", "vel_max_xy", "vel_max_up", "vel_max_down", "tilt_max_deg",
    "rate_int_limit", "rate_max_dps", "hover_thrust_fraction",
}
GAIN_VECTORS = {"att_p", "rate_p", "rate_i", "rate_d"}
OTHER_KEYS = {
    "seed", "sim.dt_s", "sim.control_dt_s", "sim.settle_s", "control.mixer",
    "vehicle.mount_radius_m", "vehicle.ei_eff_nm2",
    "gust.mean_mps", "gust.std_mps", "gust.tau_s", "gust.seed",
    "morph.activation_s", "morph.ramp_dps", "morph.targets_deg", "morph.release_s",
    "metrics.hold_phase", "metrics.attitude_phases",
}
PHASE_FIELDS = {"mode", "duration_s", "position_m", "altitude_m", "ramp_mps", "yaw_deg"}
_PHASE_RE = re.compile(r"^phase\.(\d+)\.(\w+)$")


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key}")
        out[key] = value
    return out


def bundled_config_dir() -> Path:
    return Path(str(resources.files("morphquad") / "configs"))


def resolve_config_path(name: str | os.PathLike) -> Path:
    """Find a config by path, then in $MORPHQUAD_CONFIG_DIR, then among bundled files."""
    path = Path(name)
    if path.is_file():
        return path
    candidates = []
    env = os.environ.get(CONFIG_DIR_ENV)
    if env:
        candidates.append(Path(env) / path)
    candidates.append(bundled_config_dir() / path)
    for cand in candidates:
        if cand.is_file():
            return cand
    raise FileNotFoundError(f"config not found: {name}")


def _float(kv, key, default=None):
    if key not in kv:
        if default is None:
            raise ConfigError(f"missing required key: {key}")
        return default
    try:
        return float(kv[key])
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {kv[key]!r}") from None


def _floats(kv, key, n, default=None):
    if key not in kv:
        if default is None:
            raise ConfigError(f"missing required key: {key}")
        return np.asarray(default, dtype=float)
    try:
        vals = [float(v) for v in kv[key].split(",")]
    except ValueError:
        raise ConfigError(f"{key}: expected {n} comma-separated numbers, got {kv[key]!r}") from None
    if len(vals) == 1 and n > 1:
        vals = vals * n
    if len(vals) != n:
        raise ConfigError(f"{key}: expected {n} values, got {len(vals)}")
    return np.array(vals)


@dataclass
class Phase:
    duration: float
    mode: Mode
    target: np.ndarray  # world position for HOLD; only z is used in ALTITUDE_HOLD
    ramp_rate: float | None = None  # setpoint slew toward target, m/s
    yaw: float = 0.0


@dataclass
class ScenarioConfig:
    name: str
    vehicle: VehicleParams
    gains: ControllerGains
    gust: GustModel
    phases: list[Phase]
    dt: float = 0.001
    control_dt: float = 0.004
    seed: int = DEFAULT_SEED
    morph: MorphProfile = field(default_factory=MorphProfile)
    mixer: str = "baseline"
    settle_time: float = 1.0
    hold_phase: int = 1  # zero-based phase whose window drives altitude metrics
    attitude_phases: tuple[int, ...] | None = None  # zero-based; None: the hold phase only

    def __post_init__(self):
        if not self.phases:
            raise ConfigError("at least one phase is required")
        for i, ph in enumerate(self.phases, start=1):
            if not ph.duration > 0:
                raise ConfigError(f"phase.{i}.duration_s must be > 0")
        if not (0 < self.dt <= 0.01):
            raise ConfigError(f"sim.dt_s must be in (0, 0.01], got {self.dt}")
        ratio = self.control_dt / self.dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigError("sim.dt_s must divide sim.control_dt_s")
        if self.mixer not in ("baseline", "curvature_aware"):
            raise ConfigError(f"control.mixer must be baseline or curvature_aware, got {self.mixer!r}")
        if not 0 <= self.hold_phase < len(self.phases):
            raise ConfigError(f"metrics.hold_phase out of range 1..{len(self.phases)}")
        if self.attitude_phases is not None and any(
                not 0 <= k < len(self.phases) for k in self.attitude_phases):
            raise ConfigError(f"metrics.attitude_phases out of range 1..{len(self.phases)}")
        self.morph.validate(self.vehicle.geom.beta_physical_limit)

    @property
    def substeps(self) -> int:
        return int(round(self.control_dt / self.dt))

    @property
    def phase_starts(self) -> list[float]:
        starts, t = [], 0.0
        for ph in self.phases:
            starts.append(t)
            t += ph.duration
        return starts

    @property
    def total_time(self) -> float:
        return sum(ph.duration for ph in self.phases)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        from dataclasses import replace
        return replace(self, seed=seed, gust=replace(self.gust, seed=seed))

    def phase_index(self, t: float) -> int:
        starts = self.phase_starts
        for i in range(len(starts) - 1, -1, -1):
            if t >= starts[i] - 1e-12:
                return i
        return 0

    def setpoint_at(self, t: float, start_position=(0.0, 0.0, 0.0)) -> ControlSetpoint:
        """Phase setpoint at scenario time ``t``, without morph commands."""
        k = self.phase_index(t)
        prev = np.asarray(start_position, dtype=float)
        for ph in self.phases[:k]:
            prev = ph.target if ph.mode is Mode.HOLD else np.array([prev[0], prev[1], ph.target[2]])
        ph = self.phases[k]
        target = ph.target.copy()
        if ph.ramp_rate:
            elapsed = t - self.phase_starts[k]
            dz = target[2] - prev[2]
            step = min(abs(dz), ph.ramp_rate * elapsed)
            target[2] = prev[2] + np.sign(dz) * step
        if ph.mode is Mode.HOLD:
            return ControlSetpoint(Mode.HOLD, position_sp=target, yaw_sp=ph.yaw)
        return ControlSetpoint(Mode.ALTITUDE_HOLD, altitude_sp=float(target[2]), yaw_sp=ph.yaw)


def _phases(kv) -> list[Phase]:
    indices = sorted({int(m.group(1)) for k in kv if (m := _PHASE_RE.match(k))})
    if not indices:
        raise ConfigError("missing required key: phase.1.mode")
    if indices != list(range(1, len(indices) + 1)):
        raise ConfigError(f"phase indices must be contiguous from 1, got {indices}")
    phases = []
    for i in indices:
        p = f"phase.{i}."
        if p + "mode" not in kv:
            raise ConfigError(f"missing required key: {p}mode")
        try:
            mode = Mode(kv[p + "mode"].upper())
        except ValueError:
            raise ConfigError(f"{p}mode: expected HOLD or ALTITUDE_HOLD, got {kv[p + 'mode']!r}") from None
        duration = _float(kv, p + "duration_s")
        if mode is Mode.HOLD:
            target = _floats(kv, p + "position_m", 3)
        else:
            target = np.array([0.0, 0.0, _float(kv, p + "altitude_m")])
        ramp = _float(kv, p + "ramp_mps", 0.0) or None
        yaw = np.radians(_float(kv, p + "yaw_deg", 0.0))
        phases.append(Phase(duration, mode, target, ramp, float(yaw)))
    return phases


def check_keys(kv: dict[str, str]) -> None:
    for key in REQUIRED_KEYS:
        if key not in kv:
            raise ConfigError(f"missing required key: {key}")
    unknown = []
    for key in kv:
        m = _PHASE_RE.match(key)
        if m:
            if m.group(2) not in PHASE_FIELDS:
                unknown.append(key)
            continue
        if key.startswith("gains.") and key[6:] in GAIN_SCALARS | GAIN_VECTORS:
            continue
        if key in REQUIRED_KEYS or key in VEHICLE_KEYS or key in GEOM_KEYS or key in OTHER_KEYS:
            continue
        unknown.append(key)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")


def build_scenario(kv: dict[str, str], seed: int | None = None) -> ScenarioConfig:
    check_keys(kv)
    geom_kw = {attr: _float(kv, key) for key, attr in GEOM_KEYS.items() if key in kv}
    geom = ArmGeometry(**geom_kw)
    stiffness = ArmStiffness(_float(kv, "vehicle.ei_eff_nm2", 0.85), geom.La / 1000.0)
    veh_kw = {attr: _float(kv, key) for key, attr in VEHICLE_KEYS.items() if key in kv}
    vehicle = VehicleParams(
        mass=_float(kv, "vehicle.mass_kg"),
        inertia=np.diag(_floats(kv, "vehicle.inertia_kgm2", 3)),
        layouts=x_layout(_float(kv, "vehicle.mount_radius_m", 0.05)),
        geom=geom,
        arm_stiffness=stiffness,
        max_thrust_per_motor=_float(kv, "vehicle.max_thrust_n"),
        **veh_kw,
    )
    gain_kw = {}
    for name in GAIN_SCALARS:
        if f"gains.{name}" in kv:
            gain_kw[name] = _float(kv, f"gains.{name}")
    for name in GAIN_VECTORS:
        if f"gains.{name}" in kv:
            gain_kw[name] = _floats(kv, f"gains.{name}", 3)
    gains = ControllerGains(**gain_kw)

    # an explicit seed overrides both the scenario and gust seeds
    if seed is None:
        seed = int(_float(kv, "seed", DEFAULT_SEED))
        gust_seed = int(_float(kv, "gust.seed", seed))
    else:
        gust_seed = seed
    gust = GustModel(
        mean_wind=tuple(_floats(kv, "gust.mean_mps", 3, (0.0, 0.0, 0.0))),
        gust_std=_float(kv, "gust.std_mps", 0.0),
        correlation_time=_float(kv, "gust.tau_s", 2.0),
        seed=gust_seed,
    )
    release = _float(kv, "morph.release_s", -1.0)
    morph = MorphProfile(
        activation_time=_float(kv, "morph.activation_s", 0.0),
        ramp_rate=_float(kv, "morph.ramp_dps", 5.5),
        targets=_floats(kv, "morph.targets_deg", 4, (0.0, 0.0, 0.0, 0.0)),
        release_time=None if release < 0 else release,
    )
    phases = _phases(kv)
    return ScenarioConfig(
        name=kv["scenario.name"],
        vehicle=vehicle,
        gains=gains,
        gust=gust,
        phases=phases,
        dt=_float(kv, "sim.dt_s", 0.001),
        control_dt=_float(kv, "sim.control_dt_s", 0.004),
        seed=seed,
        morph=morph,
        mixer=kv.get("control.mixer", "baseline"),
        settle_time=_float(kv, "sim.settle_s", 1.0),
        hold_phase=int(_float(kv, "metrics.hold_phase", 2.0 if len(phases) > 1 else 1.0)) - 1,
        attitude_phases=_phase_list(kv, "metrics.attitude_phases"),
    )


def _phase_list(kv, key) -> tuple[int, ...] | None:
    if key not in kv:
        return None
    try:
        return tuple(int(v) - 1 for v in kv[key].split(","))
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated phase numbers, got {kv[key]!r}") from None


def load_scenario(path: str | os.PathLike, seed: int | None = None) -> ScenarioConfig:
    path = resolve_config_path(path)
    text = path.read_text(encoding="utf-8")
    return build_scenario(parse_config_text(text, str(path)), seed=seed)
