"""6-DOF rigid-body dynamics of the morphing quadrotor.

World frame is z-up, body frame FLU.  Attitude quaternions are (w, x, y, z)
and rotate body vectors into the world frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .curvature_map import ArmGeometry
from .morphology import ArmLayout, ArmStiffness, MorphState, cross3, wrench_matrix, x_layout

GRAVITY = 9.81


class ConfigError(ValueError):
    pass


class SimulationFault(RuntimeError):
    """Non-finite state during integration; ``record`` holds the last good state."""

    def __init__(self, message: str, record: dict | None = None):
        super().__init__(message)
        self.record = record or {}


@dataclass(frozen=True, eq=False)
class VehicleParams:
    mass: float = 0.980
    inertia: np.ndarray = field(default_factory=lambda: np.diag([0.008, 0.008, 0.014]))
    layouts: tuple[ArmLayout, ...] = field(default_factory=x_layout)
    geom: ArmGeometry = field(default_factory=ArmGeometry)
    arm_stiffness: ArmStiffness = field(default_factory=ArmStiffness)
    motor_time_constant: float = 0.03
    k_drag: float = 0.016
    max_thrust_per_motor: float = 6.0
    drag_coeff: float = 0.25  # linear translational drag, N s/m
    gravity: float = GRAVITY
    beta_rate_limit: float = 30.0  # deg/s
    beta_time_constant: float = 0.1
    efficiency_at_limit: float = 0.9

    def __post_init__(self):
        inertia = np.asarray(self.inertia, dtype=float)
        object.__setattr__(self, "inertia", inertia)
        object.__setattr__(self, "inertia_inv", np.linalg.inv(inertia) if inertia.shape == (3, 3) else None)
        if not self.mass > 0:
            raise ConfigError(f"mass must be > 0, got {self.mass}")
        if inertia.shape != (3, 3) or not np.allclose(inertia, inertia.T):
            raise ConfigError("inertia must be a symmetric 3x3 matrix")
        if np.any(np.linalg.eigvalsh(inertia) <= 0):
            raise ConfigError("inertia must be positive definite")
        if len(self.layouts) != 4:
            raise ConfigError("exactly four arm layouts required")
        if not 4 * self.max_thrust_per_motor > self.mass * self.gravity:
            raise ConfigError("max thrust cannot lift the vehicle")
        for name in ("motor_time_constant", "beta_rate_limit", "beta_time_constant"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.k_drag < 0 or self.drag_coeff < 0 or self.gravity < 0:
            raise ConfigError("k_drag, drag_coeff and gravity must be >= 0")

    @property
    def hover_thrust(self) -> float:
        """Per-motor thrust for level hover with straight arms."""
        return self.mass * self.gravity / 4.0


@dataclass
class RigidBodyState:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    attitude: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    angular_rate: np.ndarray = field(default_factory=lambda: np.zeros(3))
    motor_thrusts: np.ndarray = field(default_factory=lambda: np.zeros(4))
    morph: MorphState = field(default_factory=MorphState)
    time: float = 0.0

    def __post_init__(self):
        for name in ("position", "velocity", "attitude", "angular_rate", "motor_thrusts"):
            setattr(self, name, np.array(getattr(self, name), dtype=float))

    def copy(self) -> "RigidBodyState":
        return RigidBodyState(self.position, self.velocity, self.attitude, self.angular_rate,
                              self.motor_thrusts, MorphState(self.morph.betas.copy()), self.time)

    def as_record(self) -> dict:
        return {
            "time": self.time,
            "position": self.position.tolist(),
            "velocity": self.velocity.tolist(),
            "attitude": self.attitude.tolist(),
            "angular_rate": self.angular_rate.tolist(),
            "motor_thrusts": self.motor_thrusts.tolist(),
            "betas": self.morph.betas.tolist(),
        }


def hover_state(params: VehicleParams, position=(0.0, 0.0, 0.0)) -> RigidBodyState:
    return RigidBodyState(position=position, motor_thrusts=np.full(4, params.hover_thrust))


@dataclass
class Controls:
    motor_commands: np.ndarray
    beta_commands: np.ndarray = field(default_factory=lambda: np.zeros(4))


# -- quaternion helpers -------------------------------------------------------

def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_multiply(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    pw, px, py, pz = p
    qw, qx, qy, qz = q
    return np.array([
        pw * qw - px * qx - py * qy - pz * qz,
        pw * qx + px * qw + py * qz - pz * qy,
        pw * qy - px * qz + py * qw + pz * qx,
        pw * qz + px * qy - py * qx + pz * qw,
    ])


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    cr, sr = math.cos(roll / 2), math.sin(roll / 2)
    cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
    cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
    return np.array([
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ])


def quat_to_euler(q: np.ndarray) -> tuple[float, float, float]:
    """(roll, pitch, yaw) in radians, ZYX convention."""
    w, x, y, z = q
    roll = math.atan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y))
    pitch = math.asin(max(-1.0, min(1.0, 2 * (w * y - z * x))))
    yaw = math.atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z))
    return roll, pitch, yaw


# -- forces -------------------------------------------------------------------

def body_wrench(state: RigidBodyState, params: VehicleParams) -> np.ndarray:
    """Rotor wrench in the body frame from current thrusts and curvatures."""
    return wrench_matrix(state.morph, params.layouts, params) @ state.motor_thrusts


def net_wrench(state: RigidBodyState, params: VehicleParams, wind=(0.0, 0.0, 0.0)) -> np.ndarray:
    """[force (world, N); torque (body, N m)] acting on the vehicle."""
    w = body_wrench(state, params)
    return _net_from_body(w, state.attitude, state.velocity, params, np.asarray(wind, dtype=float))


def _net_from_body(w_body, q, v, params, wind):
    force = quat_to_rotmat(q) @ w_body[:3]
    force[2] -= params.mass * params.gravity
    force += params.drag_coeff * (wind - v)
    return np.concatenate([force, w_body[3:]])


def _derivative(y: np.ndarray, w_body: np.ndarray, wind: np.ndarray, params: VehicleParams) -> np.ndarray:
    v = y[3:6]
    q = y[6:10]
    omega = y[10:13]
    net = _net_from_body(w_body, q, v, params, wind)
    dy = np.empty(13)
    dy[0:3] = v
    dy[3:6] = net[:3] / params.mass
    dy[6:10] = 0.5 * quat_multiply(q, np.array([0.0, omega[0], omega[1], omega[2]]))
    I = params.inertia
    dy[10:13] = params.inertia_inv @ (net[3:] - cross3(omega, I @ omega))
    return dy


def _cached_wrench_matrix(params: VehicleParams, betas: np.ndarray) -> np.ndarray:
    key = tuple(betas.tolist())
    cached = getattr(params, "_wrench_cache", None)
    if cached is not None and cached[0] == key:
        return cached[1]
    W = wrench_matrix(betas, params.layouts, params)
    object.__setattr__(params, "_wrench_cache", (key, W))
    return W


def _track_betas(betas, commands, params, dt):
    limit = params.geom.beta_physical_limit
    cmd = np.clip(np.asarray(commands, dtype=float), -limit, limit)
    delta = (cmd - betas) * (1.0 - math.exp(-dt / params.beta_time_constant))
    max_step = params.beta_rate_limit * dt
    return betas + np.clip(delta, -max_step, max_step)


def step(state: RigidBodyState, params: VehicleParams, controls: Controls,
         gust: "GustProcess | None", dt: float) -> RigidBodyState:
    """Advance one fixed step.

    Actuators (motor lag, curvature tracking) update first and are held over
    the step; the rigid body is integrated with classical RK4.
    """
    if not (0.0 < dt <= 0.01):
        raise ConfigError(f"dt must be in (0, 0.01] s, got {dt}")
    cmd = np.clip(np.asarray(controls.motor_commands, dtype=float), 0.0, params.max_thrust_per_motor)
    lag = 1.0 - math.exp(-dt / params.motor_time_constant)
    thrusts = np.clip(state.motor_thrusts + (cmd - state.motor_thrusts) * lag,
                      0.0, params.max_thrust_per_motor)
    betas = _track_betas(state.morph.betas, controls.beta_commands, params, dt)
    wind = gust.advance(dt) if gust is not None else np.zeros(3)

    morph = MorphState(betas)
    w_body = _cached_wrench_matrix(params, betas) @ thrusts
    y = np.concatenate([state.position, state.velocity, state.attitude, state.angular_rate])
    k1 = _derivative(y, w_body, wind, params)
    k2 = _derivative(y + 0.5 * dt * k1, w_body, wind, params)
    k3 = _derivative(y + 0.5 * dt * k2, w_body, wind, params)
    k4 = _derivative(y + dt * k3, w_body, wind, params)
    y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    if not np.all(np.isfinite(y)):
        raise SimulationFault(f"non-finite state at t={state.time + dt:.6f} s", state.as_record())
    q = y[6:10]
    q = q / np.linalg.norm(q)
    return RigidBodyState(y[0:3], y[3:6], q, y[10:13], thrusts, morph, state.time + dt)


# -- gusts ----------------------------------------------------------------------

@dataclass(frozen=True)
class GustModel:
    mean_wind: tuple[float, float, float] = (0.0, 0.0, 0.0)
    gust_std: float = 1.5
    correlation_time: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if not self.gust_std >= 0:
            raise ConfigError(f"gust_std must be >= 0, got {self.gust_std}")
        if not self.correlation_time > 0:
            raise ConfigError(f"correlation_time must be > 0, got {self.correlation_time}")


def sample_gust(model: GustModel, prev: np.ndarray, dt: float, rng: np.random.Generator) -> np.ndarray:
    """One Euler step of an Ornstein-Uhlenbeck wind process."""
    mean = np.asarray(model.mean_wind, dtype=float)
    tau = model.correlation_time
    xi = rng.standard_normal(3)
    return prev + (mean - prev) * (dt / tau) + model.gust_std * math.sqrt(2.0 * dt / tau) * xi


class GustProcess:
    """Seeded wind state advanced alongside the simulation."""

    def __init__(self, model: GustModel, initial: Sequence[float] | None = None):
        self.model = model
        self.rng = np.random.default_rng(model.seed)
        self.current = np.array(model.mean_wind if initial is None else initial, dtype=float)

    def advance(self, dt: float) -> np.ndarray:
        self.current = sample_gust(self.model, self.current, dt, self.rng)
        return self.current


def with_overrides(params: VehicleParams, **kw) -> VehicleParams:
    return replace(params, **kw)
