"""Cascaded multirotor control in the PX4 style, plus thrust allocation.

Position P -> velocity PID -> thrust vector -> attitude P -> rate PID.
Gains are fixed; they are never scheduled on arm curvature.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import lsq_linear

from .dynamics import ConfigError, RigidBodyState, VehicleParams, quat_conj, quat_multiply, quat_to_rotmat
from .morphology import MorphState, cross3, wrench_matrix


class Mode(str, enum.Enum):
    HOLD = "HOLD"
    ALTITUDE_HOLD = "ALTITUDE_HOLD"


@dataclass
class ControlSetpoint:
    mode: Mode = Mode.HOLD
    position_sp: np.ndarray = field(default_factory=lambda: np.zeros(3))
    altitude_sp: float = 0.0
    yaw_sp: float = 0.0
    morph_command: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def __post_init__(self):
        self.mode = Mode(self.mode)
        self.position_sp = np.asarray(self.position_sp, dtype=float).reshape(3)
        self.morph_command = np.asarray(self.morph_command, dtype=float).reshape(4)

    @property
    def target_altitude(self) -> float:
        return float(self.position_sp[2]) if self.mode is Mode.HOLD else float(self.altitude_sp)


def _vec3(v) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    return np.full(3, float(arr)) if arr.ndim == 0 else arr.reshape(3)


@dataclass
class ControllerGains:
    pos_p_xy: float = 0.95
    pos_p_z: float = 1.0
    vel_p_xy: float = 1.8
    vel_i_xy: float = 0.4
    vel_d_xy: float = 0.2
    vel_p_z: float = 4.0
    vel_i_z: float = 2.0
    vel_d_z: float = 0.0
    vel_int_limit: float = 3.0  # m/s^2
    vel_max_xy: float = 5.0
    vel_max_up: float = 1.5
    vel_max_down: float = 1.0
    tilt_max_deg: float = 35.0
    att_p: np.ndarray = field(default_factory=lambda: np.array([6.5, 6.5, 2.8]))
    rate_p: np.ndarray = field(default_factory=lambda: np.array([18.0, 18.0, 8.0]))
    rate_i: np.ndarray = field(default_factory=lambda: np.array([6.0, 6.0, 3.0]))
    rate_d: np.ndarray = field(default_factory=lambda: np.array([0.3, 0.3, 0.0]))
    rate_int_limit: float = 10.0  # rad/s^2
    rate_max_dps: float = 220.0
    hover_thrust_fraction: float | None = None  # None: derived from the vehicle

    def __post_init__(self):
        for name in ("att_p", "rate_p", "rate_i", "rate_d"):
            setattr(self, name, _vec3(getattr(self, name)))
        scalars = [getattr(self, n) for n in (
            "pos_p_xy", "pos_p_z", "vel_p_xy", "vel_i_xy", "vel_d_xy", "vel_p_z", "vel_i_z",
            "vel_d_z", "vel_int_limit", "vel_max_xy", "vel_max_up", "vel_max_down",
            "tilt_max_deg", "rate_int_limit", "rate_max_dps")]
        arrays = np.concatenate([self.att_p, self.rate_p, self.rate_i, self.rate_d])
        if any(not (math.isfinite(s) and s >= 0) for s in scalars) or np.any(~(arrays >= 0)):
            raise ConfigError("controller gains and limits must be finite and >= 0")
        if self.hover_thrust_fraction is not None and not 0 < self.hover_thrust_fraction < 1:
            raise ConfigError("hover_thrust_fraction must be in (0, 1)")


@dataclass
class ControlDiagnostics:
    mode: Mode
    collective: float
    attitude_sp: np.ndarray
    rate_sp: np.ndarray
    tilt_limited: bool = False
    fault: bool = False


# -- attitude helpers ---------------------------------------------------------

def _rotmat_to_quat(R: np.ndarray) -> np.ndarray:
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    return q / np.linalg.norm(q)


def body_z_to_attitude(body_z: np.ndarray, yaw: float) -> np.ndarray:
    """Attitude quaternion with the given body z axis and heading."""
    z = body_z / np.linalg.norm(body_z)
    y_c = np.array([-math.sin(yaw), math.cos(yaw), 0.0])
    x = cross3(y_c, z)
    n = np.linalg.norm(x)
    x = x / n if n > 1e-9 else np.array([math.cos(yaw), math.sin(yaw), 0.0])
    y = cross3(z, x)
    return _rotmat_to_quat(np.column_stack([x, y, z]))


def _limit_tilt(f: np.ndarray, tilt_max: float) -> tuple[np.ndarray, bool]:
    if f[2] <= 0:
        f = np.array([f[0], f[1], 1e-3])
    horiz = math.hypot(f[0], f[1])
    max_horiz = f[2] * math.tan(tilt_max)
    if horiz > max_horiz:
        scale = max_horiz / horiz
        return np.array([f[0] * scale, f[1] * scale, f[2]]), True
    return f, False


class CascadeController:
    """Stateful cascade; one instance per simulated vehicle."""

    def __init__(self, params: VehicleParams, gains: ControllerGains | None = None,
                 control_dt: float = 0.004):
        self.params = params
        self.gains = gains or ControllerGains()
        self.dt = control_dt
        frac = self.gains.hover_thrust_fraction
        if frac is None:
            frac = params.hover_thrust / params.max_thrust_per_motor
        self.hover_collective = 4.0 * frac * params.max_thrust_per_motor
        self.reset()

    def reset(self) -> None:
        self.vel_int = np.zeros(3)
        self.rate_int = np.zeros(3)
        self.prev_vel_err = None
        self.prev_rate_err = None
        self.last_safe = np.array([0.0, 0.0, self.hover_collective, 0.0, 0.0, 0.0])

    def update(self, state: RigidBodyState, sp: ControlSetpoint) -> tuple[np.ndarray, ControlDiagnostics]:
        """One control period; returns the body wrench demand and diagnostics."""
        vals = np.concatenate([state.position, state.velocity, state.attitude, state.angular_rate,
                               sp.position_sp, [sp.altitude_sp, sp.yaw_sp]])
        if not np.all(np.isfinite(vals)):
            diag = ControlDiagnostics(sp.mode, float(self.last_safe[2]), np.array([1.0, 0, 0, 0]),
                                      np.zeros(3), fault=True)
            return self.last_safe.copy(), diag

        g, dt = self.gains, self.dt
        grav = self.params.gravity

        # position -> velocity setpoint
        vel_sp = np.zeros(3)
        if sp.mode is Mode.HOLD:
            err = sp.position_sp - state.position
            vel_sp[:2] = g.pos_p_xy * err[:2]
            n = np.linalg.norm(vel_sp[:2])
            if n > g.vel_max_xy:
                vel_sp[:2] *= g.vel_max_xy / n
            z_err = err[2]
        else:
            z_err = sp.altitude_sp - state.position[2]
        vel_sp[2] = min(max(g.pos_p_z * z_err, -g.vel_max_down), g.vel_max_up)

        # velocity -> acceleration setpoint
        vel_err = vel_sp - state.velocity
        d_err = np.zeros(3) if self.prev_vel_err is None else (vel_err - self.prev_vel_err) / dt
        self.prev_vel_err = vel_err
        kp = np.array([g.vel_p_xy, g.vel_p_xy, g.vel_p_z])
        ki = np.array([g.vel_i_xy, g.vel_i_xy, g.vel_i_z])
        kd = np.array([g.vel_d_xy, g.vel_d_xy, g.vel_d_z])
        if sp.mode is Mode.ALTITUDE_HOLD:
            # horizontal loops open: level attitude, no horizontal velocity feedback
            kp[:2] = ki[:2] = kd[:2] = 0.0
            self.vel_int[:2] = 0.0
        self.vel_int = np.clip(self.vel_int + ki * vel_err * dt, -g.vel_int_limit, g.vel_int_limit)
        acc_sp = kp * vel_err + self.vel_int + kd * d_err

        # acceleration -> thrust vector (world) -> collective + attitude setpoint
        f = self.hover_collective * (acc_sp / grav + np.array([0.0, 0.0, 1.0]))
        f, tilt_limited = _limit_tilt(f, math.radians(g.tilt_max_deg))
        q_sp = body_z_to_attitude(f, sp.yaw_sp)
        body_z = quat_to_rotmat(state.attitude)[:, 2]
        collective = max(float(f @ body_z), 0.0)

        # attitude -> rate setpoint
        q_err = quat_multiply(quat_conj(state.attitude), q_sp)
        if q_err[0] < 0:
            q_err = -q_err
        rate_sp = 2.0 * g.att_p * q_err[1:]
        rmax = math.radians(g.rate_max_dps)
        rate_sp = np.clip(rate_sp, -rmax, rmax)

        # rate -> torque
        omega = state.angular_rate
        rate_err = rate_sp - omega
        d_rate = np.zeros(3) if self.prev_rate_err is None else (rate_err - self.prev_rate_err) / dt
        self.prev_rate_err = rate_err
        self.rate_int = np.clip(self.rate_int + g.rate_i * rate_err * dt,
                                -g.rate_int_limit, g.rate_int_limit)
        ang_acc = g.rate_p * rate_err + self.rate_int + g.rate_d * d_rate
        I = self.params.inertia
        torque = I @ ang_acc + cross3(omega, I @ omega)

        wrench = np.array([0.0, 0.0, collective, torque[0], torque[1], torque[2]])
        self.last_safe = wrench.copy()
        return wrench, ControlDiagnostics(sp.mode, collective, q_sp, rate_sp, tilt_limited)


def cascade_update(controller: CascadeController, state: RigidBodyState,
                   sp: ControlSetpoint) -> tuple[np.ndarray, ControlDiagnostics]:
    return controller.update(state, sp)


# -- allocation ---------------------------------------------------------------

@dataclass
class MixResult:
    thrusts: np.ndarray
    saturated: np.ndarray  # per motor
    residual: np.ndarray  # demanded minus achieved wrench

    @property
    def any_saturated(self) -> bool:
        return bool(np.any(self.saturated))


REDUCED_ROWS = [2, 3, 4, 5]  # Fz, tau_x, tau_y, tau_z


def _straight_arm_matrix(params: VehicleParams) -> np.ndarray:
    W0 = getattr(params, "_straight_arm_cache", None)
    if W0 is None:
        W0 = wrench_matrix(np.zeros(4), params.layouts, params)
        object.__setattr__(params, "_straight_arm_cache", W0)
    return W0


def baseline_mixer_matrix(params: VehicleParams) -> np.ndarray:
    """Inverse of the straight-arm (Fz, tau) allocation, 4x4."""
    return np.linalg.inv(_straight_arm_matrix(params)[REDUCED_ROWS])


def mix_baseline(wrench_demand: Sequence[float], params: VehicleParams,
                 inverse: np.ndarray | None = None) -> MixResult:
    """Stock X-quad mixer: ignores arm curvature and lateral force demand."""
    w = np.asarray(wrench_demand, dtype=float)
    if inverse is None:
        inverse = baseline_mixer_matrix(params)
    raw = inverse @ w[REDUCED_ROWS]
    tmax = params.max_thrust_per_motor
    thrusts = np.clip(raw, 0.0, tmax)
    sat = (raw < 0.0) | (raw > tmax)
    achieved = _straight_arm_matrix(params) @ thrusts
    residual = w - achieved
    residual[:2] = 0.0
    return MixResult(thrusts, sat, residual)


def mix_curvature_aware(wrench_demand: Sequence[float], morph: MorphState | Sequence[float],
                        params: VehicleParams, damping: float = 1e-6) -> MixResult:
    """Damped least-squares allocation over the full 6x4 wrench matrix."""
    w = np.asarray(wrench_demand, dtype=float)
    W = wrench_matrix(morph, params.layouts, params)
    U, s, Vt = np.linalg.svd(W, full_matrices=False)
    lam = damping * s[0]
    raw = Vt.T @ ((s / (s * s + lam * lam)) * (U.T @ w))
    tmax = params.max_thrust_per_motor
    sat = (raw < 0.0) | (raw > tmax)
    if np.any(sat):
        # bounded least squares keeps the residual minimal under saturation
        raw = lsq_linear(W, w, bounds=(0.0, tmax), method="bvls").x
    thrusts = np.clip(raw, 0.0, tmax)
    return MixResult(thrusts, sat, w - W @ thrusts)


# -- morph schedule -------------------------------------------------------------

@dataclass
class MorphProfile:
    """Piecewise-linear curvature commands: ramp up, hold, ramp back to zero."""

    activation_time: float = 0.0
    ramp_rate: float = 5.5  # deg/s
    targets: np.ndarray = field(default_factory=lambda: np.zeros(4))
    release_time: float | None = None

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=float).reshape(4)
        if not self.ramp_rate > 0:
            raise ConfigError("morph ramp rate must be > 0")
        if self.activation_time < 0:
            raise ConfigError("morph activation time must be >= 0")
        if self.release_time is not None and self.release_time < self.activation_time:
            raise ConfigError("morph release time precedes activation")

    def validate(self, limit: float) -> None:
        if np.any(~np.isfinite(self.targets)) or np.any(np.abs(self.targets) > limit):
            raise ConfigError(f"morph targets {self.targets.tolist()} exceed +/-{limit} deg")

    @property
    def active(self) -> bool:
        return bool(np.any(self.targets != 0.0))


def morph_schedule(profile: MorphProfile, t: float, limit: float | None = None) -> np.ndarray:
    if limit is not None:
        profile.validate(limit)
    if t < 0:
        raise ValueError("t must be >= 0")
    mag = np.abs(profile.targets)

    def level(tt):
        return np.minimum(mag, max(0.0, tt - profile.activation_time) * profile.ramp_rate)

    if profile.release_time is None or t <= profile.release_time:
        lv = level(t)
    else:
        lv = np.maximum(0.0, level(profile.release_time) - (t - profile.release_time) * profile.ramp_rate)
    return np.sign(profile.targets) * lv
