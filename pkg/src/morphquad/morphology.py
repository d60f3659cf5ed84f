"""Arm curvature to propeller pose, wrench matrices and actuation rank.

Body frame is FLU (x forward, y left, z up).  Positions are in metres,
curvatures in degrees unless a name says otherwise.  A positive effective
curvature drops the arm tip and tilts the thrust axis radially outward.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .curvature_map import ArmGeometry

EZ = np.array([0.0, 0.0, 1.0])
X_AZIMUTHS = (45.0, 135.0, 225.0, 315.0)
X_SPINS = (1, -1, 1, -1)


@dataclass(frozen=True, eq=False)
class ArmLayout:
    """Where an arm is mounted and how it bends.

    ``spin_direction`` is the sign of the rotor's reaction torque about its
    thrust axis.
    """

    arm_index: int
    mount_position: np.ndarray
    azimuth: float
    bend_plane_sign: int = 1
    spin_direction: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mount_position", np.asarray(self.mount_position, dtype=float))
        if self.bend_plane_sign not in (1, -1) or self.spin_direction not in (1, -1):
            raise ValueError("bend_plane_sign and spin_direction must be +1 or -1")

    @property
    def radial(self) -> np.ndarray:
        az = math.radians(self.azimuth)
        return np.array([math.cos(az), math.sin(az), 0.0])


def x_layout(mount_radius: float = 0.05) -> tuple[ArmLayout, ...]:
    """Standard X quad: arms at 45/135/225/315 deg, diagonal pairs share spin."""
    layouts = []
    for i, (az, spin) in enumerate(zip(X_AZIMUTHS, X_SPINS)):
        a = math.radians(az)
        mount = mount_radius * np.array([math.cos(a), math.sin(a), 0.0])
        layouts.append(ArmLayout(i, mount, az, 1, spin))
    return tuple(layouts)


@dataclass
class MorphState:
    betas: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=float).reshape(4)

    def validate(self, limit: float) -> None:
        if not np.all(np.isfinite(self.betas)) or np.any(np.abs(self.betas) > limit + 1e-12):
            raise ValueError(f"arm curvatures {self.betas} exceed +/-{limit} deg")


@dataclass(frozen=True, eq=False)
class PropellerPose:
    position: np.ndarray
    thrust_axis: np.ndarray


@dataclass(frozen=True)
class ArmStiffness:
    ei_eff: float = 0.85  # lumped flexural rigidity, N m^2
    length: float = 0.1095  # m

    def __post_init__(self):
        if not (math.isfinite(self.ei_eff) and self.ei_eff > 0):
            raise ValueError(f"effective flexural rigidity must be > 0, got {self.ei_eff}")
        if not (math.isfinite(self.length) and self.length > 0):
            raise ValueError(f"arm length must be > 0, got {self.length}")


def cross3(a, b) -> np.ndarray:
    # np.cross has large per-call overhead on 3-vectors
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


# sin(x)/x, (cos(x)-1)/x and their derivatives, series-expanded near zero
def _sinc(x: float) -> float:
    if abs(x) < 1e-4:
        return 1.0 - x * x / 6.0 + x ** 4 / 120.0
    return math.sin(x) / x


def _cosm(x: float) -> float:
    if abs(x) < 1e-4:
        return -x / 2.0 + x ** 3 / 24.0
    return (math.cos(x) - 1.0) / x


def _dsinc(x: float) -> float:
    if abs(x) < 1e-4:
        return -x / 3.0 + x ** 3 / 30.0
    return (x * math.cos(x) - math.sin(x)) / (x * x)


def _dcosm(x: float) -> float:
    if abs(x) < 1e-4:
        return -0.5 + x * x / 8.0
    return (1.0 - math.cos(x) - x * math.sin(x)) / (x * x)


def _check_beta(beta: float, geom: ArmGeometry) -> None:
    if not math.isfinite(beta) or abs(beta) > geom.beta_physical_limit + 1e-12:
        raise ValueError(f"beta={beta} exceeds +/-{geom.beta_physical_limit} deg")


def arm_arc(beta: float, layout: ArmLayout, geom: ArmGeometry, n_points: int = 21,
            check: bool = True) -> np.ndarray:
    """Points along the constant-curvature arm, shape (n_points, 3)."""
    if check:
        _check_beta(beta, geom)
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    la = geom.La / 1000.0
    u = layout.radial
    total = math.radians(layout.bend_plane_sign * beta)
    pts = np.empty((n_points, 3))
    for k, s in enumerate(np.linspace(0.0, 1.0, n_points)):
        th = total * s
        pts[k] = layout.mount_position + la * s * (_sinc(th) * u + _cosm(th) * EZ)
    return pts


def propeller_pose(beta: float, layout: ArmLayout, geom: ArmGeometry) -> PropellerPose:
    _check_beta(beta, geom)
    th = math.radians(layout.bend_plane_sign * beta)
    u = layout.radial
    la = geom.La / 1000.0
    pos = layout.mount_position + la * (_sinc(th) * u + _cosm(th) * EZ)
    axis = math.sin(th) * u + math.cos(th) * EZ
    return PropellerPose(pos, axis)


def tilt_efficiency(beta: float, geom: ArmGeometry, at_limit: float = 0.9) -> float:
    """Thrust derating: 1 up to the efficiency knee, linear to ``at_limit`` at the stop."""
    knee, stop = geom.beta_efficiency_knee, geom.beta_physical_limit
    b = abs(beta)
    if b <= knee or stop == knee:
        return 1.0
    return 1.0 - (1.0 - at_limit) * (b - knee) / (stop - knee)


def _dtilt_efficiency_rad(beta: float, geom: ArmGeometry, at_limit: float = 0.9) -> float:
    knee, stop = geom.beta_efficiency_knee, geom.beta_physical_limit
    if abs(beta) <= knee or stop == knee:
        return 0.0
    return -math.copysign((1.0 - at_limit) / (stop - knee), beta) * (180.0 / math.pi)


def wrench_matrix(morph: MorphState | Sequence[float], layouts: Sequence[ArmLayout], params) -> np.ndarray:
    """6x4 map from rotor thrusts to body wrench [force; torque].

    ``params`` needs ``geom``, ``k_drag`` and optionally ``efficiency_at_limit``.
    """
    betas = morph.betas if isinstance(morph, MorphState) else np.asarray(morph, dtype=float)
    at_limit = getattr(params, "efficiency_at_limit", 0.9)
    W = np.empty((6, 4))
    for i, lay in enumerate(layouts):
        pose = propeller_pose(betas[i], lay, params.geom)
        eta = tilt_efficiency(betas[i], params.geom, at_limit)
        a = pose.thrust_axis
        W[:3, i] = eta * a
        W[3:, i] = eta * (cross3(pose.position, a) + lay.spin_direction * params.k_drag * a)
    return W


def actuation_jacobian(morph: MorphState | Sequence[float], thrusts: Sequence[float],
                       layouts: Sequence[ArmLayout], params) -> np.ndarray:
    """Jacobian of the body wrench w.r.t. (T1..T4, beta1..beta4).

    Curvature columns are per radian.
    """
    betas = morph.betas if isinstance(morph, MorphState) else np.asarray(morph, dtype=float)
    thrusts = np.asarray(thrusts, dtype=float)
    if np.any(thrusts < 0):
        raise ValueError("thrusts must be non-negative")
    geom = params.geom
    at_limit = getattr(params, "efficiency_at_limit", 0.9)
    la = geom.La / 1000.0
    J = np.empty((6, 8))
    J[:, :4] = wrench_matrix(betas, layouts, params)
    for i, lay in enumerate(layouts):
        sgn = lay.bend_plane_sign
        th = math.radians(sgn * betas[i])
        u = lay.radial
        pos = lay.mount_position + la * (_sinc(th) * u + _cosm(th) * EZ)
        axis = math.sin(th) * u + math.cos(th) * EZ
        dpos = sgn * la * (_dsinc(th) * u + _dcosm(th) * EZ)
        daxis = sgn * (math.cos(th) * u - math.sin(th) * EZ)
        eta = tilt_efficiency(betas[i], geom, at_limit)
        deta = _dtilt_efficiency_rad(betas[i], geom, at_limit)
        k = lay.spin_direction * params.k_drag
        torque = cross3(pos, axis) + k * axis
        dtorque = cross3(dpos, axis) + cross3(pos, daxis) + k * daxis
        J[:3, 4 + i] = thrusts[i] * (deta * axis + eta * daxis)
        J[3:, 4 + i] = thrusts[i] * (deta * torque + eta * dtorque)
    return J


def numerical_rank(M: np.ndarray, tol: float = 1e-9) -> int:
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > tol))


def passive_deflection(tip_load: float, arm: ArmStiffness) -> float:
    """Cantilever tip rotation (deg) under a transverse tip load (N)."""
    if tip_load < 0:
        raise ValueError(f"tip load must be >= 0, got {tip_load}")
    if not arm.ei_eff > 0:
        raise ValueError("effective flexural rigidity must be > 0")
    return math.degrees(tip_load * arm.length ** 2 / (2.0 * arm.ei_eff))
