import math

import numpy as np
import pytest

from morphquad.dynamics import (ConfigError, RigidBodyState, VehicleParams, hover_state,
                                quat_from_euler, quat_to_rotmat)
from morphquad.flight_control import (CascadeController, ControllerGains, ControlSetpoint, Mode,
                                      MorphProfile, baseline_mixer_matrix, body_z_to_attitude,
                                      mix_baseline, mix_curvature_aware, morph_schedule)
from morphquad.morphology import wrench_matrix

PARAMS = VehicleParams()
MG = PARAMS.mass * PARAMS.gravity
FORWARD = np.array([22.0, -22.0, -22.0, 22.0])


def hold(x=0.0, y=0.0, z=4.0):
    return ControlSetpoint(Mode.HOLD, position_sp=[x, y, z])


def test_at_setpoint_outputs_weight():
    ctrl = CascadeController(PARAMS)
    w, diag = ctrl.update(hover_state(PARAMS, (0, 0, 4)), hold())
    assert np.allclose(w, [0, 0, MG, 0, 0, 0], atol=1e-12)
    assert not diag.fault and not diag.tilt_limited


def test_forward_error_tilts_forward():
    ctrl = CascadeController(PARAMS)
    _, diag = ctrl.update(hover_state(PARAMS, (0, 0, 4)), hold(x=2.0))
    body_z = quat_to_rotmat(diag.attitude_sp)[:, 2]
    assert body_z[0] > 0.05 and abs(body_z[1]) < 1e-12
    # tilting forward about +y in FLU
    assert diag.rate_sp[1] > 0


def test_altitude_error_changes_collective():
    ctrl = CascadeController(PARAMS)
    w_up, _ = ctrl.update(hover_state(PARAMS, (0, 0, 3)), hold(z=4.0))
    ctrl.reset()
    w_dn, _ = ctrl.update(hover_state(PARAMS, (0, 0, 5)), hold(z=4.0))
    assert w_up[2] > MG > w_dn[2]


def test_roll_rate_error_gives_restoring_torque():
    ctrl = CascadeController(PARAMS)
    s = hover_state(PARAMS, (0, 0, 4))
    s.angular_rate = np.array([1.0, 0.0, 0.0])
    w, _ = ctrl.update(s, hold())
    assert w[3] < 0


def test_tilt_limit():
    ctrl = CascadeController(PARAMS, ControllerGains(tilt_max_deg=20.0))
    s = hover_state(PARAMS, (0, 0, 4))
    s.velocity = np.array([-10.0, 0.0, 0.0])
    _, diag = ctrl.update(s, hold(x=100.0))
    assert diag.tilt_limited
    body_z = quat_to_rotmat(diag.attitude_sp)[:, 2]
    assert math.degrees(math.acos(body_z[2])) == pytest.approx(20.0, abs=1e-9)


def test_integrator_anti_windup():
    gains = ControllerGains()
    ctrl = CascadeController(PARAMS, gains)
    s = hover_state(PARAMS, (0, 0, 0))
    for _ in range(20000):
        ctrl.update(s, hold(x=50.0, z=50.0))
    assert np.all(np.abs(ctrl.vel_int) <= gains.vel_int_limit)
    assert np.all(np.abs(ctrl.rate_int) <= gains.rate_int_limit)
    assert np.abs(ctrl.vel_int).max() == pytest.approx(gains.vel_int_limit)


def test_altitude_hold_ignores_horizontal_state():
    ctrl = CascadeController(PARAMS)
    s = hover_state(PARAMS, (30.0, -12.0, 4.0))
    s.velocity = np.array([4.0, 1.0, 0.0])
    sp = ControlSetpoint(Mode.ALTITUDE_HOLD, altitude_sp=4.0)
    for _ in range(50):
        w, diag = ctrl.update(s, sp)
    assert np.allclose(quat_to_rotmat(diag.attitude_sp)[:, 2], [0, 0, 1], atol=1e-12)
    assert np.allclose(ctrl.vel_int[:2], 0.0)
    assert np.allclose(w[3:], 0.0, atol=1e-12)


def test_non_finite_input_returns_last_safe():
    ctrl = CascadeController(PARAMS)
    s = hover_state(PARAMS, (0, 0, 4))
    good, _ = ctrl.update(s, hold())
    s.position = np.array([np.nan, 0.0, 4.0])
    w, diag = ctrl.update(s, hold())
    assert diag.fault
    assert np.array_equal(w, good)


def test_body_z_to_attitude_yaw():
    q = body_z_to_attitude(np.array([0.0, 0.0, 1.0]), math.pi / 2)
    assert np.allclose(q, quat_from_euler(0, 0, math.pi / 2))


def test_baseline_mixer_round_trip():
    w = np.array([0.0, 0.0, MG, 0.01, -0.02, 0.003])
    mix = mix_baseline(w, PARAMS)
    assert not mix.any_saturated
    W0 = wrench_matrix(np.zeros(4), PARAMS.layouts, PARAMS)
    assert np.allclose((W0 @ mix.thrusts)[2:], w[2:], atol=1e-12)
    assert np.allclose(mix.residual, 0.0, atol=1e-12)
    assert np.allclose(baseline_mixer_matrix(PARAMS) @ W0[[2, 3, 4, 5]], np.eye(4))


def test_baseline_mixer_saturates():
    mix = mix_baseline([0, 0, 40.0, 0, 0, 0], PARAMS)
    assert mix.saturated.all()
    assert np.allclose(mix.thrusts, PARAMS.max_thrust_per_motor)
    assert mix.residual[2] == pytest.approx(40.0 - 24.0)


def test_baseline_mixer_ignores_curvature():
    # same thrusts whatever the arms are doing, so morph adds lateral force
    a = mix_baseline([0, 0, MG, 0, 0, 0], PARAMS).thrusts
    assert np.allclose(a, PARAMS.hover_thrust)
    W = wrench_matrix(FORWARD, PARAMS.layouts, PARAMS)
    assert (W @ a)[0] > 0.5


def test_curvature_aware_mixer_exact_when_feasible():
    W = wrench_matrix(FORWARD, PARAMS.layouts, PARAMS)
    target = W @ np.array([2.3, 2.5, 2.4, 2.6])
    mix = mix_curvature_aware(target, FORWARD, PARAMS)
    assert not mix.any_saturated
    assert np.linalg.norm(mix.residual) < 1e-9


def test_curvature_aware_mixer_bounded_fallback():
    W = wrench_matrix(FORWARD, PARAMS.layouts, PARAMS)
    demand = np.array([0.0, 0.0, 30.0, 0.5, 0.0, 0.0])
    mix = mix_curvature_aware(demand, FORWARD, PARAMS)
    assert mix.any_saturated
    assert np.all((mix.thrusts >= 0) & (mix.thrusts <= PARAMS.max_thrust_per_motor))
    # no worse than clipping the unconstrained solution
    clipped = np.clip(np.linalg.pinv(W) @ demand, 0, PARAMS.max_thrust_per_motor)
    assert np.linalg.norm(mix.residual) <= np.linalg.norm(demand - W @ clipped) + 1e-12


def test_morph_schedule_profile():
    prof = MorphProfile(activation_time=10.0, ramp_rate=5.5, targets=FORWARD, release_time=24.0)
    assert np.allclose(morph_schedule(prof, 5.0), 0.0)
    assert np.allclose(morph_schedule(prof, 12.0), [11.0, -11.0, -11.0, 11.0])
    assert np.allclose(morph_schedule(prof, 14.0), FORWARD)
    assert np.allclose(morph_schedule(prof, 20.0), FORWARD)
    assert np.allclose(morph_schedule(prof, 26.0), [11.0, -11.0, -11.0, 11.0])
    assert np.allclose(morph_schedule(prof, 40.0), 0.0)


def test_morph_schedule_release_during_ramp():
    prof = MorphProfile(activation_time=0.0, ramp_rate=5.5, targets=FORWARD, release_time=2.0)
    assert np.allclose(morph_schedule(prof, 3.0), [5.5, -5.5, -5.5, 5.5])


def test_morph_profile_validation():
    with pytest.raises(ConfigError):
        MorphProfile(ramp_rate=0.0)
    with pytest.raises(ConfigError):
        MorphProfile(activation_time=5.0, release_time=1.0)
    with pytest.raises(ConfigError):
        morph_schedule(MorphProfile(targets=[30.0, 0, 0, 0]), 1.0, limit=28.0)
    assert not MorphProfile().active


def test_gains_never_depend_on_curvature():
    ctrl = CascadeController(PARAMS)
    s = hover_state(PARAMS, (0, 0, 4))
    s.angular_rate = np.array([0.3, -0.2, 0.1])
    a, _ = ctrl.update(s, hold())
    ctrl.reset()
    s.morph.betas = FORWARD.copy()
    sp = hold()
    sp.morph_command = FORWARD
    b, _ = ctrl.update(s, sp)
    assert np.array_equal(a, b)
