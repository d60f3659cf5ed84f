import math

import numpy as np
import pytest

from morphquad.dynamics import (ConfigError, Controls, GustModel, GustProcess, RigidBodyState,
                                SimulationFault, VehicleParams, hover_state, net_wrench,
                                quat_from_euler, quat_multiply, quat_to_euler, quat_to_rotmat,
                                sample_gust, step)
from morphquad.morphology import MorphState

ZERO = Controls(np.zeros(4))


def run(state, params, controls, dt, n, gust=None):
    for _ in range(n):
        state = step(state, params, controls, gust, dt)
    return state


def test_free_fall_analytic():
    params = VehicleParams(drag_coeff=0.0)
    s = run(RigidBodyState(position=[0, 0, 10]), params, ZERO, 0.001, 1000)
    assert s.time == pytest.approx(1.0)
    assert abs(s.position[2] - (10 - 0.5 * params.gravity)) < 1e-8
    assert abs(s.velocity[2] + params.gravity) < 1e-8
    assert np.all(s.position[:2] == 0.0)


def test_hover_fixed_point():
    params = VehicleParams()
    hover = Controls(np.full(4, params.hover_thrust))
    s = run(hover_state(params, (0, 0, 4)), params, hover, 0.001, 15000)
    assert np.allclose(s.position, [0, 0, 4], atol=1e-9)
    assert np.allclose(s.velocity, 0, atol=1e-9)
    assert np.allclose(s.attitude, [1, 0, 0, 0], atol=1e-12)


def _drag_error(dt):
    params = VehicleParams(drag_coeff=20.0)
    v0 = np.array([3.0, -1.0, 2.0])
    s = run(RigidBodyState(velocity=v0), params, ZERO, dt, int(round(1.0 / dt)))
    k = params.drag_coeff / params.mass
    g = np.array([0, 0, -params.gravity])
    v_inf = g / k
    x = v_inf * 1.0 + (v0 - v_inf) * (1 - math.exp(-k)) / k
    return np.linalg.norm(s.position - x)


def test_rk4_fourth_order():
    ratio = _drag_error(0.01) / _drag_error(0.005)
    assert 16 * 0.8 <= ratio <= 16 * 1.2


def _force_free():
    return VehicleParams(gravity=0.0, drag_coeff=0.0, inertia=np.diag([0.008, 0.011, 0.014]))


def test_linear_momentum_conserved_without_forces():
    params = _force_free()
    s0 = RigidBodyState(velocity=[1.0, -2.0, 0.5], angular_rate=[3.0, 0.1, -1.0])
    s = run(s0, params, ZERO, 0.001, 2000)
    assert np.max(np.abs(params.mass * (s.velocity - s0.velocity))) < 1e-10


def test_angular_momentum_and_energy_torque_free():
    params = _force_free()
    s0 = RigidBodyState(angular_rate=[3.0, 0.1, -1.0])

    def momentum(s):
        return quat_to_rotmat(s.attitude) @ (params.inertia @ s.angular_rate)

    def energy(s):
        return 0.5 * s.angular_rate @ params.inertia @ s.angular_rate

    s = run(s0, params, ZERO, 0.001, 2000)
    assert np.max(np.abs(momentum(s) - momentum(s0))) < 1e-10
    assert abs(energy(s) - energy(s0)) / energy(s0) < 1e-10


def test_quaternion_stays_unit():
    params = VehicleParams()
    s = RigidBodyState(position=[0, 0, 5], angular_rate=[5.0, -3.0, 2.0],
                       motor_thrusts=np.full(4, params.hover_thrust))
    cmd = Controls(np.array([3.0, 2.0, 2.5, 2.2]))
    for _ in range(500):
        s = step(s, params, cmd, None, 0.002)
        assert abs(np.linalg.norm(s.attitude) - 1.0) < 1e-14


def test_motor_lag_and_clamp():
    params = VehicleParams()
    s = step(RigidBodyState(), params, Controls(np.array([10.0, -1.0, 3.0, 0.0])), None, 0.01)
    lag = 1 - math.exp(-0.01 / params.motor_time_constant)
    assert s.motor_thrusts[0] == pytest.approx(6.0 * lag)
    assert s.motor_thrusts[1] == 0.0
    assert s.motor_thrusts[2] == pytest.approx(3.0 * lag)


def test_curvature_rate_limited():
    params = VehicleParams()
    s = RigidBodyState()
    cmd = Controls(np.zeros(4), np.array([22.0, -22.0, 40.0, 0.0]))
    s = run(s, params, cmd, 0.001, 100)
    # 30 deg/s over 0.1 s
    assert np.allclose(s.morph.betas[:3], [3.0, -3.0, 3.0])
    s = run(s, params, cmd, 0.001, 5000)
    assert s.morph.betas[0] == pytest.approx(22.0, abs=1e-9)
    assert s.morph.betas[2] == pytest.approx(28.0, abs=1e-9)


def test_bad_dt():
    with pytest.raises(ConfigError):
        step(RigidBodyState(), VehicleParams(), ZERO, None, 0.02)


def test_non_finite_raises_fault():
    params = VehicleParams()
    s = RigidBodyState(velocity=[np.nan, 0, 0])
    with pytest.raises(SimulationFault) as info:
        step(s, params, ZERO, None, 0.001)
    assert "t=" in str(info.value)
    assert info.value.record["time"] == 0.0


def test_vehicle_validation():
    with pytest.raises(ConfigError):
        VehicleParams(mass=-1.0)
    with pytest.raises(ConfigError):
        VehicleParams(inertia=np.diag([0.01, 0.01, -0.01]))
    with pytest.raises(ConfigError):
        VehicleParams(max_thrust_per_motor=2.0)


def test_quaternion_helpers():
    q = quat_from_euler(0.1, -0.2, 0.3)
    assert np.allclose(quat_to_euler(q), (0.1, -0.2, 0.3))
    R = quat_to_rotmat(q)
    assert np.allclose(R @ R.T, np.eye(3))
    yaw90 = quat_from_euler(0, 0, math.pi / 2)
    assert np.allclose(quat_to_rotmat(yaw90) @ [1, 0, 0], [0, 1, 0])
    assert np.allclose(quat_multiply(yaw90, yaw90), quat_from_euler(0, 0, math.pi))


def test_net_wrench_hover_balanced():
    params = VehicleParams()
    w = net_wrench(hover_state(params), params)
    assert np.allclose(w, 0.0, atol=1e-12)
    # wind acts as drag on relative airspeed, force only
    w = net_wrench(hover_state(params), params, wind=(2.0, 0.0, 0.0))
    assert w[0] == pytest.approx(2.0 * params.drag_coeff)
    assert np.allclose(w[3:], 0.0, atol=1e-12)


def test_morph_changes_wrench_only_through_arms():
    params = VehicleParams()
    s = hover_state(params)
    s.morph = MorphState(np.array([22.0, -22.0, -22.0, 22.0]))
    w = net_wrench(s, params)
    assert w[0] > 0.5
    assert abs(w[1]) < 1e-12


def test_gust_stationary_std():
    model = GustModel(gust_std=1.5, correlation_time=0.5, seed=11)
    g = GustProcess(model)
    n = 300_000
    xs = np.empty((n, 3))
    for i in range(n):
        xs[i] = g.advance(0.01)
    std = xs[1000:].std(axis=0)
    assert np.all(np.abs(std - 1.5) <= 0.03 * 1.5)
    assert np.all(np.abs(xs.mean(axis=0)) < 0.15)


def test_gust_seeded_and_zero_std():
    a = GustProcess(GustModel(seed=5))
    b = GustProcess(GustModel(seed=5))
    for _ in range(100):
        assert np.array_equal(a.advance(0.001), b.advance(0.001))
    rng = np.random.default_rng(0)
    calm = GustModel(mean_wind=(1.0, 0.0, 0.0), gust_std=0.0)
    w = sample_gust(calm, np.array([1.0, 0.0, 0.0]), 0.001, rng)
    assert np.array_equal(w, [1.0, 0.0, 0.0])
    with pytest.raises(ConfigError):
        GustModel(correlation_time=0.0)


def test_step_deterministic():
    params = VehicleParams()
    cmd = Controls(np.array([2.5, 2.3, 2.4, 2.45]), np.array([5.0, 0, 0, -5.0]))
    outs = []
    for _ in range(2):
        s, g = hover_state(params, (0, 0, 4)), GustProcess(GustModel(seed=3))
        outs.append(run(s, params, cmd, 0.001, 300, g).as_record())
    assert outs[0] == outs[1]
