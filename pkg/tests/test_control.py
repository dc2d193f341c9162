import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_rotation
from torchrelay.config import default_config
from torchrelay.control import (AttitudeGains, CascadeController, ControlLimits, DegenerateAttitude, PositionGains,
                                attitude_control, attitude_error, desired_attitude, position_control)
from torchrelay.dynamics import Plant, QuadrotorState
from torchrelay.spatial import E3, axis_angle, rotation_angle, yaw_of

CFG = default_config()
GAINS = CFG.position_gains
M_S = 35.0
G = 9.81
Z = np.zeros(3)

# frozen from the first validated closed-loop runs with the shipped gains
POSITION_SETTLE_S = 6.578
ATTITUDE_CONVERGE_S = 0.232


def test_gain_validation():
    with pytest.raises(ValueError):
        PositionGains([1, 1, -1], [1, 1, 1], [1, 1, 1], [1, 1, 1])
    with pytest.raises(ValueError):
        AttitudeGains([1, 0, 1], [1, 1, 1])


def test_hover_feedforward():
    out = position_control(Z, Z, Z, Z, Z, 0.01, Z, GAINS, M_S, np.eye(3))
    assert np.allclose(out.a_d, G * E3)
    assert out.F_d == pytest.approx(M_S * G)


def test_disturbance_feedforward_on_thrust():
    out = position_control(Z, Z, Z, Z, Z, 0.01, np.array([0.0, 0.0, -5.0]), GAINS, M_S, np.eye(3))
    assert out.F_d == pytest.approx(M_S * G - 5.0)
    tilted = axis_angle([1.0, 0.0, 0.0], 0.3)
    out = position_control(Z, Z, Z, Z, Z, 0.01, np.array([0.0, 0.0, -5.0]), GAINS, M_S, tilted)
    assert out.F_d == pytest.approx((M_S * G - 5.0) * np.cos(0.3))


def test_thrust_clamped():
    # NED: a set-point far above (negative z) asks for full thrust
    out = position_control(Z, Z, np.array([0.0, 0.0, -50.0]), Z, Z, 0.01, Z, GAINS, M_S, np.eye(3),
                           limits=ControlLimits(F_max=392.4))
    assert out.F_d == 392.4 and out.saturated
    out = position_control(Z, Z, np.array([0.0, 0.0, 50.0]), Z, Z, 0.01, Z, GAINS, M_S, np.eye(3))
    assert out.F_d == 0.0 and out.saturated


@given(st.lists(st.tuples(*[st.floats(-20, 20)] * 3), min_size=1, max_size=50))
def test_integral_anti_windup(errors):
    integral = Z
    for e in errors:
        out = position_control(Z, Z, np.array(e), Z, integral, 0.1, Z, GAINS, M_S, np.eye(3))
        integral = out.integral
        assert np.all(np.abs(integral) <= GAINS.integral_limit + 1e-15)


def test_integral_held_when_not_integrating():
    out = position_control(Z, Z, np.ones(3), Z, np.full(3, 0.1), 0.1, Z, GAINS, M_S, np.eye(3), integrate=False)
    assert np.allclose(out.integral, 0.1)


def test_desired_attitude_examples():
    R = desired_attitude(G * E3, 0.0)
    assert np.allclose(R, np.eye(3))
    R = desired_attitude(G * E3, np.pi / 2)
    assert yaw_of(R) == pytest.approx(np.pi / 2)
    with pytest.raises(DegenerateAttitude):
        desired_attitude(np.array([5.0, 0.0, 0.0]), 0.0)


def test_desired_attitude_accel_floor():
    R = desired_attitude(np.zeros(3), 0.3)
    assert np.allclose(R[:, 2], E3)
    R = desired_attitude(np.array([0.0, 0.0, -0.2]), 0.0)
    assert np.allclose(R[:, 2], -E3)


@given(st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(2, 15)).map(np.array),
       st.floats(-np.pi, np.pi))
def test_desired_attitude_properties(a_d, psi):
    R = desired_attitude(a_d, psi)
    assert np.abs(R.T @ R - np.eye(3)).max() < 1e-12
    assert abs(np.linalg.det(R) - 1.0) < 1e-12
    assert np.linalg.norm(np.cross(R[:, 2], a_d / np.linalg.norm(a_d))) < 1e-12
    x_tilde = np.array([np.cos(psi), np.sin(psi), 0.0])
    # y is orthogonal to the heading reference, so x lies in span(z, x_tilde)
    assert abs(R[:, 1] @ x_tilde) < 1e-12
    assert R[:, 0] @ x_tilde > 0.0


@given(st.floats(-8, 8), st.floats(2, 15), st.floats(-np.pi, np.pi))
def test_desired_attitude_heading_exact_when_tilt_along_heading(s, z, psi):
    a_d = np.array([s * np.cos(psi), s * np.sin(psi), z])
    R = desired_attitude(a_d, psi)
    assert abs(np.angle(np.exp(1j * (yaw_of(R) - psi)))) < 1e-12


def test_thrust_equals_norm_when_aligned():
    a_d = np.array([1.0, -2.0, 9.0])
    R = desired_attitude(a_d, 0.4)
    out = position_control(Z, Z, Z, Z, Z, 0.01, a_d * M_S - G * E3 * M_S, GAINS, M_S, R)
    assert out.F_d == pytest.approx(M_S * np.linalg.norm(a_d))


def test_attitude_error_examples(rng):
    R = random_rotation(rng)
    assert np.allclose(attitude_error(R, R), 0.0)
    Rd = random_rotation(rng)
    assert np.array_equal(attitude_error(R, Rd), -attitude_error(Rd, R))
    n = np.array([0.3, -0.5, 0.8])
    n /= np.linalg.norm(n)
    for delta in (1e-3, 0.05, 0.4):
        e = attitude_error(Rd @ axis_angle(n, delta), Rd)
        assert np.allclose(e, np.sin(delta) * n, atol=1e-12)


def test_attitude_control_examples():
    gains = CFG.attitude_gains
    assert np.allclose(attitude_control(Z, Z, Z, gains), 0.0)
    t0 = np.array([1.0, -2.0, 0.5])
    # the command cancels the disturbance: applied torque + disturbance = 0
    assert np.allclose(attitude_control(Z, Z, t0, gains) + t0, 0.0)
    lim = ControlLimits(tau_max=5.0)
    assert np.allclose(attitude_control(np.array([1.0, 0, 0]), Z, Z, gains, lim), [-5.0, 0, 0])


def test_position_step_regression():
    m = CFG.inertia
    c = CascadeController(GAINS, CFG.attitude_gains, m.m_s, CFG.limits)
    plant = Plant(m, CFG.manipulator)
    x = QuadrotorState(p=np.array([1.0, 0.0, -2.0])).to_vector()
    pd = np.array([0.0, 0.0, -2.0])
    settle = None
    for k in range(15000):
        s = QuadrotorState.from_vector(x)
        if k % 5 == 0:
            c.update_position(s.p, s.v, s.R, pd, 0.0, 0.01, Z)
        c.update_attitude(s.R, s.omega, Z)
        x, _ = plant.step(x, 0.002, c.F_d, c.tau_d)
        err = np.linalg.norm(x[:3] - pd)
        settle = None if err > 0.02 else (settle or (k + 1) * 0.002)
    assert settle == pytest.approx(POSITION_SETTLE_S, abs=0.01)
    assert err < 1e-5


def test_attitude_step_regression():
    m = CFG.inertia
    c = CascadeController(GAINS, CFG.attitude_gains, m.m_s, CFG.limits)
    plant = Plant(m, CFG.manipulator)
    x = QuadrotorState(R=axis_angle([1.0, 0.0, 0.0], 0.2)).to_vector()
    t_conv = None
    for k in range(2000):
        s = QuadrotorState.from_vector(x)
        c.update_attitude(s.R, s.omega, Z)
        x, _ = plant.step(x, 0.002, c.F_d, c.tau_d)
        if rotation_angle(QuadrotorState.from_vector(x).R, np.eye(3)) < 0.01:
            t_conv = (k + 1) * 0.002
            break
    assert t_conv == pytest.approx(ATTITUDE_CONVERGE_S, abs=0.005)


def test_cascade_compensation_switch():
    c = CascadeController(GAINS, CFG.attitude_gains, M_S, CFG.limits, compensate=False)
    c.update_position(Z, Z, np.eye(3), Z, 0.0, 0.01, np.array([0.0, 0.0, -5.0]))
    assert c.F_d == pytest.approx(M_S * G)
    tau = c.update_attitude(np.eye(3), Z, np.array([1.0, 0.0, 0.0]))
    assert np.allclose(tau, 0.0)
    cmd = c.command()
    assert cmd.F_d == c.F_d and np.allclose(cmd.a_d, G * E3)
