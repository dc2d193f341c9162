import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_rotation
from torchrelay.kinematics import ManipulatorConfig, Workspace
from torchrelay.spatial import E3, rot_yaw, wrap_angle
from torchrelay.task import (TRANSITIONS, FloatingPlatform, InvalidObservation, OperatingReference, Sensors,
                             TaskMachine, TaskParams, TaskState, TorchModel, fire_point_body, hovering_setpoint,
                             ignition_check, platform_height, platform_pose, step_task)
from torchrelay.vision import TargetObservation

CFG = ManipulatorConfig.from_table()
WS = Workspace.from_table()
REF = OperatingReference(np.array([0.8, 0.0, 0.2]), 0.0, 0.1)
vec = st.tuples(*[st.floats(-3, 3)] * 3).map(np.array)
ang = st.floats(-np.pi, np.pi)


def obs(p, psi, t=0.0, valid=True):
    return TargetObservation(np.asarray(p, float), float(psi), t, valid)


@given(vec, ang, st.integers(0, 2**31))
def test_setpoint_fixed_point(p_b, psi, seed):
    R = rot_yaw(psi) @ random_rotation(np.random.default_rng(seed))
    psi_d, p_d, _ = hovering_setpoint(obs(REF.p_t_star, REF.psi_t_star), p_b, R, REF)
    from torchrelay.spatial import yaw_of
    assert abs(wrap_angle(psi_d - yaw_of(R))) < 1e-12
    assert np.abs(p_d - p_b).max() < 1e-12


@given(vec, ang, ang)
def test_setpoint_fixed_point_level_form(p_b, psi, delta):
    R = rot_yaw(psi)
    psi_d, p_d, _ = hovering_setpoint(obs(REF.p_t_star, delta), p_b, R, REF, level=True)
    assert np.isclose(psi_d, psi + delta)
    lit_psi, lit_p, _ = hovering_setpoint(obs(REF.p_t_star, delta), p_b, R, REF)
    assert np.allclose(p_d, lit_p) and np.isclose(psi_d, lit_psi)


@given(vec, ang, ang)
def test_setpoint_yaw_offset(p_b, psi, delta):
    psi_d, _, _ = hovering_setpoint(obs(REF.p_t_star, delta), p_b, rot_yaw(psi), REF)
    assert psi_d == pytest.approx(psi + delta, abs=1e-12)


def test_setpoint_hand_example():
    ref = OperatingReference(np.array([0.8, 0.0, 0.2]), 0.0, 0.1)
    p_b = np.array([1.0, 2.0, -3.0])
    psi_d, p_d, p_end = hovering_setpoint(obs([1.0, 0.2, 0.1], 0.0), p_b, rot_yaw(0.3), ref)
    c, s = np.cos(0.3), np.sin(0.3)
    # R(psi) (p~ - p*) with p~ - p* = (0.2, 0.2, -0.1)
    assert psi_d == pytest.approx(0.3)
    assert np.allclose(p_d, p_b + [0.2 * c - 0.2 * s, 0.2 * s + 0.2 * c, -0.1])
    assert np.allclose(p_d, [1.13196308, 2.25017127, -3.1])
    assert np.allclose(p_end, p_b + [1.0 * c - 0.2 * s, 1.0 * s + 0.2 * c, 0.1 - 0.1])


@given(vec, ang, ang, vec, ang, st.booleans())
def test_setpoint_yaw_equivariance(p_b, psi, dpsi, p_t, psi_t, level):
    o = obs(np.clip(p_t, -2, 2), psi_t)
    a_psi, a_p, a_end = hovering_setpoint(o, p_b, rot_yaw(psi), REF, level)
    Rz = rot_yaw(dpsi)
    b_psi, b_p, b_end = hovering_setpoint(o, Rz @ p_b, Rz @ rot_yaw(psi), REF, level)
    assert abs(wrap_angle(b_psi - a_psi - dpsi)) < 1e-9
    assert np.abs(b_p - Rz @ a_p).max() < 1e-9
    assert np.abs(b_end - Rz @ a_end).max() < 1e-9


def test_setpoint_invalid():
    with pytest.raises(InvalidObservation):
        hovering_setpoint(obs([1, 0, 0], 0.0, valid=False), np.zeros(3), np.eye(3), REF)
    with pytest.raises(InvalidObservation):
        hovering_setpoint(None, np.zeros(3), np.eye(3), REF)


def test_fire_point_is_against_gravity():
    R = random_rotation(np.random.default_rng(1))
    fp = fire_point_body(np.zeros(3), R, 0.1)
    assert np.allclose(R @ fp, -0.1 * E3)


def test_reference_for_fire_point():
    ref = OperatingReference.for_fire_point(np.array([0.8, 0.0, -0.3]), CFG, 0.1)
    assert np.allclose(ref.p_t_star, [1.1, 0.0, -0.2])


def test_platform_examples():
    pl = FloatingPlatform(tip_position=np.array([4.0, 1.0, -2.2]), yaw=0.3)
    base = platform_pose(0.0, pl)
    assert np.array_equal(base.tip, pl.tip_position)
    assert np.allclose(base.R_IT, rot_yaw(0.3))
    assert platform_height(2.5, pl) == pytest.approx(0.05)
    ts = np.linspace(0, 10, 10001)
    h = np.array([platform_height(t, pl) for t in ts])
    assert h.max() - h.min() == pytest.approx(0.10, abs=1e-8)
    assert platform_height(12.5, pl) == pytest.approx(platform_height(2.5, pl))
    assert platform_pose(2.5, pl).height == pytest.approx(0.05)
    with pytest.raises(ValueError):
        platform_pose(-1.0, pl)
    with pytest.raises(ValueError):
        FloatingPlatform(amplitude=-0.1)


def test_platform_tilt_follows_height_and_moves_tip():
    pl = FloatingPlatform()
    pose = platform_pose(2.5, pl)
    assert pose.tilt == pytest.approx(3.5 * 0.05)
    assert np.linalg.norm(pose.tip - pl.tip_position) > 0.05
    tips = np.array([platform_pose(t, pl).tip for t in np.linspace(0, 10, 201)])
    diam = np.linalg.norm(tips[:, None, :] - tips[None, :, :], axis=-1).max()
    assert diam > 0.15
    fixed = FloatingPlatform(amplitude=0.0)
    assert np.array_equal(platform_pose(3.3, fixed).tip, fixed.tip_position)


def test_ignition_dwell_lights():
    torch = TorchModel(dwell_required=1.5)
    fp = np.array([1.0, 2.0, -3.0])
    for _ in range(150):
        torch = ignition_check(fp, fp, torch, 0.01)
    assert torch.lit
    assert torch.dwell == pytest.approx(1.5)


def test_ignition_never_in_radius():
    torch = TorchModel()
    fp = np.zeros(3)
    for _ in range(3000):
        torch = ignition_check(fp + [0.05, 0, 0], fp, torch, 0.01)
    assert not torch.lit and torch.temperature == 0.0


def test_ignition_dwell_resets_outside_radius():
    torch = TorchModel(dwell_required=1.0)
    fp = np.zeros(3)
    for k in range(180):
        p = fp + ([0.1, 0, 0] if k == 90 else [0.0, 0, 0])
        torch = ignition_check(p, fp, torch, 0.01)
    assert not torch.lit and torch.dwell == pytest.approx(0.89)


def test_ignition_make_fire_factor_slows():
    torch = TorchModel(dwell_required=1.5, dwell_factor=0.25)
    for _ in range(150):
        torch = ignition_check(np.zeros(3), np.zeros(3), torch, 0.01)
    assert not torch.lit and torch.dwell == pytest.approx(0.375)


@given(st.lists(st.floats(0, 0.06), min_size=1, max_size=400), st.integers(0, 1000))
def test_ignition_lit_monotone_and_gas_nonincreasing(dists, seed):
    rng = np.random.default_rng(seed)
    torch = TorchModel(dwell_required=0.2, hazard=1.0, gas_rate=0.01)
    was_lit, gas = False, torch.gas_level
    for d in dists:
        torch = ignition_check(np.array([d, 0.0, 0.0]), np.zeros(3), torch, 0.01, rng)
        assert torch.lit or not was_lit
        assert torch.gas_level <= gas
        was_lit, gas = torch.lit, torch.gas_level


def test_temperature_signal_rises_after_lighting():
    torch = TorchModel(dwell_required=0.1)
    for _ in range(100):
        torch = ignition_check(np.zeros(3), np.zeros(3), torch, 0.01)
    assert torch.lit and torch.temperature > 300.0


class IdealWorld:
    """Vehicle reaches each set-point instantly; the camera sees a fixed target exactly."""

    def __init__(self, target=np.array([4.0, 1.0, -2.2]), target_yaw=0.2):
        self.target, self.target_yaw = target, target_yaw
        self.temperature = 0.0
        self.visible = True

    def sensors(self, p, psi, t):
        R = rot_yaw(psi)
        o = None
        if self.visible:
            o = obs(R.T @ (self.target - p), wrap_angle(self.target_yaw - psi), t)
            o.R_BT = rot_yaw(self.target_yaw - psi)
        return Sensors(p, np.zeros(3), R, o, self.temperature)


def make_machine(**kw):
    params = TaskParams(**kw)
    ref = OperatingReference.for_fire_point(np.array([0.8, 0.0, -0.3]), CFG, 0.1)
    return TaskMachine(params, ref, CFG, WS, approach_point=np.array([2.5, 0.8, -2.0]), approach_yaw=0.2)


def drive(machine, world, until, dt=0.1, on_tick=None):
    p, psi = np.zeros(3), 0.0
    for k in range(int(round(until / dt)) + 1):
        t = round(k * dt, 10)
        if on_tick:
            on_tick(machine, world, t)
        out = step_task(machine, world.sensors(p, psi, t), t)
        p, psi = out.p_d, out.psi_d
        if out.done:
            break
    return out


def test_nominal_sequence_in_order():
    world = IdealWorld()

    def heat(m, w, t):
        if m.state == TaskState.LIGHTING and t - m.entered[TaskState.LIGHTING] > 1.0:
            w.temperature = 400.0
    out = drive(make_machine(), world, 100.0, on_tick=heat)
    assert out.done and out.state == TaskState.LAND
    assert out.p_d[2] == 0.0


def test_state_history_visits_each_state_once():
    world = IdealWorld()
    m = make_machine()

    def heat(m, w, t):
        if m.state == TaskState.LIGHTING:
            w.temperature = 400.0
    drive(m, world, 100.0, on_tick=heat)
    expected = [TaskState.IDLE, TaskState.TAKEOFF, TaskState.APPROACH, TaskState.VISUAL_SERVO, TaskState.LIGHTING,
                TaskState.CONFIRM_LIT, TaskState.RETREAT, TaskState.LAND]
    assert m.history == expected
    for a, b in zip(m.history, m.history[1:]):
        assert b in TRANSITIONS[a]


def test_lighting_timeout_exactly_30s():
    m = make_machine(global_timeout=500.0)
    seen = {}

    def watch(m, w, t):
        if m.state == TaskState.LIGHTING:
            seen.setdefault("t_in", t)
    drive(m, IdealWorld(), 200.0, on_tick=watch)
    assert m.state == TaskState.ABORTED
    assert m.entered[TaskState.ABORTED] - m.entered[TaskState.LIGHTING] == pytest.approx(30.0, abs=1e-9)


def test_vision_invalid_never_leaves_approach():
    world = IdealWorld()
    world.visible = False
    m = make_machine(global_timeout=40.0)
    drive(m, world, 60.0)
    assert m.history == [TaskState.IDLE, TaskState.TAKEOFF, TaskState.APPROACH, TaskState.ABORTED]
    assert m.entered[TaskState.ABORTED] == pytest.approx(40.0)


def test_stale_observation_is_ignored():
    m = make_machine()
    world = IdealWorld()
    stale = obs([1.1, 0.0, -0.2], 0.0, t=0.0)
    assert not m._fresh(stale, 1.0)
    assert m._fresh(stale, 0.2)
    assert world.sensors(np.zeros(3), 0.0, 0.0).obs.valid


@given(st.sampled_from(list(TaskState)))
def test_liveness_global_timeout(state):
    m = make_machine(global_timeout=5.0)
    if state in (TaskState.LAND, TaskState.ABORTED, TaskState.IDLE):
        return
    # hold the vehicle away from every set-point so no guard can fire
    m.step(Sensors(np.zeros(3), np.zeros(3), np.eye(3), None, 0.0), 0.0)
    m.state = state
    m.entered[state] = 0.0
    m._lit_since = 0.0
    out = m.step(Sensors(np.array([50.0, 0, 0]), np.ones(3), np.eye(3), None, 0.0), 5.0)
    assert out.state == TaskState.ABORTED


def test_arm_mode_and_labels():
    assert TaskState.VISUAL_SERVO.label == "VisualServo"
    m = make_machine()
    out = m.step(Sensors(np.zeros(3), np.zeros(3), np.eye(3), None, 0.0), 0.0)
    assert out.state == TaskState.TAKEOFF and out.arm_mode == "ready"
    assert np.allclose(out.p_d, [0.0, 0.0, -2.0])
