import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_rotation
from torchrelay.kinematics import (JointLimit, ManipulatorConfig, Workspace, chain_points, default_damping,
                                   desired_endpoint_body_velocity, endpoint_velocity_world, endpoint_world,
                                   forward_kinematics, in_workspace, inverse_velocity, jacobian, mount_offset,
                                   position_ik)
from torchrelay.spatial import rot_x, rot_y, rot_yaw

CFG = ManipulatorConfig.from_table()
WS = Workspace.from_table()
joint = st.floats(-1.5, 1.5, allow_nan=False)
q_strat = st.tuples(joint, joint, joint).map(np.array)


def hand_fk(q, cfg):
    """Independent homogeneous-transform chain (roll x, pitch y, pitch y, fixed bend, translations along x)."""
    def h(rot, trans):
        t = np.eye(4)
        t[:3, :3] = rot
        t[:3, 3] = trans
        return t
    L1, L2, L3, L4 = cfg.lengths
    ex = np.array([1.0, 0.0, 0.0])
    t = h(rot_x(q[0]), np.zeros(3)) @ h(np.eye(3), L1 * ex)
    t = t @ h(rot_y(q[1]), np.zeros(3)) @ h(np.eye(3), L2 * ex)
    t = t @ h(rot_y(q[2]), np.zeros(3)) @ h(np.eye(3), L3 * ex)
    t = t @ h(rot_y(cfg.beta), np.zeros(3)) @ h(np.eye(3), L4 * ex)
    return t[:3, 3]


def test_config_defaults_match_table():
    assert CFG.d == pytest.approx(0.3)
    assert np.allclose(CFG.lengths, [0.1, 0.4, 0.2, 0.53])
    assert np.degrees(CFG.alpha) == pytest.approx(135.0)
    assert np.allclose(CFG.p_BM, [0.3, 0.0, 0.0])
    with pytest.raises(ValueError):
        ManipulatorConfig(lengths=[0.1, -0.4, 0.2, 0.53])


def test_fk_straight_chain_golden():
    # planar trigonometry: three links along x, torch bent 45 deg upward (-z)
    b = np.pi - np.deg2rad(135.0)
    expected = np.array([0.1 + 0.4 + 0.2 + 0.53 * np.cos(b), 0.0, -0.53 * np.sin(b)])
    assert np.allclose(forward_kinematics([0, 0, 0], CFG), expected, atol=1e-15)
    assert np.allclose(expected, [1.07476659, 0.0, -0.37476659], atol=1e-8)


@given(q_strat)
def test_fk_matches_transform_oracle(q):
    assert np.abs(forward_kinematics(q, CFG) - hand_fk(q, CFG)).max() < 1e-12
    assert np.allclose(chain_points(q, CFG)[4], forward_kinematics(q, CFG))


@given(q_strat, joint)
def test_roll_preserves_norm_and_x(q, roll):
    p0 = forward_kinematics(q, CFG)
    p1 = forward_kinematics([roll, q[1], q[2]], CFG)
    assert np.linalg.norm(p1) == pytest.approx(np.linalg.norm(p0), abs=1e-12)
    assert p1[0] == pytest.approx(p0[0], abs=1e-12)


def test_elbow_chord_bound():
    a = forward_kinematics([0.0, 0.0, 0.0], CFG)
    b = forward_kinematics([0.0, 0.0, np.pi / 2], CFG)
    assert np.linalg.norm(a - b) <= 2 * (CFG.lengths[2] + CFG.lengths[3])


def test_joint_limit_error():
    with pytest.raises(JointLimit):
        forward_kinematics([0.0, 2.0, 0.0], CFG)


@given(q_strat)
def test_jacobian_finite_difference(q):
    dq = 1e-7
    jac = jacobian(q, CFG)
    for i in range(3):
        d = np.zeros(3)
        d[i] = dq
        fd = forward_kinematics(q + d, CFG, check=False) - forward_kinematics(q, CFG, check=False)
        assert np.linalg.norm(jac[:, i] * dq - fd) <= 1e-6 * dq


def test_jacobian_roll_column_perpendicular_to_axis():
    jac = jacobian([0, 0, 0], CFG)
    assert abs(jac[0, 0]) < 1e-15
    p = forward_kinematics([0, 0, 0], CFG)
    assert np.allclose(jac[:, 0], np.cross([1, 0, 0], p))


def test_jacobian_continuity():
    q = np.array([0.2, -0.5, 0.9])
    assert np.abs(jacobian(q + 1e-9, CFG) - jacobian(q, CFG)).max() < 1e-8


def test_inverse_velocity_zero_and_round_trip():
    q = np.array([0.1, -0.7, 1.1])
    assert np.array_equal(inverse_velocity(q, np.zeros(3), CFG).qdot, np.zeros(3))
    v = np.array([0.05, -0.03, 0.02])
    out = inverse_velocity(q, v, CFG)
    assert not out.damped and not out.saturated
    assert np.abs(jacobian(q, CFG) @ out.qdot - v).max() < 1e-9


@given(q_strat, st.tuples(*[st.floats(-0.2, 0.2)] * 3).map(np.array))
def test_inverse_velocity_round_trip_property(q, v):
    out = inverse_velocity(q, v, CFG, clamp=False)
    if out.sigma_min > 1e-3:
        assert np.abs(jacobian(q, CFG) @ out.qdot - v).max() < 1e-9


def singular_q():
    L3, L4 = CFG.lengths[2:]
    b = CFG.beta
    return np.array([0.0, 0.3, -np.arctan2(L4 * np.sin(b), L3 + L4 * np.cos(b))])


def test_dls_bound_at_singularity():
    q = singular_q()
    s = np.linalg.svd(jacobian(q, CFG), compute_uv=False)
    assert s[-1] < 1e-9
    lam = default_damping()
    v = np.array([0.1, -0.05, 0.08])
    out = inverse_velocity(q, v, CFG, clamp=False)
    assert out.damped
    bound = np.linalg.norm(v) * np.max(s / (s * s + lam * lam * (1 - (s[-1] / 1e-3) ** 2)))
    assert np.linalg.norm(out.qdot) <= bound * (1 + 1e-9)


def test_dls_continuous_across_threshold():
    q0 = singular_q()
    v = np.array([0.0, 0.0, 0.05])

    def smin(eps):
        return np.linalg.svd(jacobian(q0 + [0.0, 0.0, eps], CFG), compute_uv=False)[-1]
    lo, hi = 0.0, 0.01  # smin(lo) < 1e-3 < smin(hi)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if smin(mid) < 1e-3 else (lo, mid)
    below = inverse_velocity(q0 + [0.0, 0.0, lo], v, CFG, clamp=False)
    above = inverse_velocity(q0 + [0.0, 0.0, hi], v, CFG, clamp=False)
    assert below.damped and not above.damped
    assert np.linalg.norm(below.qdot - above.qdot) < 1e-6 * np.linalg.norm(above.qdot)


def test_rate_clamp():
    out = inverse_velocity([0.1, -0.7, 1.1], np.array([5.0, 0.0, 0.0]), CFG)
    assert out.saturated
    assert np.max(np.abs(out.qdot)) == pytest.approx(CFG.rate_limit)


def test_endpoint_world_examples(rng):
    q = np.array([0.1, -0.6, 1.0])
    cfg0 = ManipulatorConfig.from_table(R_BM=rot_yaw(0.3), p_BM=np.zeros(3))
    assert np.allclose(endpoint_world(np.zeros(3), np.eye(3), q, cfg0), rot_yaw(0.3) @ forward_kinematics(q, cfg0))
    t = np.array([1.0, -2.0, 3.0])
    R = random_rotation(rng)
    assert np.allclose(endpoint_world(t, R, q, CFG) - endpoint_world(np.zeros(3), R, q, CFG), t)
    for _ in range(10):
        R = random_rotation(rng)
        p = rng.normal(size=3)
        qq = rng.uniform(-1.2, 1.2, 3)
        t_ib = np.eye(4)
        t_ib[:3, :3], t_ib[:3, 3] = R, p
        t_bm = np.eye(4)
        t_bm[:3, :3], t_bm[:3, 3] = CFG.R_BM, CFG.p_BM
        oracle = (t_ib @ t_bm @ np.append(hand_fk(qq, CFG), 1.0))[:3]
        assert np.abs(endpoint_world(p, R, qq, CFG) - oracle).max() < 1e-12


def test_endpoint_velocity_examples(rng):
    q = np.array([0.1, -0.6, 1.0])
    R = random_rotation(rng)
    z = np.zeros(3)
    assert np.allclose(endpoint_velocity_world(z, z, R, z, q, z, CFG), 0.0)
    vb = np.array([0.3, -0.1, 0.2])
    assert np.allclose(endpoint_velocity_world(z, vb, R, z, q, z, CFG), vb)


def test_endpoint_velocity_finite_difference(rng):
    p0, v = rng.normal(size=3), rng.normal(size=3)
    w = np.array([0.3, -0.2, 0.4])
    q0, qd = np.array([0.1, -0.6, 1.0]), np.array([0.5, -0.3, 0.2])
    R0 = random_rotation(rng)
    from torchrelay.spatial import exp_so3

    def pos(t):
        return endpoint_world(p0 + v * t, R0 @ exp_so3(w * t), q0 + qd * t, CFG)
    h = 1e-4
    fd = (pos(h) - pos(-h)) / (2 * h)
    assert np.abs(fd - endpoint_velocity_world(p0, v, R0, w, q0, qd, CFG)).max() < 1e-4


def test_desired_endpoint_body_velocity(rng):
    q = np.array([0.1, -0.6, 1.0])
    R = random_rotation(rng)
    z = np.zeros(3)
    v_end = np.array([0.1, 0.2, -0.1])
    assert np.allclose(desired_endpoint_body_velocity(v_end, z, R, z, q, CFG), CFG.R_BM.T @ R.T @ v_end)
    vb = np.array([0.4, 0.0, -0.2])
    assert np.allclose(desired_endpoint_body_velocity(vb, vb, R, z, q, CFG), 0.0)
    w = np.array([0.2, -0.1, 0.3])
    vm = desired_endpoint_body_velocity(v_end, vb, R, w, q, CFG)
    qd = inverse_velocity(q, vm, CFG, clamp=False).qdot
    assert np.abs(endpoint_velocity_world(z, vb, R, w, q, qd, CFG) - v_end).max() < 1e-9


def test_workspace_examples():
    assert in_workspace(np.array([0.8, 0.0, -0.35]), WS)
    assert not in_workspace(np.array([0.6, 0.0, -0.35]), WS)
    assert not in_workspace(np.array([0.8, 0.0, 0.05]), WS)
    assert not in_workspace(np.array([0.8, 0.0, -0.75]), WS)
    assert not in_workspace(np.array([0.8 * np.cos(0.4), 0.8 * np.sin(0.4), -0.3]), WS)
    assert in_workspace(WS.center, WS)
    with pytest.raises(ValueError):
        Workspace(r_min=1.0, r_max=0.5)


@given(st.floats(0.66, 0.94), st.floats(-0.69, -0.01), st.floats(-0.34, 0.34), st.floats(-1.0, 1.0))
def test_workspace_cone_symmetry(r, z, bearing, frac):
    p = np.array([r * np.cos(bearing), r * np.sin(bearing), z])
    assert in_workspace(p, WS)
    half = 0.5 * WS.alpha
    new_bearing = frac * (half - 1e-9)
    rotated = rot_yaw(new_bearing - bearing) @ p
    assert in_workspace(rotated, WS)


def test_ready_pose_reaches_fire_point():
    q = position_ik(np.array([0.8, 0.0, -0.3]), CFG)
    assert np.allclose(q, [0.0, -0.708, 1.086], atol=1e-3)
    assert np.allclose(mount_offset(q, CFG), [1.1, 0.0, -0.3])
