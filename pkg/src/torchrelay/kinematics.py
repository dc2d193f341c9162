"""Kinematics of the 3-DoF arm carrying the torch.

Chain convention (all lengths in metres, angles in radians), expressed in the
manipulator base frame M (x forward, y right, z down, aligned with the body
frame by default):

    joint  axis            then translate
    q1     x (roll)        L1 along x
    q2     y (pitch)       L2 along x
    q3     y (pitch)       L3 along x
    fixed  y by beta       L4 along x   (torch; beta = pi - alpha)

A positive pitch lifts the following link (toward -z).  The torch tip is the
end of L4.  The base offset ``d`` is the translation from the body origin to
the shoulder, i.e. ``p_BM = (d, 0, 0)``; the chain itself starts at the origin
of M.
"""
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels as K


class JointLimit(ValueError):
    pass


@dataclass
class ManipulatorConfig:
    d: float = 0.300
    lengths: np.ndarray = field(default_factory=lambda: np.array([0.100, 0.400, 0.200, 0.530]))
    alpha: float = np.deg2rad(135.0)
    phi_c: float = np.deg2rad(-30.0)
    theta_c: float = np.deg2rad(-60.0)
    R_BM: np.ndarray = field(default_factory=lambda: np.eye(3))
    p_BM: np.ndarray = None
    joint_limit: np.ndarray = field(default_factory=lambda: np.full(3, np.pi / 2))
    rate_limit: float = 2.0
    accel_limit: float = 20.0

    def __post_init__(self):
        self.lengths = np.asarray(self.lengths, dtype=float)
        self.R_BM = np.asarray(self.R_BM, dtype=float)
        if self.p_BM is None:
            self.p_BM = np.array([self.d, 0.0, 0.0])
        self.p_BM = np.asarray(self.p_BM, dtype=float)
        self.joint_limit = np.broadcast_to(np.asarray(self.joint_limit, dtype=float), (3,)).copy()
        if np.any(self.lengths <= 0.0) or self.d < 0.0:
            raise ValueError("link lengths must be positive")

    @classmethod
    def from_table(cls, d=300.0, L1=100.0, L2=400.0, L3=200.0, L4=530.0,
                   alpha=135.0, phi_c=-30.0, theta_c=-60.0, **kwargs):
        """Build from millimetres and degrees."""
        return cls(d=d / 1000.0, lengths=np.array([L1, L2, L3, L4]) / 1000.0,
                   alpha=np.deg2rad(alpha), phi_c=np.deg2rad(phi_c), theta_c=np.deg2rad(theta_c), **kwargs)

    @property
    def beta(self):
        return float(np.pi - self.alpha)


@dataclass
class Workspace:
    """Fan-section prism in front of the vehicle, axis along z_M.

    ``radius='section'`` measures the radius in the x-y cross-section of the
    fan; ``radius='norm'`` uses the full 3-D distance from the origin of M.
    """
    h: float = 0.700
    alpha: float = np.deg2rad(40.0)
    r_min: float = 0.650
    r_max: float = 0.950
    radius: str = "section"

    def __post_init__(self):
        if not (0.0 < self.r_min < self.r_max and self.h > 0.0 and 0.0 < self.alpha < np.pi):
            raise ValueError("invalid workspace bounds")
        if self.radius not in ("section", "norm"):
            raise ValueError("radius must be 'section' or 'norm'")

    @classmethod
    def from_table(cls, h=700.0, alpha=40.0, r_min=650.0, r_max=950.0, radius="section"):
        return cls(h=h / 1000.0, alpha=np.deg2rad(alpha), r_min=r_min / 1000.0, r_max=r_max / 1000.0, radius=radius)

    @property
    def center(self):
        """A representative interior point (mid radius, mid height)."""
        return np.array([0.5 * (self.r_min + self.r_max), 0.0, -0.5 * self.h])


class VelocityIK(NamedTuple):
    qdot: np.ndarray
    sigma_min: float
    damped: bool
    saturated: bool


def _q(q):
    return np.asarray(q, dtype=float).reshape(3)


def check_limits(q, cfg):
    q = _q(q)
    if np.any(np.abs(q) > cfg.joint_limit + 1e-12):
        raise JointLimit(f"joint angles {q} outside +/-{cfg.joint_limit}")


def forward_kinematics(q, cfg, check=True):
    """Torch tip position in the manipulator base frame."""
    q = _q(q)
    if check:
        check_limits(q, cfg)
    z = np.zeros(3)
    return K.chain_state(q, z, z, cfg.lengths, cfg.beta)[0][4].copy()


def jacobian(q, cfg):
    """3x3 Jacobian mapping joint rates to tip velocity in M."""
    q = _q(q)
    z = np.zeros(3)
    return K.chain_state(q, z, z, cfg.lengths, cfg.beta)[10].copy()


def chain_points(q, cfg):
    """Joint origins and tip, shape (5, 3), in M."""
    z = np.zeros(3)
    return K.chain_state(_q(q), z, z, cfg.lengths, cfg.beta)[0].copy()


def default_damping(ws=None):
    r_max = Workspace().r_max if ws is None else ws.r_max
    return 0.01 * r_max


def inverse_velocity(q, v_des, cfg, damping=None, sigma_thresh=1e-3, clamp=True):
    """Joint rates producing the tip velocity ``v_des`` (frame M).

    Exact inverse while the smallest singular value of J stays above
    ``sigma_thresh``.  Below it the damping grows smoothly,
    ``lam^2 = damping^2 (1 - (s/sigma_thresh)^2)``, so the output is continuous
    across the threshold.  With ``clamp`` the result is scaled down uniformly
    to respect ``cfg.rate_limit``.
    """
    q = _q(q)
    v = np.asarray(v_des, dtype=float).reshape(3)
    lam = default_damping() if damping is None else damping
    jac = jacobian(q, cfg)
    u, s, vt = np.linalg.svd(jac)
    s_min = float(s[-1])
    damped = s_min < sigma_thresh
    if damped:
        lam2 = lam * lam * (1.0 - (s_min / sigma_thresh) ** 2)
        qdot = vt.T @ ((s / (s * s + lam2)) * (u.T @ v))
    else:
        qdot = np.linalg.solve(jac, v)
    saturated = False
    if clamp:
        peak = np.max(np.abs(qdot)) / cfg.rate_limit
        if peak > 1.0:
            qdot = qdot / peak
            saturated = True
    return VelocityIK(qdot, s_min, damped, saturated)


def position_ik(p_target, cfg, q0=None, tol=1e-12, max_iter=200):
    """Joint angles placing the tip at ``p_target`` (frame M), damped Newton."""
    q = np.array([0.0, -0.6, 1.2]) if q0 is None else _q(q0).copy()
    target = np.asarray(p_target, dtype=float)
    for _ in range(max_iter):
        err = target - forward_kinematics(q, cfg, check=False)
        if np.linalg.norm(err) < tol:
            break
        jac = jacobian(q, cfg)
        step = jac.T @ np.linalg.solve(jac @ jac.T + 1e-6 * np.eye(3), err)
        q = np.clip(q + step, -cfg.joint_limit, cfg.joint_limit)
    if np.linalg.norm(target - forward_kinematics(q, cfg, check=False)) > 1e-6:
        raise ValueError(f"target {target} not reachable within joint limits")
    return q


def mount_offset(q, cfg):
    """Tip position in the body frame: p_BM + R_BM p_M."""
    return cfg.p_BM + cfg.R_BM @ forward_kinematics(q, cfg, check=False)


def endpoint_world(p_b, R_IB, q, cfg):
    return np.asarray(p_b, dtype=float) + R_IB @ mount_offset(q, cfg)


def endpoint_velocity_world(p_b, v_b, R_IB, omega_b, q, qdot, cfg):
    r_b = mount_offset(q, cfg)
    v_m = jacobian(q, cfg) @ _q(qdot)
    return np.asarray(v_b, dtype=float) + R_IB @ (np.cross(omega_b, r_b) + cfg.R_BM @ v_m)


def desired_endpoint_body_velocity(v_end_d, v_b, R_IB, omega_b, q, cfg):
    """Tip velocity in M that realises the world velocity ``v_end_d``.

    Removes the vehicle's own translation and rotation so the tip stays on
    target while the body floats.
    """
    r_b = mount_offset(q, cfg)
    v_body = R_IB.T @ (np.asarray(v_end_d, dtype=float) - v_b) - np.cross(omega_b, r_b)
    return cfg.R_BM.T @ v_body


def in_workspace(p, ws):
    """Task-workspace membership of a point expressed in M (metres)."""
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        return False
    if not (-ws.h <= p[2] <= 0.0):
        return False
    radial = np.hypot(p[0], p[1])
    r = radial if ws.radius == "section" else float(np.linalg.norm(p))
    if not (ws.r_min <= r <= ws.r_max):
        return False
    if radial == 0.0:
        return False
    bearing = np.arctan2(p[1], p[0])
    return bool(abs(bearing) <= 0.5 * ws.alpha)
