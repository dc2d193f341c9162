"""Cascade flight controller: position PID -> desired attitude -> attitude PD.

Sign conventions (NED, thrust along -z_B):

* ``a_d`` is the specific-thrust vector the rotors must produce, so at hover
  ``a_d = g e3`` and the desired body z axis is ``a_d / |a_d|``.
* position error ``e_p = p_d - p_b``;
  ``a_d = -Kp e_p - Ki int(e_p) - Kd de_p + g e3 + F_dis / m_s``;
  ``F_d = m_s a_d . (R e3)``.
* attitude torque ``tau_d = -KpR e_R - KdR e_w - tau_dis``: the plant adds
  ``+tau_dis``, so the feed-forward removes it.
"""
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels as K
from .spatial import E3


class DegenerateAttitude(ValueError):
    pass


def _diag3(v):
    v = np.asarray(v, dtype=float)
    return np.diag(v).copy() if v.ndim == 2 else np.broadcast_to(v, (3,)).copy()


@dataclass
class PositionGains:
    k_p: np.ndarray = field(default_factory=lambda: np.array([4.0, 4.0, 6.0]))
    k_i: np.ndarray = field(default_factory=lambda: np.array([2.0, 2.0, 3.0]))
    k_d: np.ndarray = field(default_factory=lambda: np.array([4.5, 4.5, 5.5]))
    integral_limit: np.ndarray = field(default_factory=lambda: np.array([3.0, 3.0, 2.0]))

    def __post_init__(self):
        self.k_p, self.k_i, self.k_d = _diag3(self.k_p), _diag3(self.k_i), _diag3(self.k_d)
        self.integral_limit = _diag3(self.integral_limit)
        if np.any(self.k_p <= 0) or np.any(self.k_i <= 0) or np.any(self.k_d <= 0):
            raise ValueError("position gains must be positive")


@dataclass
class AttitudeGains:
    k_pR: np.ndarray = field(default_factory=lambda: np.array([800.0, 800.0, 400.0]))
    k_dR: np.ndarray = field(default_factory=lambda: np.array([70.0, 70.0, 50.0]))

    def __post_init__(self):
        self.k_pR, self.k_dR = _diag3(self.k_pR), _diag3(self.k_dR)
        if np.any(self.k_pR <= 0) or np.any(self.k_dR <= 0):
            raise ValueError("attitude gains must be positive")


@dataclass
class ControlLimits:
    F_max: float = 40.0 * 9.81
    tau_max: np.ndarray = field(default_factory=lambda: np.full(3, 60.0))
    accel_floor: float = 1.0

    def __post_init__(self):
        self.tau_max = _diag3(self.tau_max)


class PositionOutput(NamedTuple):
    a_d: np.ndarray
    F_d: float
    integral: np.ndarray
    saturated: bool


class ControlCommand(NamedTuple):
    F_d: float
    tau_d: np.ndarray
    a_d: np.ndarray


def position_control(p_b, v_b, p_d, pdot_d, integral, dt, F_dis, gains, m_s, R_IB,
                     g=9.81, limits=None, integrate=True):
    """One position-loop update; returns the new (clamped) integral state.

    With ``integrate=False`` the integral is held (used while the reference is
    moving so ramp-following lag does not wind it up).
    """
    limits = ControlLimits() if limits is None else limits
    e_p = np.asarray(p_d, float) - p_b
    e_v = np.asarray(pdot_d, float) - v_b
    integral = np.asarray(integral, float)
    if integrate:
        integral = np.clip(integral + e_p * dt, -gains.integral_limit, gains.integral_limit)
    a_d = -gains.k_p * e_p - gains.k_i * integral - gains.k_d * e_v + g * E3 + np.asarray(F_dis, float) / m_s
    F = m_s * float(a_d @ R_IB[:, 2])
    F_clamped = min(max(F, 0.0), limits.F_max)
    return PositionOutput(a_d, F_clamped, integral, F_clamped != F)


def desired_attitude(a_d, psi_d, accel_floor=1.0, eps=1e-6):
    """Rotation whose z column is along ``a_d`` with heading ``psi_d``.

    Columns are the desired body axes expressed in I.
    """
    a_d = np.asarray(a_d, dtype=float)
    n = np.linalg.norm(a_d)
    if n < accel_floor:
        a_d = (a_d / n if n > 0.0 else E3) * accel_floor
        n = accel_floor
    z = a_d / n
    x_tilde = np.array([np.cos(psi_d), np.sin(psi_d), 0.0])
    y = np.cross(z, x_tilde)
    ny = np.linalg.norm(y)
    if ny < eps:
        raise DegenerateAttitude("thrust axis parallel to the heading reference")
    y = y / ny
    x = np.cross(y, z)
    return np.column_stack([x, y, z])


def attitude_error(R_IB, R_d):
    """e_R = 1/2 vee(R_d^T R - R^T R_d)."""
    return K.attitude_error_kernel(np.asarray(R_IB, float), np.asarray(R_d, float))


def attitude_control(e_R, e_w, tau_dis, gains, limits=None):
    limits = ControlLimits() if limits is None else limits
    tau = -gains.k_pR * np.asarray(e_R, float) - gains.k_dR * np.asarray(e_w, float) - np.asarray(tau_dis, float)
    return np.clip(tau, -limits.tau_max, limits.tau_max)


class CascadeController:
    """Stateful cascade used by the simulator (integral + held set-points)."""

    def __init__(self, pos_gains, att_gains, m_s, limits=None, g=9.81, compensate=True):
        self.pos_gains = pos_gains
        self.att_gains = att_gains
        self.m_s = m_s
        self.g = g
        self.limits = ControlLimits() if limits is None else limits
        self.compensate = compensate
        self.integral = np.zeros(3)
        self.a_d = g * E3
        self.F_d = m_s * g
        self.R_d = np.eye(3)
        self.e_p = np.zeros(3)
        self.e_R = np.zeros(3)
        self.tau_d = np.zeros(3)
        self.thrust_saturated = False

    def update_position(self, p_b, v_b, R_IB, p_d, psi_d, dt, F_dis, pdot_d=None, integrate=True):
        F_ff = F_dis if self.compensate else np.zeros(3)
        out = position_control(p_b, v_b, p_d, np.zeros(3) if pdot_d is None else pdot_d, self.integral, dt,
                               F_ff, self.pos_gains, self.m_s, R_IB, self.g, self.limits, integrate)
        self.integral = out.integral
        self.a_d = out.a_d
        self.F_d = out.F_d
        self.thrust_saturated = out.saturated
        self.e_p = np.asarray(p_d, float) - p_b
        self.R_d = desired_attitude(out.a_d, psi_d, self.limits.accel_floor)

    def update_thrust(self, R_IB):
        """Re-project the held a_d on the current body z axis."""
        F = self.m_s * float(self.a_d @ R_IB[:, 2])
        self.F_d = min(max(F, 0.0), self.limits.F_max)

    def update_attitude(self, R_IB, omega, tau_dis):
        comp = -np.asarray(tau_dis, float) if self.compensate else np.zeros(3)
        tau, e_r, _ = K.attitude_law(R_IB, np.asarray(omega, float), self.R_d, np.zeros(3),
                                     self.att_gains.k_pR, self.att_gains.k_dR, comp, self.limits.tau_max)
        self.tau_d = tau
        self.e_R = e_r
        return tau

    def command(self):
        return ControlCommand(self.F_d, self.tau_d.copy(), self.a_d.copy())
