"""Quadrotor rigid-body dynamics with the arm treated as a moving-mass disturbance.

The arm enters the body equations only through the composite centre of mass
``r_com`` and the arm inertia ``I_m`` (both about the body origin, frame B)
and their time derivatives.  Inertial frame is NED.
"""
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels as K
from .spatial import E3

GRAVITY = 9.81


class ThrustOutOfRange(ValueError):
    pass


def rod_inertia(mass, length, radius):
    """Solid cylinder about its centre, axis along local x."""
    axial = 0.5 * mass * radius ** 2
    trans = mass * (3.0 * radius ** 2 + length ** 2) / 12.0
    return np.diag([axial, trans, trans])


def _default_link_masses():
    arm = np.array([0.100, 0.400, 0.200])
    return np.append(2.0 * arm / arm.sum(), 1.5)


@dataclass
class InertiaModel:
    """Mass properties.  Defaults: 35 kg system, 3.5 kg arm + torch."""
    m_s: float = 35.0
    link_masses: np.ndarray = field(default_factory=_default_link_masses)
    link_radius: float = 0.02
    I_b: np.ndarray = field(default_factory=lambda: np.diag([1.2, 1.2, 2.0]))
    g: float = GRAVITY
    F_max: float = 40.0 * GRAVITY
    link_inertia: np.ndarray = None  # (4, 3, 3) about each link CoM, link axes

    def __post_init__(self):
        self.link_masses = np.asarray(self.link_masses, dtype=float)
        self.I_b = np.asarray(self.I_b, dtype=float)
        if np.any(self.link_masses < 0.0) or self.m_s <= self.m_m:
            raise ValueError("need m_s > sum(link masses) >= 0")
        if not np.allclose(self.I_b, self.I_b.T) or np.min(np.linalg.eigvalsh(self.I_b)) <= 0.0:
            raise ValueError("I_b must be symmetric positive definite")

    @property
    def m_m(self):
        return float(self.link_masses.sum())

    def local_inertia(self, cfg):
        if self.link_inertia is not None:
            return np.asarray(self.link_inertia, dtype=float)
        key = (tuple(self.link_masses), self.link_radius, tuple(cfg.lengths))
        cache = self.__dict__.setdefault("_inertia_cache", {})
        if key not in cache:
            cache[key] = np.stack([rod_inertia(m, L, self.link_radius) for m, L in zip(self.link_masses, cfg.lengths)])
        return cache[key]


@dataclass
class QuadrotorState:
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))      # I, m
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))      # I, m/s
    R: np.ndarray = field(default_factory=lambda: np.eye(3))        # R_IB
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))  # B, rad/s

    def to_vector(self):
        return np.concatenate([self.p, self.v, np.asarray(self.R).reshape(9), self.omega]).astype(float)

    @classmethod
    def from_vector(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(x[0:3].copy(), x[3:6].copy(), x[6:15].reshape(3, 3).copy(), x[15:18].copy())


class CouplingDisturbance(NamedTuple):
    F_dis: np.ndarray    # I, N
    tau_dis: np.ndarray  # B, N m

    @classmethod
    def zero(cls):
        return cls(np.zeros(3), np.zeros(3))


class StateDerivative(NamedTuple):
    p_dot: np.ndarray
    v_dot: np.ndarray
    R_dot: np.ndarray
    omega_dot: np.ndarray


class ArmMotion(NamedTuple):
    """Joint trajectory over one step: q(t) = q + qd t + qdd t^2 / 2."""
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray


def _composite(q, qd, qdd, model, cfg):
    return K.arm_composite(np.asarray(q, float), np.asarray(qd, float), np.asarray(qdd, float),
                           cfg.lengths, cfg.beta, cfg.R_BM, cfg.p_BM, model.link_masses, model.local_inertia(cfg))


def system_com(q, model, cfg):
    """Composite CoM of body + arm in B (body mass sits at the origin)."""
    z = np.zeros(3)
    return _composite(q, z, z, model, cfg)[0] / model.m_s


def manipulator_inertia_body(q, model, cfg):
    z = np.zeros(3)
    return _composite(q, z, z, model, cfg)[3]


def com_derivatives(q, qd, qdd, model, cfg):
    """(d r_com/dt, d^2 r_com/dt^2) in B along the joint trajectory."""
    _, m_rd, m_rdd, _, _ = _composite(q, qd, qdd, model, cfg)
    return m_rd / model.m_s, m_rdd / model.m_s


def inertia_rate(q, qd, model, cfg):
    z = np.zeros(3)
    return _composite(q, qd, z, model, cfg)[4]


def coupling_force(state, q, qd, qdd, model, cfg, omega_dot=None):
    """F_dis in I.  ``omega_dot`` is the body angular acceleration (previous step)."""
    wd = np.zeros(3) if omega_dot is None else np.asarray(omega_dot, float)
    m_r, m_rd, m_rdd, _, _ = _composite(q, qd, qdd, model, cfg)
    m_s = model.m_s
    return K.coupling_force_terms(state.R, np.asarray(state.omega, float), wd,
                                  m_r / m_s, m_rd / m_s, m_rdd / m_s, m_s)


def coupling_torque(state, v_dot, q, qd, qdd, model, cfg, omega_dot=None, literal_third=False):
    """tau_dis in B.

    The third term uses the inertia rate, ``-dI_m/dt omega``; set
    ``literal_third`` for the ``-I_m omega`` form.
    """
    wd = np.zeros(3) if omega_dot is None else np.asarray(omega_dot, float)
    m_r, m_rd, m_rdd, i_m, i_m_dot = _composite(q, qd, qdd, model, cfg)
    m_s = model.m_s
    return K.coupling_torque_terms(state.R, np.asarray(state.omega, float), wd, np.asarray(v_dot, float),
                                   m_r / m_s, m_rd / m_s, m_rdd / m_s, i_m, i_m_dot,
                                   m_s, model.m_m, model.g, literal_third)


def disturbance_feedforward(R_IB, omega, q, qd, qdd, model, cfg, literal_third=False):
    """Arm disturbance predicted from the arm state alone.

    Evaluates the coupling force and torque with zero body accelerations, so
    only the static CoM offset, gravity moment, arm motion and gyroscopic
    terms remain.  The acceleration-proportional terms act like extra body
    inertia and are left to the feedback loop.
    """
    m_r, m_rd, m_rdd, i_m, i_m_dot = _composite(q, qd, qdd, model, cfg)
    m_s = model.m_s
    z3 = np.zeros(3)
    R = np.asarray(R_IB, float)
    w = np.asarray(omega, float)
    f = K.coupling_force_terms(R, w, z3, m_r / m_s, m_rd / m_s, m_rdd / m_s, m_s)
    t = K.coupling_torque_terms(R, w, z3, z3, m_r / m_s, m_rd / m_s, m_rdd / m_s, i_m, i_m_dot,
                                m_s, model.m_m, model.g, literal_third)
    return CouplingDisturbance(f, t)


def _check_thrust(F, model):
    if not (0.0 <= F <= model.F_max):
        raise ThrustOutOfRange(f"thrust {F:.3f} N outside [0, {model.F_max:.1f}]")


def quadrotor_derivative(state, F, tau, dist, wind, model):
    """Rigid-body equations with a given (fixed) disturbance and wind force."""
    _check_thrust(F, model)
    x = state.to_vector()
    v_dot, w_dot, _, _ = K.accelerations(
        x, float(F), np.asarray(tau, float), np.asarray(wind, float),
        np.asarray(dist.F_dis, float), np.asarray(dist.tau_dis, float), model.m_s, model.g, model.I_b,
        False, np.zeros(3), np.zeros(3), np.zeros(3), np.zeros((3, 3)), np.zeros((3, 3)), 0.0, False)
    return StateDerivative(state.v.copy(), v_dot, state.R @ K.skew3(state.omega), w_dot)


class StepInfo(NamedTuple):
    disturbance: CouplingDisturbance
    v_dot: np.ndarray
    omega_dot: np.ndarray


class Plant:
    """Packed-array integrator used by the simulation loop.

    With an ``ArmMotion`` the disturbance is evaluated at every RK stage from
    the arm trajectory, and its dependence on the body accelerations is
    solved exactly rather than lagged.
    """

    def __init__(self, model, cfg, literal_third=False):
        self.model = model
        self.cfg = cfg
        self.literal_third = bool(literal_third)
        self._inertia_local = model.local_inertia(cfg)
        self._z3 = np.zeros(3)

    def step(self, x, dt, F, tau, wind=None, arm=None, dist=None):
        if not (0.0 < dt <= 0.01):
            raise ValueError("dt must lie in (0, 0.01]")
        _check_thrust(F, self.model)
        m = self.model
        z3 = self._z3
        wind = z3 if wind is None else np.asarray(wind, float)
        f_ext, t_ext = (z3, z3) if dist is None else (np.asarray(dist.F_dis, float), np.asarray(dist.tau_dis, float))
        if arm is None:
            arm_on, q, qd, qdd = False, z3, z3, z3
        else:
            arm_on, q, qd, qdd = True, np.asarray(arm.q, float), np.asarray(arm.qd, float), np.asarray(arm.qdd, float)
        xn, f_dis, t_dis, v_dot, w_dot = K.rk4_step(
            x, dt, float(F), np.asarray(tau, float), wind, f_ext, t_ext, m.m_s, m.g, m.I_b, arm_on,
            q, qd, qdd, self.cfg.lengths, self.cfg.beta, self.cfg.R_BM, self.cfg.p_BM,
            m.link_masses, self._inertia_local, m.m_m, self.literal_third)
        return xn, StepInfo(CouplingDisturbance(f_dis, t_dis), v_dot, w_dot)


class StepInputs(NamedTuple):
    F: float
    tau: np.ndarray
    wind: np.ndarray = np.zeros(3)
    dist: CouplingDisturbance = None
    arm: ArmMotion = None


def integrate_step(state, inputs, dt, model, cfg=None, literal_third=False):
    """Advance one fixed RK4 step; R is re-projected onto SO(3) afterwards."""
    if inputs.arm is not None and cfg is None:
        raise ValueError("arm motion needs a ManipulatorConfig")
    plant = Plant(model, cfg if cfg is not None else _NullCfg(), literal_third)
    xn, _ = plant.step(state.to_vector(), dt, inputs.F, inputs.tau, inputs.wind, inputs.arm, inputs.dist)
    return QuadrotorState.from_vector(xn)


class _NullCfg:
    lengths = np.ones(4)
    beta = 0.0
    R_BM = np.eye(3)
    p_BM = np.zeros(3)


def propagate_free(state, F, tau, model, dt, n_steps, wind=None, dist=None):
    """Constant-input integration of the arm-free body, looped inside the kernel."""
    z3 = np.zeros(3)
    f_ext, t_ext = (z3, z3) if dist is None else (np.asarray(dist.F_dis, float), np.asarray(dist.tau_dis, float))
    x = K.propagate(state.to_vector(), float(dt), int(n_steps), float(F), np.asarray(tau, float),
                    z3 if wind is None else np.asarray(wind, float), f_ext, t_ext, model.m_s, model.g, model.I_b)
    return QuadrotorState.from_vector(x)


def hover_thrust(model):
    return model.m_s * model.g


__all__ = [
    "GRAVITY", "E3", "InertiaModel", "QuadrotorState", "CouplingDisturbance", "ArmMotion", "StepInputs",
    "Plant", "system_com", "manipulator_inertia_body", "com_derivatives", "inertia_rate", "coupling_force",
    "coupling_torque", "disturbance_feedforward", "quadrotor_derivative", "integrate_step", "propagate_free",
    "ThrustOutOfRange",
]
