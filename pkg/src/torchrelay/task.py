"""Hovering set-points, the floating target, the torch surrogate and the task state machine."""
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .kinematics import in_workspace
from .spatial import E3, axis_angle, rot_yaw, wrap_angle, yaw_of


class InvalidObservation(ValueError):
    pass


class TaskState(IntEnum):
    IDLE = 0
    TAKEOFF = 1
    APPROACH = 2
    VISUAL_SERVO = 3
    LIGHTING = 4
    CONFIRM_LIT = 5
    RETREAT = 6
    LAND = 7
    ABORTED = 8

    @property
    def label(self):
        return _LABELS[self]


_LABELS = {
    TaskState.IDLE: "Idle", TaskState.TAKEOFF: "Takeoff", TaskState.APPROACH: "Approach",
    TaskState.VISUAL_SERVO: "VisualServo", TaskState.LIGHTING: "Lighting", TaskState.CONFIRM_LIT: "ConfirmLit",
    TaskState.RETREAT: "Retreat", TaskState.LAND: "Land", TaskState.ABORTED: "Aborted",
}

# allowed transitions (self loops implied)
TRANSITIONS = {
    TaskState.IDLE: {TaskState.TAKEOFF, TaskState.ABORTED},
    TaskState.TAKEOFF: {TaskState.APPROACH, TaskState.ABORTED},
    TaskState.APPROACH: {TaskState.VISUAL_SERVO, TaskState.ABORTED},
    TaskState.VISUAL_SERVO: {TaskState.LIGHTING, TaskState.ABORTED},
    TaskState.LIGHTING: {TaskState.CONFIRM_LIT, TaskState.ABORTED},
    TaskState.CONFIRM_LIT: {TaskState.RETREAT, TaskState.ABORTED},
    TaskState.RETREAT: {TaskState.LAND, TaskState.ABORTED},
    TaskState.LAND: set(),
    TaskState.ABORTED: set(),
}


@dataclass
class OperatingReference:
    """Ideal target pose in B and the fire-point height offset."""
    p_t_star: np.ndarray = field(default_factory=lambda: np.array([1.1, 0.0, -0.2]))
    psi_t_star: float = 0.0
    h_off: float = 0.10

    def __post_init__(self):
        self.p_t_star = np.asarray(self.p_t_star, dtype=float)

    @classmethod
    def for_fire_point(cls, fire_point_m, cfg, h_off, psi_t_star=0.0):
        """Reference that puts the fire point at ``fire_point_m`` (frame M) in level hover."""
        p = cfg.p_BM + cfg.R_BM @ np.asarray(fire_point_m, float) + h_off * E3
        return cls(p, psi_t_star, h_off)


def fire_point_body(p_t_body, R_IB, h_off):
    """Target tip in B shifted by h_off against gravity."""
    return np.asarray(p_t_body, float) - h_off * (R_IB.T @ E3)


def hovering_setpoint(obs, p_b, R_IB, ref, level=False):
    """(psi_d, p_b_d, p_end_d) placing the observed target at its ideal pose.

    ``psi`` is the heading of ``R_IB``; the rotations in the position term use
    heading only, the fire-point term uses the full attitude.  With ``level``
    the observed position and heading are first expressed in the
    gravity-aligned heading frame, which removes the dependence of the
    set-point on the vehicle's own roll and pitch.  Both forms agree when the
    vehicle is level.
    """
    if obs is None or not obs.valid:
        raise InvalidObservation("target observation is not valid")
    p_b = np.asarray(p_b, float)
    p_t = np.asarray(obs.p_t_body, float)
    psi = yaw_of(R_IB)
    psi_t = obs.psi_t_body
    if level:
        R_h = rot_yaw(psi)
        p_t_lvl = R_h.T @ R_IB @ p_t
        if obs.R_BT is not None:
            psi_t = wrap_angle(yaw_of(R_IB @ obs.R_BT) - psi)
    else:
        p_t_lvl = p_t
    psi_d = psi + psi_t - ref.psi_t_star
    p_b_d = p_b + rot_yaw(psi) @ p_t_lvl - rot_yaw(psi_d) @ ref.p_t_star
    p_end_d = p_b + R_IB @ p_t - ref.h_off * E3
    return psi_d, p_b_d, p_end_d


# --------------------------------------------------------------------------
# floating target
# --------------------------------------------------------------------------
@dataclass
class FloatingPlatform:
    """End-effector motion of the 3-RPS platform.

    The pivot rises by ``amplitude sin(omega t)`` and the platform tilts about a
    horizontal axis (bearing ``swing_axis`` in I) by ``swing_gain * height``;
    the torch tip sits ``pivot_depth`` above the pivot.
    """
    amplitude: float = 0.05
    omega: float = np.pi / 5.0
    swing_gain: float = 3.5
    swing_axis: float = np.pi / 4.0
    pivot_depth: float = 0.5
    tip_position: np.ndarray = field(default_factory=lambda: np.array([4.0, 1.0, -2.2]))
    yaw: float = 0.0

    def __post_init__(self):
        self.tip_position = np.asarray(self.tip_position, dtype=float)
        if self.amplitude < 0.0:
            raise ValueError("amplitude must be non-negative")
        if self.pivot_depth < 0.0:
            raise ValueError("pivot depth must be non-negative")


class PlatformPose(NamedTuple):
    tip: np.ndarray     # torch tip in I
    R_IT: np.ndarray    # target frame
    height: float       # pivot height offset (up positive)
    tilt: float


def platform_height(t, platform):
    return platform.amplitude * np.sin(platform.omega * t)


def platform_pose(t, platform):
    if t < 0.0:
        raise ValueError("t must be non-negative")
    h = platform_height(t, platform)
    tilt = platform.swing_gain * h
    axis = np.array([np.cos(platform.swing_axis), np.sin(platform.swing_axis), 0.0])
    R_tilt = axis_angle(axis, tilt)
    arm = np.array([0.0, 0.0, -platform.pivot_depth])
    pivot = platform.tip_position - arm - h * E3
    tip = pivot + R_tilt @ arm
    return PlatformPose(tip, R_tilt @ rot_yaw(platform.yaw), float(h), float(tilt))


# --------------------------------------------------------------------------
# torch surrogate
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class TorchModel:
    """Proximity-dwell flame transfer with a thermocouple-like temperature signal.

    ``dwell_factor`` scales the accumulation rate; ``hazard`` (1/s) and
    ``hazard_speed`` (1/s per m/s of fire-point speed) set the rate at which a
    flicker resets the accumulated dwell.
    """
    lit: bool = False
    gas_level: float = 1.0
    ignition_radius: float = 0.03
    dwell_required: float = 1.5
    dwell: float = 0.0
    dwell_factor: float = 1.0
    hazard: float = 0.0
    hazard_speed: float = 0.0
    temperature: float = 0.0
    ambient: float = 0.0
    flame_temperature: float = 800.0
    thermal_tau: float = 0.3
    gas_rate: float = 0.0


def ignition_check(p_end, fire_point, torch, dt, rng=None, fire_speed=0.0):
    """Advance the torch surrogate by ``dt``."""
    gas = max(0.0, torch.gas_level - torch.gas_rate * dt)
    target_t = torch.flame_temperature if torch.lit else torch.ambient
    temp = torch.temperature + (target_t - torch.temperature) * (1.0 - np.exp(-dt / torch.thermal_tau))
    if torch.lit:
        return replace(torch, temperature=temp, gas_level=gas)
    dist = float(np.linalg.norm(np.asarray(p_end, float) - np.asarray(fire_point, float)))
    dwell = 0.0
    if dist <= torch.ignition_radius and gas > 0.0:
        dwell = torch.dwell + dt * torch.dwell_factor
        rate = torch.hazard + torch.hazard_speed * fire_speed
        if rng is not None and rate > 0.0 and rng.random() < 1.0 - np.exp(-rate * dt):
            dwell = 0.0
    lit = dwell >= torch.dwell_required
    return replace(torch, lit=lit, dwell=dwell, temperature=temp, gas_level=gas)


# --------------------------------------------------------------------------
# state machine
# --------------------------------------------------------------------------
@dataclass
class TaskParams:
    takeoff_altitude: float = 2.0
    takeoff_tolerance: float = 0.15
    speed_tolerance: float = 0.3
    valid_hold: float = 1.0
    settle_tolerance: float = 0.05
    settle_speed: float = 0.1
    workspace_hold: float = 2.0
    lighting_timeout: float = 30.0
    confirm_hold: float = 1.0
    lit_temperature: float = 300.0
    retreat_distance: float = 1.5
    retreat_tolerance: float = 0.15
    land_height: float = 0.05
    global_timeout: float = 120.0
    obs_max_age: float = 0.25
    setpoint_filter: float = 0.5
    level_setpoint: bool = True


class Sensors(NamedTuple):
    p_b: np.ndarray
    v_b: np.ndarray
    R_IB: np.ndarray
    obs: object          # latest TargetObservation or None
    temperature: float
    obs_pose: tuple = None  # measured (p_b, R_IB) when the frame was captured


class TaskOutput(NamedTuple):
    state: TaskState
    p_d: np.ndarray
    psi_d: float
    arm_mode: str        # "ready" or "track"
    done: bool


class TaskMachine:
    """Deterministic mission executive stepped at the task rate."""

    def __init__(self, params, ref, cfg, ws, approach_point, approach_yaw, home=None, home_yaw=0.0):
        self.params = params
        self.ref = ref
        self.cfg = cfg
        self.ws = ws
        self.approach_point = np.asarray(approach_point, float)
        self.approach_yaw = float(approach_yaw)
        self.home = None if home is None else np.asarray(home, float)
        self.home_yaw = float(home_yaw)
        self.state = TaskState.IDLE
        self.history = [TaskState.IDLE]
        self.entered = {TaskState.IDLE: 0.0}
        self.p_d = None
        self.psi_d = 0.0
        self.done = False
        self._valid_since = None
        self._ws_since = None
        self._lit_since = None
        self._retreat_point = None
        self._last_t = None

    def _go(self, new, t):
        if new not in TRANSITIONS[self.state]:
            raise RuntimeError(f"illegal transition {self.state.label} -> {new.label}")
        self.state = new
        self.history.append(new)
        self.entered[new] = t

    def _fresh(self, obs, t):
        return obs is not None and obs.valid and (t - obs.timestamp) <= self.params.obs_max_age

    def _visual_setpoint(self, sensors, t, reset=False):
        """Hovering set-point from the capture-time pose, low-pass filtered at the task rate."""
        p, R = sensors.obs_pose if sensors.obs_pose is not None else (sensors.p_b, sensors.R_IB)
        psi_d, p_d, _ = hovering_setpoint(sensors.obs, p, R, self.ref, self.params.level_setpoint)
        if reset or self._last_t is None or self.params.setpoint_filter <= 0.0:
            self.p_d, self.psi_d = p_d, psi_d
        else:
            a = min(1.0, (t - self._last_t) / (self.params.setpoint_filter + (t - self._last_t)))
            self.p_d = self.p_d + a * (p_d - self.p_d)
            self.psi_d = self.psi_d + a * wrap_angle(psi_d - self.psi_d)
        self._last_t = t

    def fire_point_in_workspace(self, obs, R_IB):
        p_fire_b = fire_point_body(obs.p_t_body, R_IB, self.ref.h_off)
        p_m = self.cfg.R_BM.T @ (p_fire_b - self.cfg.p_BM)
        return in_workspace(p_m, self.ws)

    def step(self, sensors, t):
        prm = self.params
        p, v, R = sensors.p_b, sensors.v_b, sensors.R_IB
        obs = sensors.obs
        if self.home is None:
            self.home = np.asarray(p, float).copy()
            self.home_yaw = yaw_of(R)
        if self.p_d is None:
            self.p_d = np.asarray(p, float).copy()
            self.psi_d = self.home_yaw
        if self.state in (TaskState.LAND, TaskState.ABORTED):
            if self.state == TaskState.LAND and p[2] > -prm.land_height and np.linalg.norm(v) < prm.speed_tolerance:
                self.done = True
            return self._out()
        if t >= prm.global_timeout:
            self._go(TaskState.ABORTED, t)
            self.p_d = np.asarray(p, float).copy()
            return self._out()
        st = self.state
        if st == TaskState.IDLE:
            self._go(TaskState.TAKEOFF, t)
            self.p_d = self.home - prm.takeoff_altitude * E3
            self.psi_d = self.home_yaw
        elif st == TaskState.TAKEOFF:
            if np.linalg.norm(p - self.p_d) < prm.takeoff_tolerance and np.linalg.norm(v) < prm.speed_tolerance:
                self._go(TaskState.APPROACH, t)
                self.p_d = self.approach_point.copy()
                self.psi_d = self.approach_yaw
        elif st == TaskState.APPROACH:
            if self._fresh(obs, t):
                if self._valid_since is None:
                    self._valid_since = t
                    self._visual_setpoint(sensors, t, reset=True)
                else:
                    self._visual_setpoint(sensors, t)
                settled = (np.linalg.norm(self.p_d - p) < prm.settle_tolerance
                           and np.linalg.norm(v) < prm.settle_speed)
                if t - self._valid_since >= prm.valid_hold - 1e-9 and settled:
                    self._go(TaskState.VISUAL_SERVO, t)
            else:
                self._valid_since = None
        elif st == TaskState.VISUAL_SERVO:
            if self._fresh(obs, t):
                self._visual_setpoint(sensors, t)
                if self.fire_point_in_workspace(obs, R):
                    if self._ws_since is None:
                        self._ws_since = t
                else:
                    self._ws_since = None
            else:
                self._ws_since = None
            if self._ws_since is not None and t - self._ws_since >= prm.workspace_hold - 1e-9:
                self._go(TaskState.LIGHTING, t)
        elif st == TaskState.LIGHTING:
            if sensors.temperature >= prm.lit_temperature:
                self._go(TaskState.CONFIRM_LIT, t)
                self._lit_since = t
            elif t - self.entered[TaskState.LIGHTING] >= prm.lighting_timeout - 1e-9:
                self._go(TaskState.ABORTED, t)
        elif st == TaskState.CONFIRM_LIT:
            if sensors.temperature < prm.lit_temperature:
                self._lit_since = t
            elif t - self._lit_since >= prm.confirm_hold - 1e-9:
                self._go(TaskState.RETREAT, t)
                back = rot_yaw(self.psi_d) @ np.array([-prm.retreat_distance, 0.0, 0.0])
                self.p_d = self.p_d + back
                self._retreat_point = self.p_d.copy()
        elif st == TaskState.RETREAT:
            if np.linalg.norm(p - self.p_d) < prm.retreat_tolerance:
                self._go(TaskState.LAND, t)
                self.p_d = np.array([self.p_d[0], self.p_d[1], 0.0])
        return self._out()

    def _out(self):
        track = self.state in (TaskState.VISUAL_SERVO, TaskState.LIGHTING)
        return TaskOutput(self.state, self.p_d.copy(), float(self.psi_d), "track" if track else "ready", self.done)


def step_task(machine, sensors, clock):
    return machine.step(sensors, clock)
