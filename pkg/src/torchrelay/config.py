"""Scenario files.

A scenario is one JSON document with a mandatory ``schema_version``.  Arm and
workspace geometry are given in millimetres and degrees (keys carry the unit
suffix); everything else is SI.  Missing keys fall back to ``DEFAULTS``.
"""
import copy
import json
from dataclasses import dataclass
from importlib import resources

import jsonschema
import numpy as np

from .control import AttitudeGains, ControlLimits, PositionGains
from .dynamics import InertiaModel
from .kinematics import ManipulatorConfig, Workspace, in_workspace, position_ik
from .spatial import rot_x, rot_y, rot_yaw
from .task import FloatingPlatform, OperatingReference, TaskParams
from .vision import CameraModel, MarkerSet, default_markers, mount_rotation

SCHEMA_VERSION = 1
H_OFF = {"get_fire": 0.10, "make_fire": 0.05}


class ConfigInvalid(ValueError):
    pass


DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "name": "nominal",
    "kind": "task",
    "mode": {"base": "floating", "task": "get_fire"},
    "seed": 0,
    "duration_s": 90.0,
    "rates_hz": {"physics": 500, "attitude": 500, "position": 100, "manipulator": 100, "vision": 25, "task": 10},
    "manipulator": {
        "d_mm": 300.0, "L1_mm": 100.0, "L2_mm": 400.0, "L3_mm": 200.0, "L4_mm": 530.0,
        "alpha_deg": 135.0, "phi_c_deg": -30.0, "theta_c_deg": -60.0,
        "mount_rpy_deg": [0.0, 0.0, 0.0],
        "joint_limit_deg": 90.0, "rate_limit_rad_s": 2.0, "accel_limit_rad_s2": 20.0,
        "fire_point_mm": [800.0, 0.0, -300.0],
        "endpoint_gain": 10.0, "ready_gain": 3.0,
        "damping_mm": None, "sigma_threshold": 1e-3,
    },
    "workspace": {"h_mm": 700.0, "alpha_deg": 40.0, "r_min_mm": 650.0, "r_max_mm": 950.0, "radius": "section"},
    "inertia": {
        "m_s_kg": 35.0, "link_masses_kg": [0.2857142857142857, 1.1428571428571428, 0.5714285714285714, 1.5],
        "link_radius_m": 0.02, "I_b_kgm2": [1.2, 1.2, 2.0], "g_m_s2": 9.81,
    },
    "control": {
        "kp": [4.0, 4.0, 6.0], "ki": [2.0, 2.0, 3.0], "kd": [4.5, 4.5, 5.5], "integral_limit": [3.0, 3.0, 2.0],
        "kpR": [800.0, 800.0, 400.0], "kdR": [70.0, 70.0, 50.0],
        "F_max_N": 392.4, "tau_max_Nm": [60.0, 60.0, 60.0], "accel_floor_m_s2": 1.0,
        "compensation": True, "literal_inertia_term": False,
        "max_ref_speed_m_s": 0.8, "max_ref_climb_m_s": 0.4, "max_ref_accel_m_s2": 0.5,
    },
    "camera": {
        "fx": 1000.0, "fy": 1000.0, "cx": 640.0, "cy": 512.0, "width": 1280, "height": 1024,
        "mount_position_m": [0.50, 0.60, 0.20], "rms_threshold_px": 3.0, "latency_frames": 1,
    },
    "markers_m": default_markers().tolist(),
    "noise": {
        "position_m": 0.01, "velocity_m_s": 0.02, "attitude_rad": 0.002, "gyro_rad_s": 0.005,
        "pixel_px": 1.0, "swap_prob": 0.0,
    },
    "wind": {"mean_N": [0.0, 0.0, 0.0], "gust_N": 2.0, "gust_period_s": 8.0},
    "target": {
        "tip_position_m": [4.0, 1.0, -2.2], "yaw_deg": 10.0,
        "platform": {"amplitude_m": 0.05, "omega_rad_s": 0.6283185307179586, "swing_gain_rad_per_m": 3.5,
                     "swing_axis_deg": 45.0, "pivot_depth_m": 0.5},
    },
    "task": {
        "h_off_m": None, "psi_t_star_deg": 0.0, "takeoff_altitude_m": 2.0, "global_timeout_s": 80.0,
        "lighting_timeout_s": 30.0, "valid_hold_s": 1.0, "workspace_hold_s": 2.0, "confirm_s": 1.0,
        "settle_tolerance_m": 0.05, "settle_speed_m_s": 0.1, "retreat_distance_m": 1.5,
    },
    "ignition": {
        "radius_m": 0.03, "dwell_s": 1.5, "lit_temperature_C": 300.0,
        "get_fire": {"dwell_factor": 1.0, "hazard_per_s": 0.0, "hazard_per_speed": 0.0},
        "make_fire": {"dwell_factor": 0.25, "hazard_per_s": 0.28, "hazard_per_speed": 3.5},
    },
    "sweep": {"amplitude_rad": [0.4, 0.35, 0.35], "frequency_hz": [0.23, 0.31, 0.41], "settle_s": 5.0,
              "duration_s": 25.0, "altitude_m": 2.0},
    "initial": {"position_m": [1.5, 0.5, 0.0], "yaw_deg": 0.0},
    "telemetry": {"decimation": 1},
}


def load_schema():
    text = resources.files("torchrelay").joinpath("data/scenario.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _divides(a, b):
    return b % a == 0


@dataclass
class Rates:
    physics: int
    attitude: int
    position: int
    manipulator: int
    vision: int
    task: int

    def every(self, name):
        """Physics ticks between updates of loop ``name``."""
        return self.physics // getattr(self, name)


@dataclass
class ScenarioConfig:
    raw: dict
    name: str
    kind: str
    base: str
    task_mode: str
    seed: int
    duration: float
    rates: Rates
    manipulator: ManipulatorConfig
    workspace: Workspace
    inertia: InertiaModel
    position_gains: PositionGains
    attitude_gains: AttitudeGains
    limits: ControlLimits
    camera: CameraModel
    markers: MarkerSet
    platform: FloatingPlatform
    reference: OperatingReference
    task: TaskParams
    q_ready: np.ndarray

    @property
    def compensation(self):
        return bool(self.raw["control"]["compensation"])

    def to_dict(self):
        return copy.deepcopy(self.raw)

    def with_overrides(self, **sections):
        """New config with nested dict overrides merged in."""
        return build_config(_merge(self.raw, sections))


def validate(data):
    """Schema + semantic validation; raises ConfigInvalid."""
    if not isinstance(data, dict):
        raise ConfigInvalid("scenario must be a JSON object")
    if "schema_version" not in data:
        raise ConfigInvalid("missing schema_version")
    if data["schema_version"] != SCHEMA_VERSION:
        raise ConfigInvalid(f"unsupported schema_version {data['schema_version']!r}")
    try:
        jsonschema.validate(data, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigInvalid(f"{where}: {exc.message}") from None
    full = _merge(DEFAULTS, data)
    r = full["rates_hz"]
    chain = ["vision", "position", "attitude", "physics"]
    for lo, hi in zip(chain, chain[1:]):
        if not _divides(r[lo], r[hi]):
            raise ConfigInvalid(f"{lo} rate {r[lo]} Hz must divide {hi} rate {r[hi]} Hz")
    for name in ("manipulator", "task"):
        if not _divides(r[name], r["physics"]):
            raise ConfigInvalid(f"{name} rate {r[name]} Hz must divide physics rate {r['physics']} Hz")
    if not _divides(r["vision"], r["manipulator"]):
        raise ConfigInvalid("vision rate must divide manipulator rate")
    inert = full["inertia"]
    if sum(inert["link_masses_kg"]) >= inert["m_s_kg"]:
        raise ConfigInvalid("arm mass must be smaller than the system mass")
    return full


def build_config(data):
    full = validate(data)
    try:
        return _build(full)
    except ConfigInvalid:
        raise
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from None


def _build(full):
    m = full["manipulator"]
    rpy = np.deg2rad(m["mount_rpy_deg"])
    R_BM = rot_yaw(rpy[2]) @ rot_y(rpy[1]) @ rot_x(rpy[0])
    cfg = ManipulatorConfig.from_table(
        d=m["d_mm"], L1=m["L1_mm"], L2=m["L2_mm"], L3=m["L3_mm"], L4=m["L4_mm"],
        alpha=m["alpha_deg"], phi_c=m["phi_c_deg"], theta_c=m["theta_c_deg"], R_BM=R_BM,
        joint_limit=np.deg2rad(m["joint_limit_deg"]), rate_limit=m["rate_limit_rad_s"],
        accel_limit=m["accel_limit_rad_s2"])
    w = full["workspace"]
    ws = Workspace.from_table(w["h_mm"], w["alpha_deg"], w["r_min_mm"], w["r_max_mm"], w["radius"])
    i = full["inertia"]
    inertia = InertiaModel(m_s=i["m_s_kg"], link_masses=np.array(i["link_masses_kg"]),
                           link_radius=i["link_radius_m"], I_b=np.diag(i["I_b_kgm2"]), g=i["g_m_s2"],
                           F_max=full["control"]["F_max_N"])
    c = full["control"]
    pos = PositionGains(np.array(c["kp"]), np.array(c["ki"]), np.array(c["kd"]), np.array(c["integral_limit"]))
    att = AttitudeGains(np.array(c["kpR"]), np.array(c["kdR"]))
    lim = ControlLimits(c["F_max_N"], np.array(c["tau_max_Nm"]), c["accel_floor_m_s2"])
    cam = full["camera"]
    camera = CameraModel(cam["fx"], cam["fy"], cam["cx"], cam["cy"], cam["width"], cam["height"],
                         mount_rotation(cfg.phi_c, cfg.theta_c), np.array(cam["mount_position_m"]),
                         pixel_sigma=full["noise"]["pixel_px"])
    markers = MarkerSet(np.array(full["markers_m"]))
    mode = full["mode"]
    tgt = full["target"]
    pl = tgt["platform"]
    amplitude = pl["amplitude_m"] if mode["base"] == "floating" else 0.0
    platform = FloatingPlatform(amplitude, pl["omega_rad_s"], pl["swing_gain_rad_per_m"],
                                np.deg2rad(pl["swing_axis_deg"]), pl["pivot_depth_m"],
                                np.array(tgt["tip_position_m"]), np.deg2rad(tgt["yaw_deg"]))
    t = full["task"]
    h_off = H_OFF[mode["task"]] if t["h_off_m"] is None else t["h_off_m"]
    fire_m = np.array(m["fire_point_mm"]) / 1000.0
    if not in_workspace(fire_m, ws):
        raise ConfigInvalid("nominal fire point lies outside the task workspace")
    ref = OperatingReference.for_fire_point(fire_m, cfg, h_off, np.deg2rad(t["psi_t_star_deg"]))
    q_ready = position_ik(fire_m, cfg)
    params = TaskParams(
        takeoff_altitude=t["takeoff_altitude_m"], valid_hold=t["valid_hold_s"],
        settle_tolerance=t["settle_tolerance_m"], settle_speed=t["settle_speed_m_s"],
        workspace_hold=t["workspace_hold_s"], lighting_timeout=t["lighting_timeout_s"], confirm_hold=t["confirm_s"],
        lit_temperature=full["ignition"]["lit_temperature_C"], retreat_distance=t["retreat_distance_m"],
        global_timeout=t["global_timeout_s"])
    r = full["rates_hz"]
    rates = Rates(r["physics"], r["attitude"], r["position"], r["manipulator"], r["vision"], r["task"])
    return ScenarioConfig(full, full["name"], full["kind"], mode["base"], mode["task"], int(full["seed"]),
                          float(full["duration_s"]), rates, cfg, ws, inertia, pos, att, lim, camera, markers,
                          platform, ref, params, q_ready)


def default_config(**sections):
    return build_config(_merge({"schema_version": SCHEMA_VERSION}, sections))


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None
    except OSError as exc:
        raise ConfigInvalid(f"{path}: {exc.strerror}") from None
    return build_config(data)
