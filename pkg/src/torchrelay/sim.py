"""Fixed-step multirate simulation, telemetry, metrics and Monte Carlo batches."""
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import ConfigInvalid, ScenarioConfig, build_config, default_config
from .control import CascadeController
from .dynamics import ArmMotion, CouplingDisturbance, Plant, QuadrotorState, disturbance_feedforward
from .kinematics import default_damping, desired_endpoint_body_velocity, endpoint_world, inverse_velocity
from .spatial import E3, euler_zyx, exp_so3, rot_yaw, wrap_angle
from .task import (Sensors, TaskMachine, TaskState, TorchModel, fire_point_body, ignition_check,
                   platform_pose)
from .vision import (DegenerateConfiguration, TargetNotVisible, estimate_pose_epnp, invalid_observation,
                     observation_in_body, project_markers)

TELEMETRY_COLUMNS = [
    "t", "task_state",
    "p_x", "p_y", "p_z", "v_x", "v_y", "v_z", "roll", "pitch", "yaw", "w_x", "w_y", "w_z",
    "q1", "q2", "q3", "qd1", "qd2", "qd3",
    "pd_x", "pd_y", "pd_z", "psi_d",
    "ep_x", "ep_y", "ep_z", "e_yaw", "eR_x", "eR_y", "eR_z",
    "F_d", "tau_x", "tau_y", "tau_z",
    "end_x", "end_y", "end_z", "fire_x", "fire_y", "fire_z", "eend_x", "eend_y", "eend_z",
    "rel_x", "rel_y", "rel_z",
    "obs_valid", "obs_rms",
    "Fdis_x", "Fdis_y", "Fdis_z", "taudis_x", "taudis_y", "taudis_z",
    "lit", "temperature",
]
_COL = {name: i for i, name in enumerate(TELEMETRY_COLUMNS)}
_STATE_LABELS = [s.label for s in TaskState]

DIVERGENCE_BOUND = 1e4


class NumericalDivergence(RuntimeError):
    pass


class EmptyRun(ValueError):
    pass


@dataclass
class Telemetry:
    """Telemetry table; ``data[:, 1]`` holds TaskState codes."""
    data: np.ndarray

    def __len__(self):
        return len(self.data)

    def column(self, name):
        return self.data[:, _COL[name]]

    def columns(self, *names):
        return self.data[:, [_COL[n] for n in names]]


@dataclass
class RunMetrics:
    status: str                     # "success", "aborted" or "diverged"
    success: bool
    time_to_light: float            # s from Lighting entry, nan if never lit
    final_state: str
    sim_time: float
    states: list
    n_samples: int
    position_error: dict = field(default_factory=dict)
    yaw_error: dict = field(default_factory=dict)
    endpoint_error: dict = field(default_factory=dict)
    relative_span: float = float("nan")
    diagnostic: str = ""
    seed: int = 0

    def to_dict(self):
        return asdict(self)


@dataclass
class RunResult:
    telemetry: Telemetry
    metrics: RunMetrics

    @property
    def exit_code(self):
        return {"success": 0, "aborted": 2, "diverged": 4}[self.metrics.status]


def _gaussian(rng, sigma, n=3):
    return rng.normal(0.0, sigma, n) if sigma > 0.0 else np.zeros(n)


def _axis_profile(err, vel, v_max, a_max, dt):
    """Speed- and acceleration-limited approach of a scalar or planar error."""
    dist = np.linalg.norm(err)
    if dist < 1e-4 and np.linalg.norm(vel) < a_max * dt:
        return err.copy(), np.zeros_like(vel)
    direction = err / dist if dist > 0.0 else np.zeros_like(err)
    speed = min(v_max, np.sqrt(2.0 * a_max * dist))
    dv = direction * speed - vel
    n = np.linalg.norm(dv)
    if n > a_max * dt:
        dv *= a_max * dt / n
    vel = vel + dv
    step = vel * dt
    if np.linalg.norm(step) >= dist and dist < v_max * dt:
        return err.copy(), np.zeros_like(vel)
    return step, vel


def _slew(p_ref, v_ref, goal, v_h, v_z, a_max, dt):
    """Move the reference toward ``goal`` under separate horizontal/vertical speed limits."""
    err = goal - p_ref
    sh, vh = _axis_profile(err[:2], v_ref[:2], v_h, a_max, dt)
    sz, vz = _axis_profile(err[2:], v_ref[2:], v_z, a_max, dt)
    return p_ref + np.concatenate([sh, sz]), np.concatenate([vh, vz])


class Simulation:
    """One scenario run.  All randomness comes from ``seed`` through independent streams."""

    def __init__(self, config, seed=None):
        self.cfg = config
        self.seed = config.seed if seed is None else int(seed)
        raw = config.raw
        streams = np.random.SeedSequence(self.seed).spawn(4)
        self.rng_sensor, self.rng_vision, self.rng_wind, self.rng_fire = (np.random.default_rng(s) for s in streams)
        self.noise = raw["noise"]
        self.dt = 1.0 / config.rates.physics
        self.literal_third = bool(raw["control"]["literal_inertia_term"])
        self.plant = Plant(config.inertia, config.manipulator, self.literal_third)
        self.ctrl = CascadeController(config.position_gains, config.attitude_gains, config.inertia.m_s,
                                      config.limits, config.inertia.g, config.compensation)
        man = raw["manipulator"]
        self.k_end = man["endpoint_gain"]
        self.k_ready = man["ready_gain"]
        self.damping = default_damping(config.workspace) if man["damping_mm"] is None else man["damping_mm"] / 1000.0
        self.sigma_thresh = man["sigma_threshold"]
        self.max_ref_speed = raw["control"]["max_ref_speed_m_s"]
        self.max_ref_climb = raw["control"]["max_ref_climb_m_s"]
        self.max_ref_accel = raw["control"]["max_ref_accel_m_s2"]
        wind = raw["wind"]
        self.wind_mean = np.array(wind["mean_N"], float)
        theta, phase = self.rng_wind.uniform(0.0, 2.0 * np.pi, 2)
        self.wind_dir = np.array([np.cos(theta), np.sin(theta), 0.0]) * wind["gust_N"]
        self.wind_w = 2.0 * np.pi / wind["gust_period_s"]
        self.wind_phase = phase
        ign = raw["ignition"]
        mode = ign[config.task_mode]
        self.torch = TorchModel(ignition_radius=ign["radius_m"], dwell_required=ign["dwell_s"],
                                dwell_factor=mode["dwell_factor"], hazard=mode["hazard_per_s"],
                                hazard_speed=mode["hazard_per_speed"])
        self.latency = int(raw["camera"]["latency_frames"])
        self.rms_threshold = raw["camera"]["rms_threshold_px"]
        self.decimation = int(raw["telemetry"]["decimation"])

    # ------------------------------------------------------------------
    def wind(self, t):
        return self.wind_mean + self.wind_dir * np.sin(self.wind_w * t + self.wind_phase)

    def _initial_state(self):
        raw = self.cfg.raw
        if self.cfg.kind == "hover_sweep":
            p0 = np.array(raw["initial"]["position_m"], float) - raw["sweep"]["altitude_m"] * E3
        else:
            p0 = np.array(raw["initial"]["position_m"], float)
        R0 = rot_yaw(np.deg2rad(raw["initial"]["yaw_deg"]))
        return QuadrotorState(p0, np.zeros(3), R0, np.zeros(3)).to_vector()

    def approach_pose(self):
        """Nominal hover pose that puts the resting target at the ideal relative pose."""
        ref = self.cfg.reference
        pf = self.cfg.platform
        psi = pf.yaw - ref.psi_t_star
        return pf.tip_position - rot_yaw(psi) @ ref.p_t_star, psi

    def _sweep_arm(self, t):
        sw = self.cfg.raw["sweep"]
        a = np.array(sw["amplitude_rad"], float)
        w = 2.0 * np.pi * np.array(sw["frequency_hz"], float)
        s, c = np.sin(w * t), np.cos(w * t)
        return self.cfg.q_ready + a * s, a * w * c, -a * w * w * s

    def _observe(self, x, t):
        st = QuadrotorState.from_vector(x)
        pose = platform_pose(t, self.cfg.platform)
        try:
            proj = project_markers(pose.tip, pose.R_IT, st, self.cfg.camera, self.cfg.markers, self.rng_vision,
                                   self.noise["pixel_px"], self.noise["swap_prob"])
            est = estimate_pose_epnp(self.cfg.markers.positions[proj.index], proj.uv, self.cfg.camera)
        except (TargetNotVisible, DegenerateConfiguration):
            return invalid_observation(t)
        if est is None:
            return invalid_observation(t)
        return observation_in_body(est, self.cfg.camera, t, self.rms_threshold)

    # ------------------------------------------------------------------
    def run(self, on_divergence="record"):
        cfg = self.cfg
        rates = cfg.rates
        ev_att, ev_pos = rates.every("attitude"), rates.every("position")
        ev_man, ev_vis, ev_task = rates.every("manipulator"), rates.every("vision"), rates.every("task")
        dt, dt_pos, dt_man = self.dt, 1.0 / rates.position, 1.0 / rates.manipulator
        man = cfg.manipulator
        sweep = cfg.kind == "hover_sweep"
        duration = cfg.raw["sweep"]["duration_s"] if sweep else cfg.duration
        n_steps = int(round(duration / dt))

        x = self._initial_state()
        q = cfg.q_ready.copy()
        qd = np.zeros(3)
        qdd = np.zeros(3)
        p_ref = x[0:3].copy()
        p_goal = p_ref.copy()
        psi_d = float(np.arctan2(x[9], x[6]))
        v_ref = np.zeros(3)
        arm_mode = "ready"
        state = TaskState.IDLE
        machine = None
        if not sweep:
            ap, ay = self.approach_pose()
            machine = TaskMachine(cfg.task, cfg.reference, man, cfg.workspace, ap, ay)
        dist = CouplingDisturbance.zero()
        ff = CouplingDisturbance.zero()
        pending = []
        obs, obs_pose = None, None
        torch = self.torch
        lit_time = np.nan
        fire_prev = None
        fire_speed = 0.0
        p_m = x[0:3].copy()
        v_m = x[3:6].copy()
        R_m = x[6:15].reshape(3, 3).copy()
        w_m = x[15:18].copy()
        n_rows = n_steps // self.decimation + 1
        buf = np.full((n_rows, len(TELEMETRY_COLUMNS)), np.nan)
        row = 0
        status, diagnostic = None, ""
        lighting_entry = np.nan
        k = 0
        for k in range(n_steps + 1):
            t = k * dt
            R = x[6:15].reshape(3, 3)
            # sensors
            if k % ev_att == 0:
                R_m = R @ exp_so3(_gaussian(self.rng_sensor, self.noise["attitude_rad"]))
                w_m = x[15:18] + _gaussian(self.rng_sensor, self.noise["gyro_rad_s"])
            if k % ev_pos == 0:
                p_m = x[0:3] + _gaussian(self.rng_sensor, self.noise["position_m"])
                v_m = x[3:6] + _gaussian(self.rng_sensor, self.noise["velocity_m_s"])
            # vision with frame latency
            if not sweep and k % ev_vis == 0:
                pending.append((self._observe(x, t), (p_m.copy(), R_m.copy())))
                if len(pending) > self.latency:
                    frame, pose = pending.pop(0)
                    if frame.valid:
                        obs, obs_pose = frame, pose
            # task
            if not sweep and k % ev_task == 0:
                out = machine.step(Sensors(p_m, v_m, R_m, obs, torch.temperature, obs_pose), t)
                if out.state != state and out.state == TaskState.LIGHTING:
                    lighting_entry = t
                state = out.state
                p_goal, psi_d, arm_mode = out.p_d, out.psi_d, out.arm_mode
                if state == TaskState.ABORTED or out.done:
                    status = "aborted" if state == TaskState.ABORTED else "success"
            # position loop with a rate-limited reference
            if k % ev_pos == 0:
                p_ref, v_ref = _slew(p_ref, v_ref, p_goal, self.max_ref_speed, self.max_ref_climb, self.max_ref_accel, dt_pos)
                self.ctrl.update_position(p_m, v_m, R_m, p_ref, psi_d, dt_pos, ff.F_dis, v_ref,
                                         integrate=not np.any(v_ref))
            # manipulator loop
            true_pose = None if sweep else platform_pose(t, cfg.platform)
            fire = None if sweep else true_pose.tip - cfg.reference.h_off * E3
            if sweep:
                q, qd, qdd = self._sweep_arm(t)
            elif k % ev_man == 0:
                if arm_mode == "track" and obs is not None:
                    p_end_d = p_m + R_m @ fire_point_body(obs.p_t_body, R_m, cfg.reference.h_off)
                    p_end = endpoint_world(p_m, R_m, q, man)
                    v_end_d = self.k_end * (p_end_d - p_end)
                    v_m_des = desired_endpoint_body_velocity(v_end_d, v_m, R_m, w_m, q, man)
                    qd_cmd = inverse_velocity(q, v_m_des, man, self.damping, self.sigma_thresh).qdot
                else:
                    qd_cmd = np.clip(self.k_ready * (cfg.q_ready - q), -man.rate_limit, man.rate_limit)
                qdd = np.clip((qd_cmd - qd) / dt_man, -man.accel_limit, man.accel_limit)
                # ignition (gas flows only while lighting)
                if fire_prev is not None:
                    fire_speed = float(np.linalg.norm(fire - fire_prev)) / dt_man
                fire_prev = fire
                if state == TaskState.LIGHTING or torch.lit:
                    p_end_true = endpoint_world(x[0:3], R, q, man)
                    was_lit = torch.lit
                    torch = ignition_check(p_end_true, fire, torch, dt_man, self.rng_fire, fire_speed)
                    if torch.lit and not was_lit:
                        lit_time = t
            # attitude loop
            if k % ev_att == 0:
                ff = disturbance_feedforward(R_m, w_m, q, qd, qdd, cfg.inertia, man, self.literal_third)
                self.ctrl.update_attitude(R_m, w_m, ff.tau_dis)
            # telemetry
            if k % self.decimation == 0:
                buf[row] = self._row(t, state, x, q, qd, p_ref, psi_d, fire, dist, obs, torch)
                row += 1
            if status is not None or k == n_steps:
                break
            # physics
            F = self.ctrl.F_d
            try:
                xn, info = self.plant.step(x, dt, F, self.ctrl.tau_d, self.wind(t), ArmMotion(q, qd, qdd))
            except ValueError as exc:
                status, diagnostic = "diverged", f"t={t:.4f}s: {exc}"
                break
            if not np.all(np.isfinite(xn)) or np.max(np.abs(xn)) > DIVERGENCE_BOUND:
                status, diagnostic = "diverged", f"t={t + dt:.4f}s: state non-finite or beyond {DIVERGENCE_BOUND:g}"
                break
            x = xn
            dist = info.disturbance
            if not sweep:
                q = q + qd * dt + 0.5 * qdd * dt * dt
                qd = qd + qdd * dt
                over = np.abs(q) > man.joint_limit
                if np.any(over):
                    q = np.clip(q, -man.joint_limit, man.joint_limit)
                    qd = np.where(over, 0.0, qd)
        telemetry = Telemetry(buf[:row].copy())
        if status == "diverged" and on_divergence == "raise":
            raise NumericalDivergence(diagnostic)
        if status is None:
            if sweep:
                status = "success"
            else:
                status = "success" if torch.lit else "aborted"
                if not torch.lit:
                    diagnostic = f"run ended in {state.label} after {duration:g}s without lighting"
        elif status == "success" and not torch.lit:
            status = "aborted"
        metrics = compute_metrics(telemetry, cfg, status, lit_time - lighting_entry, diagnostic,
                                  machine.history if machine else [], self.seed)
        return RunResult(telemetry, metrics)

    def _row(self, t, state, x, q, qd, p_ref, psi_d, fire, dist, obs, torch):
        cfg = self.cfg
        R = x[6:15].reshape(3, 3)
        roll, pitch, yaw = euler_zyx(R)
        end = endpoint_world(x[0:3], R, q, cfg.manipulator)
        if fire is None:
            # no target (hover sweep): report the endpoint itself, zero error and offset
            fire = end
            rel = np.zeros(3)
        else:
            rel = R.T @ (fire - x[0:3])
        obs_ok = obs is not None and obs.valid and (t - obs.timestamp) <= cfg.task.obs_max_age
        return np.concatenate([
            [t, float(state)], x[0:6], [roll, pitch, yaw], x[15:18], q, qd, p_ref, [psi_d],
            p_ref - x[0:3], [wrap_angle(psi_d - yaw)], self.ctrl.e_R, [self.ctrl.F_d], self.ctrl.tau_d,
            end, fire, fire - end, rel,
            [1.0 if obs_ok else 0.0, obs.rms if obs_ok else -1.0],
            dist.F_dis, dist.tau_dis, [1.0 if torch.lit else 0.0, torch.temperature],
        ])


# ----------------------------------------------------------------------
# metrics
# ----------------------------------------------------------------------
def _stats(a):
    a = np.asarray(a, float)
    if a.size == 0:
        nan = [float("nan")] * (a.shape[1] if a.ndim == 2 else 1)
        return {"mean": nan, "std": nan, "max_abs": nan, "rms": nan}
    return {"mean": np.mean(a, axis=0).tolist(), "std": np.std(a, axis=0).tolist(),
            "max_abs": np.max(np.abs(a), axis=0).tolist(), "rms": np.sqrt(np.mean(a * a, axis=0)).tolist()}


def span(points, max_points=1000):
    """Largest pairwise distance in a point cloud (evenly subsampled)."""
    pts = np.asarray(points, float)
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    if len(pts) < 2:
        return 0.0
    stride = max(1, int(np.ceil(len(pts) / max_points)))
    pts = pts[::stride]
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
    return float(np.sqrt(d2.max()))


def operation_mask(telemetry):
    s = telemetry.column("task_state")
    return (s == TaskState.VISUAL_SERVO) | (s == TaskState.LIGHTING)


def lighting_mask(telemetry):
    return telemetry.column("task_state") == TaskState.LIGHTING


def compute_metrics(telemetry, cfg, status, time_to_light, diagnostic, history, seed):
    if cfg.kind == "hover_sweep":
        op = telemetry.column("t") >= cfg.raw["sweep"]["settle_s"]
        light = np.zeros(len(telemetry), bool)
    else:
        op = operation_mask(telemetry)
        light = lighting_mask(telemetry)
    ep = telemetry.columns("ep_x", "ep_y", "ep_z")[op]
    eyaw = telemetry.column("e_yaw")[op]
    eend = telemetry.columns("eend_x", "eend_y", "eend_z")[light]
    end_stats = _stats(eend)
    end_stats["max_norm"] = float(np.max(np.linalg.norm(eend, axis=1))) if len(eend) else float("nan")
    yaw = _stats(eyaw[:, None])
    yaw = {k: v[0] for k, v in yaw.items()}
    final = int(telemetry.column("task_state")[-1]) if len(telemetry) else 0
    lit = status == "success" and cfg.kind == "task"
    return RunMetrics(
        status=status, success=(status == "success"),
        time_to_light=float(time_to_light) if lit else float("nan"),
        final_state=_STATE_LABELS[final], sim_time=float(telemetry.column("t")[-1]) if len(telemetry) else 0.0,
        states=[s.label for s in history], n_samples=int(op.sum()),
        position_error=_stats(ep), yaw_error=yaw, endpoint_error=end_stats,
        relative_span=span(telemetry.columns("rel_x", "rel_y", "rel_z")[light]) if light.any() else float("nan"),
        diagnostic=diagnostic, seed=int(seed))


# ----------------------------------------------------------------------
# public entry points
# ----------------------------------------------------------------------
def run_scenario(config=None, seed=None):
    """Run one scenario; returns RunResult(telemetry, metrics)."""
    if config is None:
        config = default_config()
    elif isinstance(config, dict):
        config = build_config(config)
    elif not isinstance(config, ScenarioConfig):
        raise ConfigInvalid("config must be a ScenarioConfig or a scenario dict")
    return Simulation(config, seed).run()


CELLS = [("fixed", "get_fire"), ("fixed", "make_fire"), ("floating", "get_fire"), ("floating", "make_fire")]


def cell_config(config, base, task):
    return config.with_overrides(mode={"base": base, "task": task})


def _run_one(args):
    raw, seed = args
    res = run_scenario(build_config(raw), seed)
    return res.metrics


def run_batch(config, n_runs, seed_base=0, cells=None, workers=1):
    """Success-rate table over the (base, task) cells.

    Per-run failures (aborts, divergence) are recorded in the table; the batch
    never stops early.  Results are ordered by seed regardless of ``workers``.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    if isinstance(config, dict):
        config = build_config(config)
    cells = CELLS if cells is None else cells
    jobs = []
    for base, task in cells:
        raw = cell_config(config, base, task).to_dict()
        jobs.extend(((base, task), (raw, seed_base + i)) for i in range(n_runs))
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as ex:
            metrics = list(ex.map(_run_one, [j[1] for j in jobs]))
    else:
        metrics = [_run_one(j[1]) for j in jobs]
    table = {}
    for (cell, _), m in zip(jobs, metrics):
        table.setdefault(cell, []).append(m)
    return {f"{b}/{t}": summarize_cell(runs) for (b, t), runs in table.items()}


def summarize_cell(runs):
    runs = sorted(runs, key=lambda m: m.seed)
    ok = [m for m in runs if m.success]
    times = [m.time_to_light for m in ok]
    return {
        "n": len(runs), "successes": len(ok), "success_rate": len(ok) / len(runs),
        "mean_time_to_light": float(np.mean(times)) if times else float("nan"),
        "diverged": sum(m.status == "diverged" for m in runs),
        "runs": [m.to_dict() for m in runs],
    }


def format_table(table):
    lines = [f"{'cell':<20}{'success':>12}{'rate':>9}{'mean time [s]':>16}"]
    for cell, row in table.items():
        lines.append(f"{cell:<20}{row['successes']:>7d}/{row['n']:<4d}{100 * row['success_rate']:>8.1f}%"
                     f"{row['mean_time_to_light']:>16.2f}")
    return "\n".join(lines)


def _fmt(v):
    return "nan" if v != v else format(float(v), ".9g")


def telemetry_csv(telemetry):
    if len(telemetry) == 0:
        raise EmptyRun("no telemetry records")
    out = io.StringIO()
    out.write(",".join(TELEMETRY_COLUMNS) + "\n")
    state_col = _COL["task_state"]
    for r in telemetry.data:
        cells = [_fmt(v) for v in r]
        cells[state_col] = _STATE_LABELS[int(r[state_col])]
        out.write(",".join(cells) + "\n")
    return out.getvalue()


def read_telemetry_csv(text):
    lines = text.strip().splitlines()
    header = lines[0].split(",")
    if header != TELEMETRY_COLUMNS:
        raise ValueError("unexpected telemetry header")
    idx = {lab: i for i, lab in enumerate(_STATE_LABELS)}
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        cells[_COL["task_state"]] = str(idx[cells[_COL["task_state"]]])
        rows.append([float(c) for c in cells])
    return Telemetry(np.array(rows))


def summary_text(metrics):
    pe, ee = metrics.position_error, metrics.endpoint_error
    lines = [f"status: {metrics.status}  final state: {metrics.final_state}  sim time: {metrics.sim_time:.2f} s"]
    if metrics.success and metrics.time_to_light == metrics.time_to_light:
        lines.append(f"time to light: {metrics.time_to_light:.2f} s")
    for label, st in (("position error [m]", pe), ("endpoint error [m]", ee)):
        lines.append(label)
        for i, ax in enumerate("xyz"):
            lines.append(f"  {ax}: {st['mean'][i]:+.4f} +/- {st['std'][i]:.4f}  (max |e| {st['max_abs'][i]:.4f})")
    ye = metrics.yaw_error
    lines.append(f"yaw error [rad]: {ye['mean']:+.4f} +/- {ye['std']:.4f}  (max |e| {ye['max_abs']:.4f})")
    if metrics.relative_span == metrics.relative_span:
        lines.append(f"relative target motion span: {metrics.relative_span:.3f} m")
    if metrics.diagnostic:
        lines.append(f"note: {metrics.diagnostic}")
    return "\n".join(lines) + "\n"


def error_bars(records):
    """Per-axis (mean, std) of position error over VisualServo+Lighting and endpoint error over Lighting."""
    op, light = operation_mask(records), lighting_mask(records)
    ep = records.columns("ep_x", "ep_y", "ep_z")[op]
    ee = records.columns("eend_x", "eend_y", "eend_z")[light]
    out = {}
    for key, a in (("position", ep), ("endpoint", ee)):
        out[key] = {"mean": a.mean(axis=0).tolist() if len(a) else [float("nan")] * 3,
                    "std": a.std(axis=0).tolist() if len(a) else [float("nan")] * 3}
    return out


def export_metrics(records):
    """(CSV text, summary text) for a telemetry table.

    The summary lists mean +/- std error bars per axis, recomputed from the
    records alone.
    """
    if records is None or len(records) == 0:
        raise EmptyRun("no telemetry records")
    bars = error_bars(records)
    lines = []
    for key, label in (("position", "position error (VisualServo+Lighting) [m]"),
                       ("endpoint", "endpoint error (Lighting) [m]")):
        lines.append(label)
        for i, ax in enumerate("xyz"):
            lines.append(f"  {ax}: {bars[key]['mean'][i]:+.6f} +/- {bars[key]['std'][i]:.6f}")
    return telemetry_csv(records), "\n".join(lines) + "\n"


def _clean(o):
    """NaN -> None so the output is strict JSON."""
    if isinstance(o, float) and o != o:
        return None
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def metrics_json(metrics):
    return json.dumps(_clean(metrics.to_dict()), indent=2, sort_keys=True)


def batch_json(table):
    return json.dumps(_clean(table), indent=2)
