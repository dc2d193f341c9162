"""Compare the numba kernels with the pure-numpy fallback.

Each backend runs in its own interpreter because the choice is made at
import time from ``TORCHRELAY_DISABLE_NUMBA``.

    python benchmarks/bench_kernels.py [--repeat 5] [--sim-seconds 5]
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _best(fn, repeat):
    fn()  # warm-up (includes numba compilation / cache load)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def worker(repeat, sim_seconds):
    from torchrelay import backend, default_config, run_scenario
    from torchrelay.dynamics import ArmMotion, InertiaModel, Plant, QuadrotorState, hover_thrust, propagate_free
    from torchrelay.kinematics import ManipulatorConfig, jacobian

    cfg = ManipulatorConfig.from_table()
    model = InertiaModel()
    plant = Plant(model, cfg)
    x0 = QuadrotorState(np.zeros(3), np.zeros(3), np.eye(3), np.array([0.1, -0.2, 0.05])).to_vector()
    arm = ArmMotion(np.array([0.1, -0.7, 1.0]), np.array([0.3, 0.2, -0.4]), np.array([1.0, -0.5, 0.2]))
    F = hover_thrust(model)
    state = QuadrotorState.from_vector(x0)
    q = np.array([0.2, -0.6, 1.1])
    n_rk4 = 2000

    def rk4_loop():
        x = x0
        for _ in range(n_rk4):
            x, _ = plant.step(x, 0.002, F, np.zeros(3), arm=arm)

    def jac_loop():
        for _ in range(n_rk4):
            jacobian(q, cfg)

    sim_cfg = default_config(duration_s=sim_seconds)
    out = {
        "backend": backend(),
        "rk4_arm_step_us": 1e6 * _best(rk4_loop, repeat) / n_rk4,
        "propagate_1e5_steps_s": _best(lambda: propagate_free(state, F, np.zeros(3), model, 0.002, 100_000), repeat),
        "jacobian_us": 1e6 * _best(jac_loop, repeat) / n_rk4,
        f"scenario_{sim_seconds:g}s_wall_s": _best(lambda: run_scenario(sim_cfg, 0), max(1, repeat // 2)),
    }
    print(json.dumps(out))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sim-seconds", type=float, default=5.0)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        worker(args.repeat, args.sim_seconds)
        return
    results = []
    for disable in ("0", "1"):
        env = dict(os.environ, TORCHRELAY_DISABLE_NUMBA=disable)
        cmd = [sys.executable, __file__, "--worker", "--repeat", str(args.repeat), "--sim-seconds", str(args.sim_seconds)]
        proc = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
        results.append(json.loads(proc.stdout.strip().splitlines()[-1]))
    keys = [k for k in results[0] if k != "backend"]
    print(f"{'metric':<28}{results[0]['backend']:>12}{results[1]['backend']:>12}{'speed-up':>10}")
    for k in keys:
        a, b = results[0][k], results[1][k]
        print(f"{k:<28}{a:>12.4g}{b:>12.4g}{b / a:>9.1f}x")


if __name__ == "__main__":
    main()
