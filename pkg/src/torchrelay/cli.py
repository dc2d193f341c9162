"""Command line entry point: ``torchrelay run|batch|check``.

Exit codes: 0 success, 2 task aborted, 3 configuration error, 4 numerical
divergence.
"""
import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigInvalid, default_config, load_config
from .sim import batch_json, format_table, metrics_json, run_batch, run_scenario, summary_text, telemetry_csv

EXIT_OK, EXIT_ABORTED, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3, 4

log = logging.getLogger("torchrelay")


def _load(path, decimation=None):
    cfg = default_config() if path is None else load_config(path)
    if decimation is not None:
        cfg = cfg.with_overrides(telemetry={"decimation": decimation})
    return cfg


def cmd_run(args):
    cfg = _load(args.scenario, args.decimation)
    res = run_scenario(cfg, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if len(res.telemetry):
        (out / "telemetry.csv").write_text(telemetry_csv(res.telemetry), encoding="utf-8")
    (out / "metrics.json").write_text(metrics_json(res.metrics) + "\n", encoding="utf-8")
    text = summary_text(res.metrics)
    (out / "summary.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return res.exit_code


def cmd_batch(args):
    cfg = _load(args.scenario)
    cells = None
    if args.cells:
        cells = [tuple(c.split("/")) for c in args.cells]
        for c in cells:
            if len(c) != 2 or c[0] not in ("fixed", "floating") or c[1] not in ("get_fire", "make_fire"):
                raise ConfigInvalid(f"bad cell {'/'.join(c)!r}; expected base/task, e.g. floating/get_fire")
    table = run_batch(cfg, args.runs, args.seed_base, cells, args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    text = format_table(table) + "\n"
    (out / "table.txt").write_text(text, encoding="utf-8")
    (out / "batch.json").write_text(batch_json(table) + "\n", encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_check(args):
    cfg = load_config(args.scenario)
    r = cfg.rates
    print(f"{args.scenario}: ok ({cfg.kind}, {cfg.base}/{cfg.task_mode}; rates physics {r.physics} Hz, "
          f"attitude {r.attitude} Hz, position {r.position} Hz, manipulator {r.manipulator} Hz, "
          f"vision {r.vision} Hz, task {r.task} Hz)")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="torchrelay", description="Aerial-manipulator torch relay simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario")
    run.add_argument("scenario", nargs="?", help="scenario JSON (defaults if omitted)")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--out", default="out", help="output directory")
    run.add_argument("--decimation", type=int, default=None, help="keep every k-th physics tick in the telemetry")
    run.set_defaults(func=cmd_run)

    batch = sub.add_parser("batch", help="success-rate table over fixed/floating x get/make fire")
    batch.add_argument("scenario", nargs="?", help="scenario JSON (defaults if omitted)")
    batch.add_argument("--runs", type=int, default=20, help="seeded runs per cell")
    batch.add_argument("--seed-base", type=int, default=0)
    batch.add_argument("--workers", type=int, default=1)
    batch.add_argument("--cells", nargs="*", help="subset of cells, e.g. fixed/get_fire")
    batch.add_argument("--out", default="out", help="output directory")
    batch.set_defaults(func=cmd_batch)

    check = sub.add_parser("check", help="validate a scenario file")
    check.add_argument("scenario")
    check.set_defaults(func=cmd_check)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors, which would read as "aborted"
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
