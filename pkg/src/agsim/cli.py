"""Command line entry point: run, serve, report, validate."""

from __future__ import annotations

import argparse
import os
import signal
import sys
import time
from pathlib import Path

from .config import bundled_config_path, load_scenario, with_overrides
from .errors import (
    AgsimError,
    BindError,
    ConfigError,
    MissingArtifact,
    ParseError,
    SchemaError,
    TaskError,
    ValidationError,
)
from .rpc import EndpointConfig, serve
from .report import render_report
from .tasks import build_simulator, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TASK = 3
EXIT_BIND = 4

_CONFIG_ERRORS = (ConfigError, ParseError, SchemaError, ValidationError)


def _resolve_config(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    if os.sep not in name and not name.endswith(".json"):
        bundled = bundled_config_path(name)
        if bundled.exists():
            return bundled
    raise ConfigError(f"config '{name}' not found (path or bundled name)")


def _load(args):
    cfg = load_scenario(_resolve_config(args.config))
    return with_overrides(
        cfg,
        seed=args.seed,
        realtime=args.realtime,
        outputs=args.out,
    )


def cmd_run(args) -> int:
    try:
        cfg = _load(args)
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        run_scenario(cfg, cfg.outputs)
    except TaskError as exc:
        print(f"task failed: {exc}", file=sys.stderr)
        return EXIT_TASK
    print(f"run complete: task={cfg.task_type} artifacts={cfg.outputs}")
    return EXIT_OK


def cmd_serve(args) -> int:
    try:
        cfg = _load(args)
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    base_port = args.port if args.port is not None else int(os.environ.get("AGSIM_BASE_PORT", "41451"))
    sim = build_simulator(cfg)
    try:
        service = serve(EndpointConfig(base_port), sim)
    except BindError as exc:
        print(f"bind error: {exc}", file=sys.stderr)
        return EXIT_BIND
    for port_type, port in service.ports.items():
        print(f"listening: {port_type} on {port}")
    sys.stdout.flush()

    stop = {"flag": False}

    def _handle(_sig, _frame):
        stop["flag"] = True

    signal.signal(signal.SIGINT, _handle)
    signal.signal(signal.SIGTERM, _handle)

    factor = cfg.sim.realtime_factor if cfg.sim.realtime_factor > 0 else 1.0
    dt_wall = cfg.sim.dt / factor
    overruns = 0
    start = time.perf_counter()
    tick = 0
    while not stop["flag"]:
        target = start + (tick + 1) * dt_wall
        t0 = time.perf_counter()
        sim.step()
        if time.perf_counter() - t0 > dt_wall:
            overruns += 1
        tick += 1
        lag = target - time.perf_counter()
        if lag > 0:
            time.sleep(min(lag, dt_wall))
    service.stop()
    print(f"shutdown after {tick} ticks ({overruns} overruns)")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        text = render_report(args.dir)
    except MissingArtifact as exc:
        print(f"report error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(text)
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        cfg = _load(args)
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"config ok: task={cfg.task_type} scene={cfg.scene_name} vehicles={len(cfg.vehicles)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agsim", description="Headless air-ground co-simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="scenario JSON path or bundled name")
        p.add_argument("--out", default=None, help="artifacts directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--realtime", type=float, default=None, help="realtime factor override")

    p_run = sub.add_parser("run", help="run a scenario to completion and write artifacts")
    add_common(p_run)
    p_run.set_defaults(fn=cmd_run)

    p_serve = sub.add_parser("serve", help="start the sim and RPC endpoints, step until interrupted")
    add_common(p_serve)
    p_serve.add_argument("--port", type=int, default=None, help="base port (default env AGSIM_BASE_PORT or 41451)")
    p_serve.set_defaults(fn=cmd_serve)

    p_report = sub.add_parser("report", help="render tables and figures from an artifacts directory")
    p_report.add_argument("dir", help="artifacts directory from a previous run")
    p_report.set_defaults(fn=cmd_report)

    p_validate = sub.add_parser("validate", help="lint a scenario config")
    add_common(p_validate)
    p_validate.set_defaults(fn=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except AgsimError as exc:  # unexpected domain error: report, nonzero
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TASK


if __name__ == "__main__":
    raise SystemExit(main())
