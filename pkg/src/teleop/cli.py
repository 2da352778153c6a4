"""Command-line entry points: run scenarios, sweep the ablation, re-score
traces, and host the operator-console bridge.

Exit codes: 0 success, 1 configuration error (bad flags, missing files,
invalid scenario), 2 runtime fault. Set TELEOP_LOG=debug|info|warning for
log verbosity.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError
from .chain import ChainError
from .feedback import VelocityTransform
from .metrics import (
    DEFAULT_F_CUTOFF_HZ,
    MetricError,
    ablation_report,
    format_comparison,
    stability_report,
)
from .scenario import load_scenario
from .simulator import run_teleop_loop
from .trace import TraceFormatError, load_trace, save_trace

log = logging.getLogger("teleop")

EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _setup_logging() -> None:
    level = os.environ.get("TELEOP_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def _load_scenario_or_exit(args) -> "object":
    try:
        scenario = load_scenario(args.scenario)
    except (FileNotFoundError, ConfigError, ChainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG) from None
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "rate", None) is not None:
        if not 50 <= args.rate <= 1000:
            print(f"error: --rate must be within [50, 1000] Hz", file=sys.stderr)
            raise SystemExit(EXIT_CONFIG)
        overrides["tick_rate_hz"] = args.rate
    if getattr(args, "duration", None) is not None:
        overrides["duration"] = args.duration
    if getattr(args, "transform", None):
        feedback = dataclasses.replace(
            scenario.feedback, transform=VelocityTransform(args.transform)
        )
        overrides["feedback"] = feedback
    if overrides:
        scenario = dataclasses.replace(scenario, **overrides)
    return scenario


def cmd_run(args) -> int:
    scenario = _load_scenario_or_exit(args)
    try:
        trace = run_teleop_loop(scenario)
    except Exception as exc:
        print(f"runtime fault: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    out = Path(args.output)
    save_trace(trace, out, binary=args.binary or None)
    factors = trace.column("factor")
    contact = int(trace.contact_mask().sum())
    print(
        f"{scenario.name}: {len(trace.records)} ticks "
        f"({scenario.duration:.2f} s @ {scenario.tick_rate_hz} Hz), "
        f"mean factor {factors.mean():.4f}, contact ticks {contact} -> {out}"
    )
    return 0


def cmd_ablate(args) -> int:
    scenario = _load_scenario_or_exit(args)
    transforms = list(VelocityTransform)
    if args.transforms:
        try:
            transforms = [VelocityTransform(t.strip()) for t in args.transforms.split(",")]
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    try:
        reports = ablation_report(scenario, transforms, f_cutoff=args.cutoff)
    except Exception as exc:
        print(f"runtime fault: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            for rep in reports:
                fh.write(json.dumps(rep.to_json_obj(), separators=(",", ":")) + "\n")
    print(format_comparison(reports))
    return 0


def cmd_metrics(args) -> int:
    try:
        trace = load_trace(args.trace)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TraceFormatError as exc:
        print(f"error: {args.trace}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = stability_report(trace, f_cutoff=args.cutoff)
    except MetricError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(report.to_json_obj(), indent=2))
    return 0


def cmd_bridge(args) -> int:
    scenario = _load_scenario_or_exit(args)
    from .bridge import serve  # deferred: uvicorn import cost

    try:
        serve(scenario, host=args.host, port=args.port)
    except OSError as exc:
        print(f"error: cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="teleop",
        description="Leader/follower teleoperation with virtual force feedback",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scripted scenario, write a trace")
    run.add_argument("--scenario", required=True, help="bundled name or config path")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--rate", type=int, default=None, help="tick rate override (Hz)")
    run.add_argument("--duration", type=float, default=None, help="duration override (s)")
    run.add_argument(
        "--transform",
        choices=[t.value for t in VelocityTransform],
        default=None,
        help="velocity transform override",
    )
    run.add_argument("--output", default="trace.ndjson")
    run.add_argument("--binary", action="store_true", help="write the compact binary format")
    run.set_defaults(func=cmd_run)

    ablate = sub.add_parser("ablate", help="run the velocity-transform ablation")
    ablate.add_argument("--scenario", required=True)
    ablate.add_argument("--seed", type=int, default=None)
    ablate.add_argument(
        "--transforms", default=None, help="comma-separated subset (default: all four)"
    )
    ablate.add_argument("--cutoff", type=float, default=DEFAULT_F_CUTOFF_HZ)
    ablate.add_argument("--output", default=None, help="write one JSON object per report")
    ablate.set_defaults(func=cmd_ablate)

    metrics = sub.add_parser("metrics", help="score a stored trace")
    metrics.add_argument("--trace", required=True)
    metrics.add_argument("--cutoff", type=float, default=DEFAULT_F_CUTOFF_HZ)
    metrics.set_defaults(func=cmd_metrics)

    bridge = sub.add_parser("bridge", help="host the operator-console bridge")
    bridge.add_argument("--scenario", required=True)
    bridge.add_argument("--host", default="127.0.0.1")
    bridge.add_argument("--port", type=int, default=8765)
    bridge.add_argument("--seed", type=int, default=None)
    bridge.set_defaults(func=cmd_bridge)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
