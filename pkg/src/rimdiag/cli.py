"""Command-line interface: simulate, diagnose, evaluate, validate.

Exit codes: 0 ok, 1 unreadable or invalid input, 2 unknown fault kind,
3 trace does not match the config, 4 evaluation deviates from the
published matrix.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .diagnosis import diagnose_multistep, diagnose_stepwise, render_report
from .errors import ConfigError, InvalidFault, TraceIncomplete, UnknownSensorInTrace
from .evaluation import evaluate, trigger_station
from .model import process_description_from_document, read_document, reference_config_path, validate
from .constraints import ExpectedValueSet
from .sim import (
    FaultKind,
    FaultSpec,
    MachineConfig,
    load_machine_config,
    simulate_machine,
    simulate_product_run,
    write_machine_log,
)
from .trace import TraceFormatError, read_trace, write_trace

EXIT_OK, EXIT_INPUT, EXIT_FAULT_KIND, EXIT_MISMATCH, EXIT_DEVIATION = 0, 1, 2, 3, 4
NOT_TRIGGERED = "product OK, diagnosis not triggered"


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _load(path) -> MachineConfig:
    return load_machine_config(path if path is not None else reference_config_path())


def cmd_simulate(args) -> int:
    try:
        cfg = _load(args.config)
    except (ConfigError, OSError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    try:
        kind = FaultKind.parse(args.fault)
        fault = FaultSpec(kind, args.magnitude)
        trace = simulate_product_run(cfg, fault, args.seed)
    except InvalidFault as exc:
        _err(str(exc))
        return EXIT_FAULT_KIND
    write_trace(trace, args.out)
    print(f"wrote {args.out} ({len(trace.events)} events, verdict {trace.verdict})", file=sys.stderr)
    if args.log:
        target = FaultSpec(kind, args.magnitude, target_product=args.target)
        try:
            _, log = simulate_machine(cfg, args.products, [target], args.seed)
        except InvalidFault as exc:
            _err(str(exc))
            return EXIT_FAULT_KIND
        for p in write_machine_log(log, cfg.process, args.log):
            print(f"wrote {p}", file=sys.stderr)
    if args.plot:
        from .plotting import plot_trace

        print(f"wrote {plot_trace(trace, cfg, args.plot)}", file=sys.stderr)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    try:
        cfg = _load(args.config)
        trace = read_trace(args.trace)
    except (ConfigError, OSError, TraceFormatError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    if trace.verdict.ok:
        print(NOT_TRIGGERED)
        return EXIT_OK
    run = diagnose_multistep if args.algorithm == "multistep" else diagnose_stepwise
    try:
        report = run(cfg.process, cfg.expected, trace, trigger_station(cfg))
    except (UnknownSensorInTrace, TraceIncomplete) as exc:
        _err(str(exc))
        return EXIT_MISMATCH
    sys.stdout.write(report.to_json() if args.format == "json" else render_report(report))
    if args.out:
        Path(args.out).write_text(report.to_json())
    return EXIT_OK


def cmd_evaluate(args) -> int:
    try:
        cfg = _load(args.config)
    except (ConfigError, OSError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    try:
        matrix = evaluate(cfg, args.seed)
    except InvalidFault as exc:
        _err(str(exc))
        return EXIT_INPUT
    if args.format == "json":
        sys.stdout.write(json.dumps(matrix.to_dict(), indent=2) + "\n")
    else:
        sys.stdout.write(matrix.render())
    if args.out:
        out = Path(args.out)
        out.write_text(matrix.to_csv())
        from .plotting import plot_evaluation

        figure = plot_evaluation(matrix, out.with_suffix(".png"))
        print(f"wrote {out} and {figure}", file=sys.stderr)
    deviations = matrix.diff()
    if deviations:
        print("matrix deviates from the published table:")
        for line in deviations:
            print(f"  {line}")
        return EXIT_DEVIATION
    return EXIT_OK


def cmd_validate(args) -> int:
    path = args.config if args.config is not None else reference_config_path()
    try:
        doc = read_document(path)
    except OSError as exc:
        _err(str(exc))
        return EXIT_INPUT
    except ConfigError as exc:
        print(f"SchemaError: {exc}")
        return EXIT_INPUT
    m = process_description_from_document(doc)
    issues = validate(m)
    if not issues:
        issues = validate(m, ExpectedValueSet.from_document(doc.get("expected_values", {}), m))
    for issue in issues:
        print(issue)
    if issues:
        return EXIT_INPUT
    print(f"{path}: ok ({m.station_count} stations, {len(m.sensor_to_transition)} sensors)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rimdiag", description="Rotary indexing machine diagnosis toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def config_arg(p):
        p.add_argument("--config", type=Path, default=None,
                       help="process-description JSON (default: bundled reference machine)")

    p = sub.add_parser("simulate", help="simulate one product run and write its trace")
    config_arg(p)
    p.add_argument("--fault", default="none", help=", ".join(k.value for k in FaultKind))
    p.add_argument("--magnitude", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="trace file (JSON lines)")
    p.add_argument("--log", type=Path, default=None, help="also write a whole-machine log to PREFIX.log/.jsonl")
    p.add_argument("--products", type=int, default=1, help="products in the whole-machine run")
    p.add_argument("--target", type=int, default=1, help="product the fault strikes in the whole-machine run")
    p.add_argument("--plot", type=Path, default=None, help="timeline figure of the trace")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("diagnose", help="diagnose a Not-OK product trace")
    config_arg(p)
    p.add_argument("--trace", type=Path, required=True)
    p.add_argument("--algorithm", choices=("stepwise", "multistep"), default="multistep")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--out", type=Path, default=None, help="write the JSON report here")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("evaluate", help="reproduce the fault/algorithm matrix")
    config_arg(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--out", type=Path, default=None, help="CSV of the matrix; a PNG figure is written alongside")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("validate", help="check a process-description file")
    config_arg(p)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", 0) < 0:
        _err("--seed must be non-negative")
        return EXIT_INPUT
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
