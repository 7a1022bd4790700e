"""Command line front end: validate scenario files, run simulations,
and re-run delay analysis over exported histories.

Exit codes: 0 success, 2 scenario rejected by validation or parsing,
3 the configuration cannot be simulated, 1 unexpected internal error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import scenario
from .engine import Simulation, write_series_csv
from .errors import ChainSimError, Infeasible, ParseError, ValidationError
from .tracing import TraceRecord, TraceStore

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3


def _read_doc(path: str) -> dict:
    try:
        return scenario.load(path)
    except FileNotFoundError:
        raise ParseError(f"no such file: {path}") from None


def cmd_validate(args) -> int:
    try:
        doc = _read_doc(args.file)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    violations = scenario.validate(doc)
    if violations:
        for v in violations:
            print(str(v), file=sys.stderr)
        print(f"{len(violations)} violation(s)", file=sys.stderr)
        return EXIT_VALIDATION
    print("ok")
    return EXIT_OK


def _dump_json(doc, path: str | None) -> None:
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def cmd_simulate(args) -> int:
    try:
        doc = _read_doc(args.file)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        config = scenario.build(doc, seed=args.seed, horizon=args.horizon)
    except ValidationError as exc:
        for message in exc.errors:
            print(message, file=sys.stderr)
        print(f"{len(exc.errors)} violation(s)", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        sim = Simulation(config)
        report = sim.run()
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    _dump_json(report, args.out)
    if args.log is not None:
        with open(args.log, "w", encoding="utf-8") as fh:
            for entry in sim.bus.export_log():
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
    if args.series is not None:
        write_series_csv(sim.echelon_series(), args.series)
    return EXIT_OK


def _collect_records(path: str) -> list[dict]:
    """Accepts a simulation report (with its embedded history) or a file
    of line-delimited trace records, possibly concatenated from many runs."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        records = []
        for n, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ParseError(exc.msg, line=n, column=exc.colno) from None
        return records
    if isinstance(doc, dict):
        history = doc.get("history")
        if not isinstance(history, list):
            raise ParseError("report has no history section")
        return history
    if isinstance(doc, list):
        return doc
    raise ParseError("expected a report object or an array of trace records")


def cmd_trace(args) -> int:
    try:
        records = _collect_records(args.file)
        store = TraceStore()
        store.extend(TraceRecord.from_dict(r) for r in records)
        store.finalize()
        analysis = store.analyze().to_dict()
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (KeyError, TypeError, ValueError) as exc:
        print(f"malformed trace record: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    _dump_json(analysis, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chainsim",
        description="multi-enterprise supply chain coordination simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="check a scenario file, reporting every violation")
    p_validate.add_argument("file")
    p_validate.set_defaults(func=cmd_validate)

    p_simulate = sub.add_parser("simulate", help="run a scenario and emit the report")
    p_simulate.add_argument("file")
    p_simulate.add_argument("--seed", type=int, default=None, help="override the file seed")
    p_simulate.add_argument("--horizon", type=int, default=None, help="override the file horizon")
    p_simulate.add_argument("--out", default=None, help="write the report here instead of stdout")
    p_simulate.add_argument("--log", default=None, help="write the message log here, one JSON object per line")
    p_simulate.add_argument("--series", default=None, help="write the per-echelon order series as CSV")
    p_simulate.set_defaults(func=cmd_simulate)

    p_trace = sub.add_parser("trace", help="analyze delay records from a report or a record file")
    p_trace.add_argument("file")
    p_trace.add_argument("--out", default=None, help="write the analysis here instead of stdout")
    p_trace.set_defaults(func=cmd_trace)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ChainSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
