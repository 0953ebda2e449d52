"""Command-line interface.

Subcommands: ingest, fit, simulate, plan, ask, repl, event, serve.
Exit codes: 0 success, 1 user error (bad input, bad flags), 2 internal
error.  `--format structured` switches output to JSON.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..chainsim import simulate_chain
from ..answers import answer
from ..datastore import load_dataset
from ..demand import model_to_dict
from ..errors import EntplanError
from ..queryparser import ParseError, parse
from .formats import (load_events, load_problem, load_scenario, report_to_dict,
                      run_problem, trajectory_csv)
from .session import SessionState

from ..inference import handle_event


class _UsageError(Exception):
    def __init__(self, parser: argparse.ArgumentParser, message: str):
        self.parser = parser
        self.message = message


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(self, message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="entplan",
                     description="demand fitting, chain simulation, profit "
                                 "planning, and management Q&A")
    parser.add_argument("--data-dir", help="dataset directory (table files)")
    parser.add_argument("--rules", help="rule file (default: packaged library)")
    parser.add_argument("--format", choices=("text", "structured"),
                        default="text", help="output format")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("ingest", help="load and validate a dataset directory")
    p.add_argument("directory")

    p = sub.add_parser("fit", help="fit a demand model from the dataset")
    p.add_argument("goods")
    p.add_argument("--form", required=True,
                   choices=("linear-delta", "log-linear", "piecewise-linear"))
    p.add_argument("--out", help="write the model JSON here")

    p = sub.add_parser("simulate", help="run a delivery-chain scenario")
    p.add_argument("scenario", help="scenario JSON file")
    p.add_argument("--periods", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="write the trajectory CSV here")

    p = sub.add_parser("plan", help="optimize a price/volume plan")
    p.add_argument("problem", help="planning problem JSON file")
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="write the report JSON here")

    p = sub.add_parser("ask", help="answer a management question")
    p.add_argument("query")

    sub.add_parser("repl", help="interactive question loop")

    p = sub.add_parser("event", help="process critical events from a file")
    p.add_argument("file", help="event CSV file (kind,period,subject,magnitude)")

    p = sub.add_parser("serve", help="start the local HTTP facade")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--problem", help="base planning problem for the console")
    p.add_argument("--ui", help="directory with the web console build")
    return parser


def _emit(args, payload: dict, text: str) -> None:
    if args.format == "structured":
        print(json.dumps(payload, sort_keys=True))
    else:
        print(text)


def _cmd_ingest(args) -> int:
    ds = load_dataset(args.directory)
    counts = ds.row_counts()
    text = "\n".join(f"{table}: {n} rows" for table, n in counts.items())
    _emit(args, {"tables": counts}, text)
    return 0


def _cmd_fit(args) -> int:
    session = SessionState.create(args.data_dir or _require(args, "--data-dir"),
                                  args.rules)
    name, model = session.fit_model(args.goods, args.form)
    payload = model_to_dict(model)
    serialized = json.dumps(payload, sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(serialized + "\n", encoding="utf-8")
    diag = model.diagnostics
    text = (f"fitted {name}: form={model.form} "
            f"coefficients={[round(c, 6) for c in model.coefficients]} "
            f"reliable={diag.reliable if diag else 'n/a'}")
    _emit(args, payload, text if not args.out else text + f"\nwrote {args.out}")
    return 0


def _cmd_simulate(args) -> int:
    ds = load_dataset(args.data_dir) if args.data_dir else None
    config, periods, seed = load_scenario(args.scenario, ds=ds)
    if args.periods is not None:
        periods = args.periods
    if args.seed is not None:
        seed = args.seed
    traj = simulate_chain(config, periods=periods, seed=seed)
    csv_text = trajectory_csv(traj)
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
        _emit(args, {"periods": periods, "seed": seed, "out": args.out},
              f"simulated {periods} periods (seed {seed}); wrote {args.out}")
    else:
        _emit(args, {"periods": periods, "seed": seed, "trajectory": csv_text},
              csv_text.rstrip("\n"))
    return 0


def _cmd_plan(args) -> int:
    ds = load_dataset(args.data_dir) if args.data_dir else None
    problem = load_problem(args.problem, ds=ds)
    report = run_problem(problem, budget=args.budget, seed=args.seed)
    payload = report_to_dict(report)
    serialized = json.dumps(payload, sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(serialized + "\n", encoding="utf-8")
    if report.best is None:
        text = (f"no feasible plan in {report.samples} samples "
                f"(feasible fraction {report.feasible_fraction})")
    else:
        b = report.best
        pairs = ", ".join(f"{g}: price {p:.4f} volume {v:.2f}"
                          for g, p, v in zip(b.goods, b.prices, b.volumes))
        text = (f"best profit {b.profit:.4f} ({pairs}); "
                f"feasible fraction {report.feasible_fraction:.3f}")
    if args.out:
        text += f"\nwrote {args.out}"
    _emit(args, payload, text)
    return 0


def _answer_text(got) -> str:
    head = f"[{got.status}]"
    if not got.lines:
        return head + " (no findings)"
    return "\n".join([head] + [f"  {line}" for line in got.lines])


def _cmd_ask(args, query: str | None = None) -> int:
    session = SessionState.create(args.data_dir or _require(args, "--data-dir"),
                                  args.rules)
    ast = parse(query if query is not None else args.query)
    got = answer(ast, session.require_dataset(), session.rules, session.context())
    _emit(args, got.as_dict(), _answer_text(got))
    return 0


def _cmd_repl(args) -> int:
    session = SessionState.create(args.data_dir or _require(args, "--data-dir"),
                                  args.rules)
    ds = session.require_dataset()
    print("type a question, or 'exit' to leave")
    history: list[str] = []
    while True:
        try:
            line = input("? ").strip()
        except EOFError:
            break
        if not line:
            continue
        if line.lower() in ("exit", "quit"):
            break
        history.append(line)
        try:
            got = answer(parse(line), ds, session.rules, session.context())
            print(_answer_text(got))
        except ParseError as exc:
            print(" " * (exc.position + 2) + "^")
            print(f"parse error: {exc}")
        except EntplanError as exc:
            print(f"error: {exc}")
    return 0


def _cmd_event(args) -> int:
    session = SessionState.create(args.data_dir, args.rules)
    events = load_events(args.file)
    reports = [handle_event(ev, session.rules, session.context())
               for ev in events]
    payload = {"events": [r.as_dict() for r in reports]}
    lines = []
    for r in reports:
        flag = " [replan required]" if r.replan else ""
        lines.append(f"{r.event.kind} {r.event.period} {r.event.subject}{flag}")
        for rec in r.recommendations:
            lines.append(f"  - {rec}")
        if not r.recommendations:
            lines.append("  (no recommendations)")
    _emit(args, payload, "\n".join(lines))
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app

    session = SessionState.create(args.data_dir, args.rules, args.problem)
    app = create_app(session, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _require(args, flag: str):
    raise EntplanError(f"this command needs {flag}")


_COMMANDS = {
    "ingest": _cmd_ingest,
    "fit": _cmd_fit,
    "simulate": _cmd_simulate,
    "plan": _cmd_plan,
    "ask": _cmd_ask,
    "repl": _cmd_repl,
    "event": _cmd_event,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc.message, file=sys.stderr)
        exc.parser.print_usage(sys.stderr)
        return 1
    if not args.command:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 1
    except EntplanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - the CLI boundary
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
