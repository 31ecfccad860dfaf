"""Command-line entry points: author tooling plus quiz and serve modes.

Exit status is 0 only when no Error-severity diagnostics were produced
(parse/validate/report) or the command succeeded (compile/quiz/serve).
Config precedence everywhere is flags > environment > defaults.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

from .config import EngineConfig, config_from_env, parse_ladder, parse_threshold
from .course import AssessmentKind, Course
from .diagnostics import Diagnostic, Severity, has_errors
from .model import legal_cells
from .objectives import render_objective
from .package_io import (
    PackageError,
    ValidationErrorsPresent,
    compile_course,
    load_package,
)
from .parser import parse_course
from .service import ApiError, Clock, FixedClock, QuizService, make_http_server
from .validator import coverage_matrix, gap_report, validate


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, PackageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdtc",
        description="Courseware compiler and mastery-gated quiz delivery",
    )
    sub = parser.add_subparsers(required=True)

    p = sub.add_parser("parse", help="parse a .cdtc file and print diagnostics")
    p.add_argument("file")
    p.set_defaults(func=_cmd_parse)

    p = sub.add_parser("validate", help="parse and lint a .cdtc file")
    p.add_argument("file")
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("compile", help="compile a validated course to a package")
    p.add_argument("file")
    p.add_argument("-o", "--output", required=True)
    p.add_argument(
        "--timestamp",
        type=int,
        default=0,
        help="compiled_at stamp (default 0 keeps output reproducible)",
    )
    p.set_defaults(func=_cmd_compile)

    p = sub.add_parser("report", help="coverage matrices and gap report")
    p.add_argument("file")
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("objectives", help="print rendered objective statements")
    p.add_argument("file")
    p.add_argument("--audience-noun")
    p.set_defaults(func=_cmd_objectives)

    p = sub.add_parser("quiz", help="interactive terminal quiz session")
    p.add_argument("--package", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--learner", required=True)
    p.add_argument("--module", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument(
        "--fixed-clock", type=int, help="freeze the clock at this epoch second"
    )
    _add_config_flags(p)
    p.set_defaults(func=_cmd_quiz)

    p = sub.add_parser("serve", help="run the HTTP quiz service")
    p.add_argument("--package", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--fixed-clock", type=int)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_serve)

    return parser


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mastery-threshold")
    p.add_argument("--min-attempts", type=int)
    p.add_argument("--mastery-window", type=int)
    p.add_argument("--refresher-ladder")
    p.add_argument("--audience-noun")


def _config_from(args) -> EngineConfig:
    config = config_from_env()
    if getattr(args, "mastery_threshold", None) is not None:
        config = dataclasses.replace(
            config, mastery_threshold=parse_threshold(args.mastery_threshold)
        )
    if getattr(args, "min_attempts", None) is not None:
        config = dataclasses.replace(config, min_attempts=args.min_attempts)
    if getattr(args, "mastery_window", None) is not None:
        config = dataclasses.replace(config, mastery_window=args.mastery_window)
    if getattr(args, "refresher_ladder", None) is not None:
        config = dataclasses.replace(
            config, refresher_ladder=parse_ladder(args.refresher_ladder)
        )
    if getattr(args, "audience_noun", None) is not None:
        config = dataclasses.replace(config, audience_noun=args.audience_noun)
    return config


def _read_source(path_text: str) -> str:
    return Path(path_text).read_text(encoding="utf-8")


def _print_diagnostics(diagnostics: list[Diagnostic], filename: str) -> None:
    for diagnostic in diagnostics:
        print(diagnostic.render(filename))


def _parse_and_validate(path_text: str) -> tuple[Course | None, list[Diagnostic]]:
    course, diagnostics = parse_course(_read_source(path_text))
    if course is not None:
        seen = {(d.code, d.message) for d in diagnostics}
        for diagnostic in validate(course):
            if (diagnostic.code, diagnostic.message) not in seen:
                diagnostics.append(diagnostic)
    return course, diagnostics


def _cmd_parse(args) -> int:
    _, diagnostics = parse_course(_read_source(args.file))
    _print_diagnostics(diagnostics, args.file)
    return 1 if has_errors(diagnostics) else 0


def _cmd_validate(args) -> int:
    course, diagnostics = _parse_and_validate(args.file)
    if args.format == "json":
        print(
            json.dumps(
                {
                    "ok": not has_errors(diagnostics),
                    "diagnostics": [
                        {
                            "severity": d.severity.value,
                            "code": d.code,
                            "message": d.message,
                            **(
                                {"line": d.span.line, "column": d.span.column}
                                if d.span
                                else {}
                            ),
                        }
                        for d in diagnostics
                    ],
                },
                ensure_ascii=False,
            )
        )
    else:
        _print_diagnostics(diagnostics, args.file)
        if not diagnostics:
            print(f"{args.file}: ok")
    return 1 if has_errors(diagnostics) else 0


def _cmd_compile(args) -> int:
    course, diagnostics = _parse_and_validate(args.file)
    _print_diagnostics(diagnostics, args.file)
    if course is None or has_errors(diagnostics):
        return 1
    try:
        data = compile_course(course, compiled_at=args.timestamp)
    except ValidationErrorsPresent:
        return 1
    Path(args.output).write_bytes(data)
    print(f"wrote {args.output} ({len(data)} bytes)")
    return 0


def _cmd_report(args) -> int:
    course, diagnostics = _parse_and_validate(args.file)
    if course is None:
        _print_diagnostics(diagnostics, args.file)
        return 1
    gaps_by_module: dict[str, list] = {}
    for gap in gap_report(course):
        gaps_by_module.setdefault(gap.module_id, []).append(gap)
    if args.format == "json":
        report = [
            {
                "module_id": module.id,
                "counts": coverage_matrix(module).as_report_dict(),
                "gaps": [
                    {
                        "module_id": g.module_id,
                        "item_id": g.item_id,
                        "cell": g.cell.name,
                        "reason": g.reason,
                    }
                    for g in gaps_by_module.get(module.id, [])
                ],
            }
            for module in course.modules
        ]
        print(json.dumps(report, ensure_ascii=False))
        return 0
    for module in course.modules:
        matrix = coverage_matrix(module)
        print(f"module {module.id} ({module.title})")
        print(f"  {'cell':<20} assessments")
        for cell in legal_cells():
            print(f"  {cell.name:<20} {matrix.counts[cell]}")
        gaps = gaps_by_module.get(module.id, [])
        if gaps:
            print("  gaps:")
            for gap in gaps:
                print(f"    {gap.item_id} {gap.cell.name}: {gap.reason}")
        else:
            print("  gaps: none")
    return 0


def _cmd_objectives(args) -> int:
    course, diagnostics = _parse_and_validate(args.file)
    if course is None:
        _print_diagnostics(diagnostics, args.file)
        return 1
    config = config_from_env()
    noun = args.audience_noun or config.audience_noun
    for module in course.modules:
        for item in module.items:
            for objective in item.objectives:
                print(render_objective(item, objective, noun))
    return 0


def _cmd_serve(args) -> int:
    course = load_package(Path(args.package).read_bytes())
    clock = FixedClock(args.fixed_clock) if args.fixed_clock is not None else Clock()
    service = QuizService(course, args.data, _config_from(args), clock)
    server = make_http_server(service, host=args.host, port=args.port)
    print(f"serving course '{course.id}' on http://{args.host}:{server.server_port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


# ---------------------------------------------------------------------------
# Terminal quiz mode
# ---------------------------------------------------------------------------


def _cmd_quiz(args) -> int:
    course = load_package(Path(args.package).read_bytes())
    clock = FixedClock(args.fixed_clock) if args.fixed_clock is not None else Clock()
    service = QuizService(course, args.data, _config_from(args), clock)
    try:
        descriptor = service.start_session(
            args.learner, course.id, args.module, seed=args.seed
        )
    except ApiError as exc:
        print(f"error: {exc.message}", file=sys.stderr)
        return 2
    session_id = descriptor["session_id"]
    decision = descriptor["decision"]
    print(f"session {session_id} (seed {descriptor['seed']})")
    while True:
        kind = decision["type"]
        if kind == "complete":
            print("module complete.", _due_note(decision))
            return 0
        if kind == "gated":
            needed = decision["needed"]
            print(
                f"locked: master {needed['prerequisite']} before {decision['level']} "
                f"(need ratio {needed['threshold']} over >= {needed['min_attempts']} "
                f"attempts; currently {needed['current_ratio']:.2f} "
                f"over {needed['attempts_counted']})"
            )
            return 0
        started = time.monotonic()
        response, ok = _prompt_for(decision)
        if response is None:
            print("bye")
            return 0 if ok else 1
        elapsed = int(time.monotonic() - started)
        try:
            feedback = service.handle_answer(
                session_id,
                {
                    "item_id": decision["item_id"],
                    "assessment_id": decision["assessment_id"],
                    "response": response,
                    "elapsed_seconds": elapsed,
                },
            )
        except ApiError as exc:
            print(f"rejected: {exc.message}")
            decision = service.get_next(session_id)["decision"]
            continue
        score = feedback["score"]
        note = f" (time penalty {score['time_penalty']})" if score["time_penalty"] else ""
        print(
            f"score: {score['final_points']}/{score['max_points']}{note} "
            f"{'correct' if score['correct'] else 'incorrect'}"
        )
        m = feedback["mastery"]
        print(
            f"mastery at {m['cell']}: {m['cell_ratio']:.2f} "
            f"over {m['cell_attempts_counted']} recent attempts"
        )
        decision = feedback["decision"]


def _due_note(decision: dict) -> str:
    due = decision.get("next_due_at")
    return f"next refresher due at {due}" if due else "no refresher scheduled yet"


def _prompt_for(decision: dict):
    """Print one item and read its answer; (None, True) on clean EOF."""
    print()
    if decision.get("demonstration"):
        print(f"--- {decision['demonstration']}")
    if decision.get("refresher"):
        print("[refresher review]")
    print(f"{decision['stem']}")
    kind = decision["kind"]
    try:
        if kind == "mcq":
            for index, option in enumerate(decision["options"], start=1):
                print(f"  {index}. {option}")
            raw = input("answer number> ").strip()
            return {"choice": int(raw) - 1}, True
        if kind == "classify":
            print(f"categories: {', '.join(decision['categories'])}")
            assignments = {}
            for entry in decision["entries"]:
                assignments[entry] = input(f"  {entry} -> ").strip()
            return {"assignments": assignments}, True
        if kind == "order":
            for index, step in enumerate(decision["steps"], start=1):
                print(f"  {index}. {step}")
            raw = input("order (e.g. 3 1 2)> ").strip()
            arrangement = [int(part) - 1 for part in raw.split()]
            return {"arrangement": arrangement}, True
        raw = input("done? [y/n]> ").strip().lower()
        return {"confirmed": raw in ("y", "yes")}, True
    except EOFError:
        return None, True
    except ValueError:
        print("could not read that answer; try again")
        return _prompt_for(decision)
