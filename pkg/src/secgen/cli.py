"""Command-line frontend; every verb drives the same Application core as HTTP.

Exit codes: 0 clean, 1 findings present (generate/analyze), 2 usage error,
3 runtime failure. Designed so CI can gate on the analyze/generate verbs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from .app import Application
from .config import load_app_config
from .errors import SecgenError

EXIT_CLEAN = 0
EXIT_FINDINGS = 1
EXIT_USAGE = 2
EXIT_FAILURE = 3


def _table(rows: list[dict[str, Any]], columns: list[str]) -> str:
    if not rows:
        return "(none)"
    widths = {
        col: max(len(col), *(len(str(row.get(col, ""))) for row in rows))
        for col in columns
    }
    header = "  ".join(col.ljust(widths[col]) for col in columns)
    divider = "  ".join("-" * widths[col] for col in columns)
    lines = [header, divider]
    for row in rows:
        lines.append("  ".join(str(row.get(col, "")).ljust(widths[col]) for col in columns))
    return "\n".join(lines)


def _findings_table(findings: list[dict[str, Any]]) -> str:
    rows = [
        {
            "cwe": f["cwe"],
            "severity": f["severity"],
            "lines": f"{f['line_start']}-{f['line_end']}"
            if f["line_start"] != f["line_end"]
            else str(f["line_start"]),
            "rule": f["rule_id"],
            "engine": f["engine"],
            "message": f["message"],
        }
        for f in findings
    ]
    return _table(rows, ["cwe", "severity", "lines", "rule", "engine", "message"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="secgen",
        description="Secure code generation orchestrator: generate, analyze, benchmark.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        default="secgen.json",
        help="path to the JSON config file (default: ./secgen.json)",
    )
    common.add_argument(
        "--json", action="store_true", help="emit canonical JSON instead of tables"
    )

    sub = parser.add_subparsers(dest="command", required=True)

    p_generate = sub.add_parser(
        "generate", parents=[common], help="generate code through the repair loop"
    )
    p_generate.add_argument("--prompt", required=True, help="the code-generation task")
    p_generate.add_argument("--llm", default=None, help="override the LLM selection")
    p_generate.add_argument(
        "--max-iters", type=int, default=None, help="override max analyze passes"
    )

    p_analyze = sub.add_parser(
        "analyze", parents=[common], help="scan a source file with all engines"
    )
    p_analyze.add_argument("--lang", required=True, help="language tag, e.g. java")
    p_analyze.add_argument("--file", required=True, help="path to the source file")

    # group parsers carry no options themselves: nested defaults would
    # silently clobber a --config given before the sub-subcommand
    p_benchmark = sub.add_parser("benchmark", help="run or inspect LLM security benchmarks")
    bench_sub = p_benchmark.add_subparsers(dest="benchmark_command", required=True)
    p_run = bench_sub.add_parser("run", parents=[common], help="execute the suite")
    p_run.add_argument(
        "--once",
        action="store_true",
        help="run a single benchmark instead of the configured schedule",
    )
    bench_sub.add_parser("report", parents=[common], help="show the latest ranking")

    p_llms = sub.add_parser("llms", help="configured LLMs")
    p_llms.add_subparsers(dest="llms_command", required=True).add_parser(
        "list", parents=[common]
    )

    p_engines = sub.add_parser("engines", help="configured engines")
    p_engines.add_subparsers(dest="engines_command", required=True).add_parser(
        "list", parents=[common]
    )

    p_store = sub.add_parser("store", help="record store utilities")
    p_store.add_subparsers(dest="store_command", required=True).add_parser(
        "export", parents=[common], help="dump every record as JSON lines"
    )

    sub.add_parser("serve", parents=[common], help="run the REST service")

    return parser


def _load_app(args: argparse.Namespace) -> Application:
    return Application(load_app_config(args.config))


def _cmd_generate(args: argparse.Namespace) -> int:
    app = _load_app(args)
    trace = app.generate(args.prompt, args.llm, args.max_iters)
    if args.json:
        print(json.dumps(trace, indent=2))
    else:
        last = trace["iterations"][-1]
        print(f"llm: {trace['llm_name']}")
        print(f"iterations: {len(trace['iterations'])}")
        print(f"clean: {trace['clean']}")
        print()
        print(last["code"]["source"])
        if last["findings"]:
            print()
            print(_findings_table(last["findings"]))
    return EXIT_CLEAN if trace["clean"] else EXIT_FINDINGS


def _cmd_analyze(args: argparse.Namespace) -> int:
    app = _load_app(args)
    source = Path(args.file).read_text()
    findings = app.analyze(args.lang, source)
    if args.json:
        print(json.dumps(findings, indent=2))
    else:
        print(_findings_table(findings))
    return EXIT_FINDINGS if findings else EXIT_CLEAN


def _cmd_benchmark(args: argparse.Namespace) -> int:
    app = _load_app(args)
    if args.benchmark_command == "run":
        if args.once or app.config.benchmark_interval is None:
            run_id = app.run_benchmark_once()
            print(json.dumps({"run_id": run_id}) if args.json else f"run id: {run_id}")
            return EXIT_CLEAN
        handle = app.start_recurring_benchmark()
        print(
            f"benchmark scheduled every {app.config.benchmark_interval} s; Ctrl-C to stop"
        )
        try:
            while handle is not None and handle.active:
                handle.join(timeout=1.0)
        except KeyboardInterrupt:
            if handle is not None:
                handle.cancel()
        return EXIT_CLEAN

    ranking = app.benchmark_results()
    if ranking is None:
        print("no benchmark ranking recorded yet")
        return EXIT_CLEAN
    if args.json:
        print(json.dumps(ranking, indent=2))
    else:
        print(f"run {ranking['run_id']} at {ranking['created_at']}")
        print(_table(ranking["entries"], ["llm_name", "mean_score", "pass_count"]))
    return EXIT_CLEAN


def _cmd_llms(args: argparse.Namespace) -> int:
    app = _load_app(args)
    llms = app.list_llms()
    print(json.dumps(llms, indent=2) if args.json else _table(llms, ["name", "endpoint", "model", "timeout"]))
    return EXIT_CLEAN


def _cmd_engines(args: argparse.Namespace) -> int:
    app = _load_app(args)
    engines = app.list_engines()
    if args.json:
        print(json.dumps(engines, indent=2))
    else:
        rows = [dict(e, language_scope=",".join(e["language_scope"]) or "*") for e in engines]
        print(_table(rows, ["name", "kind", "location", "language_scope"]))
    return EXIT_CLEAN


def _cmd_store(args: argparse.Namespace) -> int:
    app = _load_app(args)
    for line in app.store.export_lines():
        print(line)
    return EXIT_CLEAN


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_service

    app = _load_app(args)
    app.start_recurring_benchmark()
    host, port = app.config.host_and_port()
    uvicorn.run(create_service(app), host=host, port=port, log_level="info")
    return EXIT_CLEAN


_HANDLERS = {
    "generate": _cmd_generate,
    "analyze": _cmd_analyze,
    "benchmark": _cmd_benchmark,
    "llms": _cmd_llms,
    "engines": _cmd_engines,
    "store": _cmd_store,
    "serve": _cmd_serve,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except SecgenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
