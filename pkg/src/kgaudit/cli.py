"""Command-line surface: one subcommand per stage plus an end-to-end run.

Configuration is layered: built-in defaults, then an optional YAML file
(``--config``), then overrides.  Overrides may be written either as
``--set section.key=value`` or directly as ``--section.key=value``;
dedicated convenience flags (``--forget``, ``--extractor``, ...) are
applied last and win.  The effective config is snapshotted into the run
manifest.  Exit codes: 0 success, 2 configuration error, 3 stage
failure, 4 partial failure above the configured tolerance.
"""

from __future__ import annotations

import argparse
import logging
import re
import sys

from .config import Config, ConfigError, load_config
from .pipeline import (
    GENERATION_STAGES,
    Manifest,
    PartialFailureError,
    PipelineError,
    STAGES,
    execute_stage,
    run_paths,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_PARTIAL = 4

_STAGE_HELP = {
    "ingest": "load both corpora and segment them into word-window chunks",
    "extract": "build the forget and retain knowledge graphs from chunks",
    "dedup": "intersect the graphs and subtract the overlap from the forget graph",
    "synthesize": "generate the fact-anchored QA audit suite",
    "answer": "send each audit question to the model under test",
    "judge": "score answers by ROUGE recall and entailment",
    "report": "aggregate verdicts into tables, CSV, JSON, and figures",
    "run": "execute all generation stages (ingest through synthesize), resuming",
}

_DOTTED_FLAG = re.compile(r"^--([a-z_]+\.[a-z_]+)=(.*)$", re.DOTALL)


def _add_common_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="YAML config file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config value (repeatable)",
    )
    parser.add_argument("--forget", metavar="PATH", help="forget corpus file or directory")
    parser.add_argument("--retain", metavar="PATH", help="retain corpus file or directory")
    parser.add_argument("--run-id", metavar="ID", help="run directory name")
    parser.add_argument("--out-dir", metavar="DIR", help="parent directory for runs")
    parser.add_argument(
        "--extractor",
        choices=("rule", "remote"),
        help="extraction backend (rule = offline deterministic rules)",
    )
    parser.add_argument("--extractor-url", metavar="URL", help="remote extractor endpoint")
    parser.add_argument(
        "--emit-full-suite",
        action="store_true",
        help="also build and audit the non-deduplicated suite for comparison",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgaudit",
        description=(
            "Audit a model's residual knowledge: build knowledge graphs from "
            "forget and retain corpora, drop shared facts, synthesize a QA "
            "suite, and judge the model's answers."
        ),
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="log debug detail to stderr"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in (*STAGES, "run"):
        sub = subparsers.add_parser(name, help=_STAGE_HELP[name])
        _add_common_options(sub)
    return parser


def _rewrite_dotted_flags(argv: list[str]) -> list[str]:
    """Turn ``--section.key=value`` tokens into ``--set`` pairs."""
    out: list[str] = []
    for token in argv:
        match = _DOTTED_FLAG.match(token)
        if match:
            out.extend(["--set", f"{match.group(1)}={match.group(2)}"])
        else:
            out.append(token)
    return out


def _effective_config(args: argparse.Namespace) -> Config:
    """Layer file and overrides; dedicated flags are applied last."""
    overrides = list(args.overrides)
    if args.forget:
        overrides.append(f"corpus.forget_path={args.forget}")
    if args.retain:
        overrides.append(f"corpus.retain_path={args.retain}")
    if args.run_id:
        overrides.append(f"run.run_id={args.run_id}")
    if args.out_dir:
        overrides.append(f"run.out_dir={args.out_dir}")
    if args.extractor:
        backend = "rule_based" if args.extractor == "rule" else "remote"
        overrides.append(f"extractor.backend={backend}")
    if args.extractor_url:
        overrides.append(f"extractor.endpoint_url={args.extractor_url}")
    if args.emit_full_suite:
        overrides.append("run.emit_full_suite=true")
    return load_config(args.config, overrides)


def _print_stage_summary(command: str, cfg: Config) -> None:
    """Echo the numbers a stage computed, straight from the manifest."""
    paths = run_paths(cfg)
    if command == "report":
        print(paths.report_table.read_text(encoding="utf-8"), end="")
        return
    manifest = Manifest.load(paths.manifest)
    info = manifest.stages[command].get("info") or {}
    if command == "dedup":
        print(f"initial facts: {info.get('initial_facts', 0)}")
        print(f"overlap facts (shared with retain): {info.get('overlap_facts', 0)}")
        print(f"final facts: {info.get('final_facts', 0)}")
        return
    for key in sorted(info):
        value = info[key]
        if isinstance(value, (int, float, str)):
            print(f"{key}: {value}")


def main(argv: list[str] | None = None) -> int:
    raw = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(_rewrite_dotted_flags(raw))
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = _effective_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "run":
            for stage in GENERATION_STAGES:
                execute_stage(stage, cfg, resume=True)
        else:
            execute_stage(args.command, cfg, resume=False)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PartialFailureError as exc:
        print(f"partial failure: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    except PipelineError as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return EXIT_STAGE
    if args.command == "run":
        manifest = Manifest.load(run_paths(cfg).manifest)
        for stage in GENERATION_STAGES:
            info = manifest.stages[stage].get("info") or {}
            summary = ", ".join(
                f"{key}={info[key]}"
                for key in sorted(info)
                if isinstance(info[key], (int, float, str))
            )
            print(f"{stage}: done" + (f" ({summary})" if summary else ""))
    else:
        _print_stage_summary(args.command, cfg)
    return EXIT_OK
