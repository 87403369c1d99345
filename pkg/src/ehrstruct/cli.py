"""Command-line interface wiring the pipeline stages together.

Every stage reads and writes JSONL so intermediate results can be inspected
and re-run independently; `structure` runs the whole pipeline in one pass.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .evaluate import DefaultJudge, render_table, report_files
from .integrate import rejection_report, serialize
from .pipeline import (
    PipelineConfig,
    build_resources,
    load_or_build_index,
    read_notes,
    run_structure,
)
from .preprocess import chunk_note, restore_linebreaks
from .recognition import recognize_note

log = logging.getLogger(__name__)


def _open_in(path):
    return sys.stdin if path == "-" else open(path, encoding="utf-8")


def _open_out(path):
    return sys.stdout if path == "-" else open(path, "w", encoding="utf-8")


def _config_from_args(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    for attr in (
        "lexicon",
        "backend",
        "max_tokens",
        "mismatch_threshold",
        "workers",
        "assertion_rules",
        "transcript",
        "abbreviations",
        "applicability",
    ):
        value = getattr(args, attr, None)
        if value is not None:
            setattr(cfg, attr, value)
    return cfg


def cmd_structure(args) -> int:
    cfg = _config_from_args(args)
    problems = cfg.validate()
    if problems:
        for p in problems:
            print(f"config error: {p}", file=sys.stderr)
        return 1
    try:
        res = build_resources(cfg)
        with _open_in(args.input) as fh:
            notes = read_notes(fh)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    results = run_structure(notes, res, workers=cfg.workers)
    with _open_out(args.output) as out:
        serialize(results, out, group_by_note=args.group_by_note)
    rejected = rejection_report(results)
    if args.rejections:
        with _open_out(args.rejections) as out:
            for rec in rejected:
                out.write(json.dumps(rec) + "\n")
    if rejected:
        print(f"{len(rejected)} of {len(results)} notes rejected", file=sys.stderr)
        return 2
    return 0


def cmd_evaluate(args) -> int:
    try:
        judge = DefaultJudge()
        abbrev = None
        if args.abbreviations:
            from .terminology import AbbreviationTable

            abbrev = AbbreviationTable.load(args.abbreviations)
        report = report_files(args.gold, args.pred, judge=judge, abbrev=abbrev, macro=args.macro)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(render_table(report, name=args.name))
    if args.json:
        payload = report.to_dict() if hasattr(report, "to_dict") else dataclasses.asdict(report)
        with _open_out(args.json) as out:
            json.dump(payload, out, indent=2)
            out.write("\n")
    return 0


def cmd_build_index(args) -> int:
    try:
        index, cache_hit = load_or_build_index(args.lexicon, args.cache)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"{'cache hit' if cache_hit else 'built'}: {len(index)} surfaces")
    return 0


def cmd_validate_config(args) -> int:
    try:
        cfg = _config_from_args(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    problems = cfg.validate()
    for key, value in dataclasses.asdict(cfg).items():
        print(f"{key} = {value}")
    if problems:
        for p in problems:
            print(f"config error: {p}", file=sys.stderr)
        return 1
    print("config OK")
    return 0


def cmd_preprocess(args) -> int:
    cfg = _config_from_args(args)
    try:
        with _open_in(args.input) as fh:
            notes = read_notes(fh)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    with _open_out(args.output) as out:
        for raw in notes:
            note = restore_linebreaks(raw)
            for chunk in chunk_note(note, cfg.chunker()):
                out.write(json.dumps(dataclasses.asdict(chunk), ensure_ascii=False) + "\n")
    return 0


def cmd_recognize(args) -> int:
    cfg = _config_from_args(args)
    problems = [p for p in cfg.validate() if p.startswith(("lexicon", "abbreviations"))]
    if not cfg.lexicon:
        problems.append("lexicon: required")
    if problems:
        for p in problems:
            print(f"config error: {p}", file=sys.stderr)
        return 1
    try:
        res = build_resources(cfg)
        with _open_in(args.input) as fh:
            notes = read_notes(fh)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    with _open_out(args.output) as out:
        for raw in notes:
            note = restore_linebreaks(raw)
            chunks = chunk_note(note, res.chunker)
            for m in recognize_note(note, chunks, res.index, res.abbreviations):
                rec = dataclasses.asdict(m)
                rec["semantic_type"] = m.semantic_type.value
                out.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return 0


def _add_common(parser, lexicon=True):
    parser.add_argument("--config", help="plain-text key = value configuration file")
    if lexicon:
        parser.add_argument("--lexicon", help="lexicon TSV (surface, concept_id, semantic_type)")
        parser.add_argument("--abbreviations", help="abbreviation table TSV")
    parser.add_argument("--max-tokens", type=int, dest="max_tokens", help="chunk token budget")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ehrstruct",
        description="Structure clinical notes into per-term JSON records and score them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("structure", help="run the full pipeline over notes JSONL")
    _add_common(p)
    p.add_argument("input", help="notes JSONL ('-' for stdin)")
    p.add_argument("output", help="entities JSONL ('-' for stdout)")
    p.add_argument("--backend", choices=["rule", "llm", "replay"])
    p.add_argument("--transcript", help="record/replay transcript JSONL")
    p.add_argument("--assertion-rules", dest="assertion_rules", help="trigger rule TSV")
    p.add_argument("--applicability", help="applicability override config")
    p.add_argument("--mismatch-threshold", type=float, dest="mismatch_threshold")
    p.add_argument("--workers", type=int)
    p.add_argument("--rejections", help="write the rejection report JSONL here")
    p.add_argument("--group-by-note", action="store_true")
    p.set_defaults(func=cmd_structure)

    p = sub.add_parser("evaluate", help="score predictions against gold annotations")
    p.add_argument("gold", help="gold entities JSONL")
    p.add_argument("pred", help="predicted entities JSONL")
    p.add_argument("--abbreviations", help="abbreviation table for acronym equivalence")
    p.add_argument("--macro", action="store_true", help="average per note instead of pooling")
    p.add_argument("--name", default="pipeline", help="row label in the rendered table")
    p.add_argument("--json", help="also write the report as JSON to this path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("build-index", help="compile and cache the term index")
    p.add_argument("lexicon", help="lexicon TSV")
    p.add_argument("cache", help="index cache file")
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("validate-config", help="validate config and print resolved settings")
    _add_common(p)
    p.add_argument("--backend", choices=["rule", "llm", "replay"])
    p.add_argument("--transcript")
    p.add_argument("--assertion-rules", dest="assertion_rules")
    p.add_argument("--applicability")
    p.add_argument("--mismatch-threshold", type=float, dest="mismatch_threshold")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_validate_config)

    p = sub.add_parser("preprocess", help="normalize and chunk notes")
    _add_common(p, lexicon=False)
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("recognize", help="emit recognized mentions as JSONL")
    _add_common(p)
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_recognize)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
