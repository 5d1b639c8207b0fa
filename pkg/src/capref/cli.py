"""Command-line entry point.

Subcommands: ingest, plan, run, sweep, eval, analyze, humaneval, serve,
report.  Output on stdout is machine-readable by default (--pretty
switches to rendered tables); logs and progress go to stderr.  Exit
codes: 0 success, 1 user error, 2 backend or I/O failure.  Every failure
prints one machine-greppable line: ``capref: error [E_<CODE>] message``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import analysis as an
from . import humaneval as he
from . import metrics as M
from .backends import client as bk
from .corpus import CorpusError, content_digest, ingest, save_canonical
from .jsonl import dumps_canonical, read_jsonl
from .pipeline.config import ConfigError, load_config, parse_variant
from .pipeline.plan import PlanError, plan_variant
from .pipeline.report import (
    ReportError,
    machine_report_text,
    render_comparison,
    render_scores_table,
    render_scores_html,
    summarize_cells,
)
from .pipeline.run import RunError, run, sweep


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}".rstrip())


def _user_errors():
    from .annotate.store import AnnotateError

    return (
        UsageError,
        CorpusError,
        M.MetricError,
        an.AnalysisError,
        he.HumanEvalError,
        ConfigError,
        PlanError,
        ReportError,
        AnnotateError,
        ValueError,
    )


def _error_code(e: Exception) -> str:
    mapping = {
        UsageError: "USAGE",
        CorpusError: "DATA",
        M.MetricError: "DATA",
        an.AnalysisError: "DATA",
        he.HumanEvalError: "DATA",
        ConfigError: "CONFIG",
        PlanError: "PLAN",
        ReportError: "REPORT",
        bk.BackendError: "BACKEND",
        RunError: "RUN",
        OSError: "IO",
    }
    for klass, code in mapping.items():
        if isinstance(e, klass):
            return code
    return "INTERNAL"


def build_parser() -> _Parser:
    p = _Parser(prog="capref", description=__doc__)
    sub = p.add_subparsers(dest="command", metavar="command")

    sp = sub.add_parser("ingest", help="parse an external dataset into canonical form")
    sp.add_argument("--format", required=True, choices=["multi30k", "coco_json", "xm3600", "image_list", "canonical"])
    sp.add_argument("--paths", required=True, nargs="+")
    sp.add_argument("--language", default="en")
    sp.add_argument("--name")
    sp.add_argument("--split", default="train", choices=["train", "val", "test", "additional"])
    sp.add_argument("--out", help="directory to write canonical records + manifest")

    sp = sub.add_parser("plan", help="print the stage plan for a variant")
    sp.add_argument("--config", required=True)
    sp.add_argument("--variant", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--base-manifest")

    sp = sub.add_parser("run", help="execute one variant")
    sp.add_argument("--config", required=True)
    sp.add_argument("--variant", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--base-manifest")

    sp = sub.add_parser("sweep", help="run every (variant, size, seed) cell")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out-dir", help="report directory (default <store>/report)")
    sp.add_argument("--workers", type=int)
    sp.add_argument("--pretty", action="store_true")

    sp = sub.add_parser("eval", help="score predictions against references")
    sp.add_argument("--pred", required=True, help="jsonl of {image_id, text}")
    sp.add_argument("--refs", required=True, help="canonical caption records jsonl")
    sp.add_argument("--metrics", default="bleu4")
    sp.add_argument("--embedder", help="embedder URL (or CAPREF_BACKEND_EMBEDDER)")
    sp.add_argument("--embedder-identity", default="embedder@unversioned")

    sp = sub.add_parser("analyze", help="reformulation-data analyses")
    sp.add_argument("--pairs", help="jsonl of reformulation pairs")
    sp.add_argument("--labels", help="jsonl of change labels")
    sp.add_argument("--length-unit", default="chars", choices=["chars", "words"])
    sp.add_argument("--stylized", help="stylized caption to match")
    sp.add_argument("--candidates", help="file of candidate captions, one per line")
    sp.add_argument("--pretty", action="store_true")

    sp = sub.add_parser("humaneval", help="aggregate pairwise judgments")
    sp.add_argument("--judgments", help="jsonl of judgments")
    sp.add_argument("--per-item-majority", action="store_true")
    sp.add_argument("--fleiss", help="json {table: [[..]], raters: r}")
    sp.add_argument("--cohen", help="json {a: [...], b: [...]}")

    sp = sub.add_parser("serve", help="run the annotation service")
    sp.add_argument("--port", type=int, default=8018)
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--store", help="store directory (or CAPREF_ANNOTATE_STORE)")
    sp.add_argument("--ui", help="static UI bundle directory")
    sp.add_argument("--lease-seconds", type=float, default=600.0)

    sp = sub.add_parser("report", help="render tables from a machine-readable report")
    sp.add_argument("--rows", required=True, help="report jsonl")
    sp.add_argument("--html", action="store_true")
    sp.add_argument("--compare", help="json list of [model, score] baselines")
    sp.add_argument("--compare-metric", default="cider_d")
    sp.add_argument("--ours", help="our variant label for the comparison (default: best)")
    return p


def _cmd_ingest(args) -> int:
    d = ingest(args.format, args.paths, args.language, name=args.name, split=args.split)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        manifest = save_canonical(d, out / "records.jsonl")
        digest = manifest.content_digest
    else:
        digest = content_digest(d)
    print(
        dumps_canonical(
            {
                "name": d.name,
                "split": d.split,
                "image_count": d.image_count,
                "caption_count": d.caption_count,
                "content_digest": digest,
            }
        )
    )
    return 0


def _cmd_plan(args) -> int:
    config = load_config(args.config)
    variant = parse_variant(args.variant, args.seed)
    plan = plan_variant(variant, config, base_manifest=args.base_manifest)
    doc = {
        "variant": variant.label,
        "seed": plan.seed,
        "digest": plan.digest,
        "stages": [
            {
                "name": s.name,
                "kind": s.kind,
                "backend": s.backend_identity,
                "cache_key": s.cache_key,
                "deps": list(s.deps),
            }
            for s in plan.stages
        ],
    }
    print(dumps_canonical(doc))
    return 0


def _cmd_run(args) -> int:
    config = load_config(args.config)
    variant = parse_variant(args.variant, args.seed)
    plan = plan_variant(variant, config, base_manifest=args.base_manifest)
    record = run(plan, config)
    record_doc = {
        "variant": record.variant,
        "seed": record.seed,
        "plan_digest": record.plan_digest,
        "stages": [
            {"name": o.name, "status": o.status, "cache_key": o.cache_key, "error": o.error}
            for o in record.outcomes
        ],
        "scores": record.scores,
    }
    runs_dir = Path(config.store_dir) / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    out_path = runs_dir / f"{record.variant}-seed{record.seed}-{record.plan_digest[:12]}.json"
    out_path.write_text(json.dumps(record_doc, sort_keys=True, indent=1), encoding="utf-8")
    print(dumps_canonical(record_doc))
    print(f"run record written to {out_path}", file=sys.stderr)
    if not record.ok:
        failed = "; ".join(f"{o.name}: {o.error}" for o in record.outcomes if o.status == "failed")
        raise RunError(f"variant {record.variant} failed: {failed}")
    return 0


def _cmd_sweep(args) -> int:
    config = load_config(args.config)
    if args.workers:
        config.workers = args.workers
    result = sweep(config)
    report_text = machine_report_text(result)
    out_dir = Path(args.out_dir) if args.out_dir else Path(config.store_dir) / "report"
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.jsonl").write_text(report_text, encoding="utf-8")
    rows = [json.loads(line) for line in report_text.splitlines()]
    (out_dir / "report.txt").write_text(render_scores_table(rows), encoding="utf-8")
    (out_dir / "report.html").write_text(render_scores_html(rows), encoding="utf-8")
    if args.pretty:
        print(render_scores_table(rows), end="")
    else:
        print(report_text, end="")
    print(f"report files written to {out_dir}", file=sys.stderr)
    return 0


def _load_refs(path: str) -> dict[str, list[str]]:
    refs: dict[str, list[str]] = {}
    for row in read_jsonl(path):
        if "text" in row and "image_id" in row:
            refs.setdefault(str(row["image_id"]), []).append(row["text"])
    if not refs:
        raise UsageError(f"{path}: no caption records found")
    return refs


def _cmd_eval(args) -> int:
    preds = {}
    for row in read_jsonl(args.pred):
        if "image_id" not in row or "text" not in row:
            raise UsageError(f"{args.pred}: prediction records need image_id and text")
        preds[str(row["image_id"])] = row["text"]
    refs = _load_refs(args.refs)
    eval_set = M.eval_set_from_texts(preds, {k: refs.get(k, []) for k in preds})
    requested = [m.strip() for m in args.metrics.split(",") if m.strip()]
    results = []
    for metric in requested:
        if metric == "bleu4":
            results.append(("bleu4", M.bleu4(eval_set).score))
        elif metric == "cider_d":
            results.append(("cider_d", M.cider_d(eval_set).score))
        elif metric == "bert_score":
            import os

            url = args.embedder or os.environ.get("CAPREF_BACKEND_EMBEDDER")
            if not url:
                raise UsageError("bert_score needs --embedder or CAPREF_BACKEND_EMBEDDER")
            ep = bk.BackendEndpoint(kind="embedder", base_url=url, identity=args.embedder_identity)
            results.append(("bert_score", M.bert_score(eval_set, lambda lists: bk.embed_batch(ep, lists)).f1))
        else:
            raise UsageError(f"unknown metric {metric!r}")
    if len(results) == 1:
        print(results[0][1])
    else:
        for metric, score in results:
            print(dumps_canonical({"metric": metric, "score": score}))
    return 0


def _cmd_analyze(args) -> int:
    did_something = False
    if args.pairs:
        stats = an.reformulation_stats(an.read_pairs(args.pairs), length_unit=args.length_unit)
        print(
            dumps_canonical(
                {
                    "total": stats.total,
                    "unchanged_fraction": stats.unchanged_fraction,
                    "mean_edit_distance": stats.mean_edit_distance,
                    "mean_len_before": stats.mean_len_before,
                    "mean_len_after": stats.mean_len_after,
                }
            )
        )
        did_something = True
    if args.labels:
        table = an.change_tally(an.read_labels(args.labels))
        if args.pretty:
            print(_render_change_table(table), end="")
        else:
            print(
                dumps_canonical(
                    {
                        "cells": table.cells,
                        "rewrite_total": table.rewrite_total,
                        "row_totals": table.row_totals,
                        "kind_totals": table.kind_totals,
                    }
                )
            )
        did_something = True
    if args.stylized is not None:
        if not args.candidates:
            raise UsageError("--stylized needs --candidates")
        candidates = [
            line for line in Path(args.candidates).read_text(encoding="utf-8").splitlines() if line
        ]
        print(an.pair_stylized_to_original(args.stylized, candidates))
        did_something = True
    if not did_something:
        raise UsageError("analyze needs --pairs, --labels, or --stylized")
    return 0


def _render_change_table(table: an.ChangeTable) -> str:
    header = ["", "Add", "Replace", "Remove", "Rewrite", "Total"]
    rows = []
    for el in an.ELEMENTS:
        cells = table.cells[el]
        rows.append(
            [el.capitalize(), str(cells["add"]), str(cells["replace"]), str(cells["remove"]), "--",
             str(table.row_totals[el])]
        )
    kt = table.kind_totals
    rows.append(["Total", str(kt["add"]), str(kt["replace"]), str(kt["remove"]), str(kt["rewrite"]), ""])
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"


def _cmd_humaneval(args) -> int:
    did_something = False
    if args.judgments:
        judgments = he.read_judgments(args.judgments)
        by_axis: dict[str, list] = {}
        for j in judgments:
            by_axis.setdefault(j.axis, []).append(j)
        for axis in he.AXES:
            if axis in by_axis:
                result = he.aggregate_axis(by_axis[axis], per_item_majority=args.per_item_majority)
                print(dumps_canonical(he.axis_result_to_dict(result)))
        did_something = True
    if args.fleiss:
        doc = json.loads(Path(args.fleiss).read_text(encoding="utf-8"))
        print(he.fleiss_kappa(doc["table"], doc["raters"]))
        did_something = True
    if args.cohen:
        doc = json.loads(Path(args.cohen).read_text(encoding="utf-8"))
        print(he.cohen_kappa(doc["a"], doc["b"]))
        did_something = True
    if not did_something:
        raise UsageError("humaneval needs --judgments, --fleiss, or --cohen")
    return 0


def _cmd_serve(args) -> int:
    import os

    from .annotate.service import STORE_ENV_VAR, serve

    store_dir = args.store or os.environ.get(STORE_ENV_VAR)
    if not store_dir:
        raise UsageError(f"serve needs --store or {STORE_ENV_VAR}")
    serve(store_dir, port=args.port, host=args.host, ui_dir=args.ui,
          lease_seconds=args.lease_seconds)
    return 0


def _cmd_report(args) -> int:
    rows = read_jsonl(args.rows)
    if args.compare:
        baselines = [(str(n), float(s)) for n, s in json.loads(Path(args.compare).read_text())]
        summaries = summarize_cells(rows)
        cells = {
            (v, m): s for (v, n, m), s in summaries.items()
        }
        candidates = {v: s.mean for (v, m), s in cells.items() if m == args.compare_metric}
        if not candidates:
            raise ReportError(f"no {args.compare_metric} rows to compare")
        ours = args.ours or max(candidates, key=lambda v: candidates[v])
        if ours not in candidates:
            raise ReportError(f"variant {ours!r} not present in rows")
        print(render_comparison(baselines, (ours, candidates[ours])), end="")
    elif args.html:
        print(render_scores_html(rows), end="")
    else:
        print(render_scores_table(rows), end="")
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "plan": _cmd_plan,
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "eval": _cmd_eval,
    "analyze": _cmd_analyze,
    "humaneval": _cmd_humaneval,
    "serve": _cmd_serve,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError(parser.format_usage().rstrip())
        return _COMMANDS[args.command](args)
    except (bk.BackendError, RunError, OSError) as e:
        print(f"capref: error [E_{_error_code(e)}] {e}", file=sys.stderr)
        return 2
    except _user_errors() as e:
        print(f"capref: error [E_{_error_code(e)}] {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
