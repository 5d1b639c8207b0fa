"""Report rendering: a machine-readable row stream plus text and HTML
score tables (variants as rows, metrics as columns, "mean ± std" cells,
best per column marked) and a comparison list against external models."""

from __future__ import annotations

from ..jsonl import dumps_canonical
from ..metrics import MetricSummary, summarize
from .run import SweepResult

VARIANT_ORDER = ("base", "h-tran", "m-tran", "own", "re", "h-tran+IN", "m-tran+IN", "own+IN", "re+IN")
METRIC_LABELS = {"bleu4": "B@4", "cider_d": "CIDEr", "bert_score": "BS"}


class ReportError(ValueError):
    pass


def _variant_rank(label: str) -> tuple[int, str]:
    try:
        return (VARIANT_ORDER.index(label), label)
    except ValueError:
        return (len(VARIANT_ORDER), label)


def machine_rows(result: SweepResult) -> list[dict]:
    """One row per (variant, n, seed, metric), deterministically ordered."""
    rows = []
    for variant, n, seed, record in result.records:
        for metric in sorted(record.scores):
            rows.append(
                {"variant": variant, "n": n, "seed": seed, "metric": metric,
                 "score": record.scores[metric]}
            )
    rows.sort(key=lambda r: (r["n"], _variant_rank(r["variant"]), r["seed"], r["metric"]))
    return rows


def machine_report_text(result: SweepResult) -> str:
    return "".join(dumps_canonical(r) + "\n" for r in machine_rows(result))


def summarize_cells(rows: list[dict]) -> dict[tuple[str, int, str], MetricSummary]:
    """(variant, n, metric) -> mean/std summary over seeds."""
    grouped: dict[tuple[str, int, str], list[tuple[int, float]]] = {}
    for r in rows:
        grouped.setdefault((r["variant"], r["n"], r["metric"]), []).append(
            (r["seed"], r["score"])
        )
    return {
        key: summarize(key[2], [score for _, score in sorted(scores)])
        for key, scores in grouped.items()
    }


def _table_cells(
    summaries: dict[tuple[str, int, str], MetricSummary], n: int, metrics: list[str]
) -> tuple[list[str], dict[tuple[str, str], str], dict[str, str]]:
    variants = sorted({v for v, size, _ in summaries if size == n}, key=_variant_rank)
    if not variants:
        raise ReportError(f"no records for n={n}")
    metric_sets = {
        tuple(sorted(m for vv, size, m in summaries if (vv, size) == (v, n)))
        for v in variants
    }
    if len(metric_sets) != 1:
        raise ReportError(f"inconsistent metric sets across records: {sorted(metric_sets)}")
    if set(metrics) - set(next(iter(metric_sets))):
        raise ReportError(f"records lack requested metrics {metrics}")
    cells = {}
    best = {}
    for m in metrics:
        best_variant = max(variants, key=lambda v: summaries[(v, n, m)].mean)
        best[m] = best_variant
        for v in variants:
            cells[(v, m)] = summaries[(v, n, m)].render()
    return variants, cells, best


def render_scores_table(
    rows: list[dict], metrics: list[str] | None = None, mark_best: bool = True
) -> str:
    """Text table, one block per subset size; the best cell of each
    metric column is wrapped in ** marks."""
    summaries = summarize_cells(rows)
    metrics = metrics or sorted({m for _, _, m in summaries}, key=lambda m: (m != "bleu4", m != "cider_d", m))
    sizes = sorted({n for _, n, _ in summaries})
    blocks = []
    for n in sizes:
        variants, cells, best = _table_cells(summaries, n, metrics)
        header = ["variant"] + [METRIC_LABELS.get(m, m) for m in metrics]
        body = []
        for v in variants:
            row = [v]
            for m in metrics:
                text = cells[(v, m)]
                if mark_best and best[m] == v:
                    text = f"**{text}**"
                row.append(text)
            body.append(row)
        widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
        lines = []
        if len(sizes) > 1:
            lines.append(f"N = {n}")
        lines.append("  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip())
        lines.append("  ".join("-" * w for w in widths))
        for row in body:
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def render_scores_html(rows: list[dict], metrics: list[str] | None = None) -> str:
    summaries = summarize_cells(rows)
    metrics = metrics or sorted({m for _, _, m in summaries}, key=lambda m: (m != "bleu4", m != "cider_d", m))
    sizes = sorted({n for _, n, _ in summaries})
    parts = ["<table>"]
    for n in sizes:
        variants, cells, best = _table_cells(summaries, n, metrics)
        if len(sizes) > 1:
            parts.append(f'<tr><th colspan="{len(metrics) + 1}">N = {n}</th></tr>')
        parts.append(
            "<tr><th>variant</th>"
            + "".join(f"<th>{METRIC_LABELS.get(m, m)}</th>" for m in metrics)
            + "</tr>"
        )
        for v in variants:
            tds = []
            for m in metrics:
                text = cells[(v, m)]
                if best[m] == v:
                    text = f"<strong>{text}</strong>"
                tds.append(f"<td>{text}</td>")
            parts.append(f"<tr><td>{v}</td>" + "".join(tds) + "</tr>")
    parts.append("</table>")
    return "\n".join(parts) + "\n"


def render_comparison(
    baselines: list[tuple[str, float]], ours: tuple[str, float], metric_label: str = "CIDEr"
) -> str:
    """Two-column comparison of external model scores against ours."""
    rows = [(name, f"{score:.1f}") for name, score in baselines]
    rows.append((ours[0], f"{ours[1]:.1f}"))
    name_w = max(len("model"), *(len(n) for n, _ in rows))
    val_w = max(len(metric_label), *(len(v) for _, v in rows))
    lines = [
        f"{'model'.ljust(name_w)}  {metric_label.rjust(val_w)}",
        f"{'-' * name_w}  {'-' * val_w}",
    ]
    for i, (name, val) in enumerate(rows):
        if i == len(rows) - 1:
            lines.append(f"{'-' * name_w}  {'-' * val_w}")
        lines.append(f"{name.ljust(name_w)}  {val.rjust(val_w)}")
    return "\n".join(lines) + "\n"
