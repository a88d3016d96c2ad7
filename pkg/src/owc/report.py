"""Deterministic rendering of analysis outputs.

Each section renders to CSV, Markdown, and a plot-data JSON series. Numbers
are rounded half away from zero to one decimal at this layer only; all the
analysis math stays double precision. Output ordering is canonical (sorted
keys), so byte-identical inputs produce byte-identical files.
"""

from __future__ import annotations

import io
import csv
import json
from decimal import Decimal, ROUND_HALF_UP
from pathlib import Path

from .analysis import (
    AggregateTable,
    BucketRow,
    DeltaReport,
    EloRunResult,
    PairwiseAgreement,
    QUADRANT_ORDER,
    QuadrantStats,
    TagMatchReport,
)


def round1(x: float) -> float:
    """Round to one decimal, ties away from zero."""
    return float(Decimal(repr(x)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def fmt1(x: float) -> str:
    return f"{round1(x):.1f}"


def _csv_buffer() -> tuple[io.StringIO, csv.writer]:
    buf = io.StringIO()
    return buf, csv.writer(buf, lineterminator="\n")


def _md_table(header: list[str], rows: list[list[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |",
             "| " + " | ".join("---" for _ in header) + " |"]
    lines.extend("| " + " | ".join(row) + " |" for row in rows)
    return "\n".join(lines) + "\n"


def _dump_json(obj: object) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------------------
# Aggregate tables


def aggregate_csv(table: AggregateTable) -> str:
    buf, writer = _csv_buffer()
    writer.writerow(["model", "scope", "n", "ti", "li", "ss", "cs"])
    for row in table.rows:
        writer.writerow(
            [row.model_id, row.scope, row.n, fmt1(row.ti), fmt1(row.li), fmt1(row.ss), fmt1(row.cs)]
        )
    return buf.getvalue()


def aggregate_md(table: AggregateTable, title: str) -> str:
    rows = [
        [row.model_id, row.scope, str(row.n), fmt1(row.ti), fmt1(row.li), fmt1(row.ss), fmt1(row.cs)]
        for row in table.rows
    ]
    return f"## {title}\n\n" + _md_table(["Model", "Scope", "N", "TI", "LI", "SS", "CS"], rows)


def aggregate_json(table: AggregateTable) -> dict:
    return {
        "kind": "aggregate",
        "level": table.level,
        "rows": [
            {
                "model": row.model_id,
                "scope": row.scope,
                "n": row.n,
                "ti": row.ti,
                "li": row.li,
                "ss": row.ss,
                "cs": row.cs,
            }
            for row in table.rows
        ],
    }


# ---------------------------------------------------------------------------
# Quadrants


def quadrant_csv(stats: QuadrantStats) -> str:
    buf, writer = _csv_buffer()
    writer.writerow(["model", "scope", "n"] + [q.value for q in QUADRANT_ORDER])
    for row in stats.rows:
        writer.writerow(
            [row.model_id, row.scope, row.n] + [fmt1(f * 100.0) for f in row.fractions]
        )
    return buf.getvalue()


def quadrant_md(stats: QuadrantStats) -> str:
    rows = [
        [row.model_id, row.scope, str(row.n)] + [fmt1(f * 100.0) for f in row.fractions]
        for row in stats.rows
    ]
    header = ["Model", "Scope", "N"] + [q.value for q in QUADRANT_ORDER]
    return f"## Prediction types ({stats.level} level, %)\n\n" + _md_table(header, rows)


def quadrant_json(stats: QuadrantStats) -> dict:
    # Stacked-bar series: one series per quadrant, one bar per (model, scope).
    labels = [f"{row.model_id}/{row.scope}" for row in stats.rows]
    series = {
        q.value: [row.fractions[i] * 100.0 for row in stats.rows]
        for i, q in enumerate(QUADRANT_ORDER)
    }
    return {"kind": "stacked_bar", "level": stats.level, "labels": labels, "series": series}


# ---------------------------------------------------------------------------
# Agreement


def buckets_csv(rows: list[BucketRow]) -> str:
    buf, writer = _csv_buffer()
    writer.writerow(["dataset", "n_samples", "high", "medium", "low"])
    for row in rows:
        writer.writerow(
            [row.dataset_id, row.n_samples, fmt1(row.high), fmt1(row.medium), fmt1(row.low)]
        )
    return buf.getvalue()


def buckets_md(rows: list[BucketRow]) -> str:
    body = [
        [row.dataset_id, str(row.n_samples), fmt1(row.high), fmt1(row.medium), fmt1(row.low)]
        for row in rows
    ]
    return "## Correct-prediction agreement (%)\n\n" + _md_table(
        ["Dataset", "N", "High", "Medium", "Low"], body
    )


def buckets_json(rows: list[BucketRow]) -> dict:
    return {
        "kind": "agreement_buckets",
        "rows": [
            {
                "dataset": row.dataset_id,
                "n_samples": row.n_samples,
                "low": row.low,
                "medium": row.medium,
                "high": row.high,
            }
            for row in rows
        ],
    }


def pairwise_csv(agreement: PairwiseAgreement) -> str:
    buf, writer = _csv_buffer()
    writer.writerow(["model"] + list(agreement.models))
    for model, row in zip(agreement.models, agreement.matrix):
        writer.writerow([model] + [fmt1(v) for v in row])
    return buf.getvalue()


def pairwise_md(agreement: PairwiseAgreement) -> str:
    body = [
        [model] + [fmt1(v) for v in row]
        for model, row in zip(agreement.models, agreement.matrix)
    ]
    title = f"## Shared {agreement.quadrant} predictions ({agreement.base} base, %)"
    return title + "\n\n" + _md_table(["Model"] + list(agreement.models), body)


def pairwise_json(agreement: PairwiseAgreement) -> dict:
    return {
        "kind": "matrix",
        "quadrant": agreement.quadrant,
        "base": agreement.base,
        "models": list(agreement.models),
        "matrix": [list(row) for row in agreement.matrix],
    }


# ---------------------------------------------------------------------------
# Elo


def elo_csv(result: EloRunResult) -> str:
    buf, writer = _csv_buffer()
    writer.writerow(["scope", "model", "rating", "matches_played", "skipped_pairs"])
    for dataset in sorted(result.per_dataset):
        table = result.per_dataset[dataset]
        for model in sorted(table.ratings):
            writer.writerow(
                [dataset, model, fmt1(table.ratings[model]), table.matches_played[model],
                 table.skipped_pairs]
            )
    for model in sorted(result.average.ratings):
        writer.writerow(
            ["average", model, fmt1(result.average.ratings[model]),
             result.average.matches_played[model], result.average.skipped_pairs]
        )
    return buf.getvalue()


def elo_md(result: EloRunResult) -> str:
    ranked = sorted(
        result.average.ratings.items(), key=lambda item: (-item[1], item[0])
    )
    rows = [
        [str(rank), model, fmt1(rating)]
        for rank, (model, rating) in enumerate(ranked, start=1)
    ]
    return "## Average ratings from pairwise judging\n\n" + _md_table(
        ["Rank", "Model", "Rating"], rows
    )


def elo_json(result: EloRunResult) -> dict:
    return {"kind": "elo", **result.to_dict()}


# ---------------------------------------------------------------------------
# Tag matching


def tagmatch_csv(report: TagMatchReport) -> str:
    buf, writer = _csv_buffer()
    writer.writerow(["model", "n_wrong", "n_matched", "matched_pct"])
    for row in report.rows:
        writer.writerow([row.model_id, row.n_wrong, row.n_matched, fmt1(row.fraction * 100.0)])
    return buf.getvalue()


def tagmatch_md(report: TagMatchReport) -> str:
    body = [
        [row.model_id, str(row.n_wrong), str(row.n_matched), fmt1(row.fraction * 100.0)]
        for row in report.rows
    ]
    title = (
        f"## Wrong predictions matching an image tag "
        f"(wrong by {report.wrong_by}, threshold {report.threshold})"
    )
    return title + "\n\n" + _md_table(["Model", "Wrong", "Matched", "Matched %"], body)


def tagmatch_json(report: TagMatchReport) -> dict:
    return {
        "kind": "bar",
        "wrong_by": report.wrong_by,
        "threshold": report.threshold,
        "labels": [row.model_id for row in report.rows],
        "series": {
            "matched_pct": [row.fraction * 100.0 for row in report.rows],
            "n_wrong": [row.n_wrong for row in report.rows],
        },
    }


# ---------------------------------------------------------------------------
# Deltas


def _fmt_signed(x: float) -> str:
    value = round1(x)
    return f"{value:+.1f}"


def delta_csv(report: DeltaReport) -> str:
    buf, writer = _csv_buffer()
    writer.writerow(
        ["model", "scope", "n", "d_ti", "d_li", "d_cs"] + [f"d_{q.value}" for q in QUADRANT_ORDER]
    )
    for row in list(report.rows) + list(report.macro_rows):
        writer.writerow(
            [row.model_id, row.scope, row.n, _fmt_signed(row.d_ti), _fmt_signed(row.d_li),
             _fmt_signed(row.d_cs)] + [_fmt_signed(v) for v in row.d_quadrants]
        )
    return buf.getvalue()


def delta_md(report: DeltaReport) -> str:
    header = ["Model", "Scope", "N", "ΔTI", "ΔLI", "ΔCS"] + [
        f"Δ{q.value}" for q in QUADRANT_ORDER
    ]
    body = [
        [row.model_id, row.scope, str(row.n), _fmt_signed(row.d_ti), _fmt_signed(row.d_li),
         _fmt_signed(row.d_cs)] + [_fmt_signed(v) for v in row.d_quadrants]
        for row in list(report.rows) + list(report.macro_rows)
    ]
    return "## Variant minus base (percentage points)\n\n" + _md_table(header, body)


def delta_json(report: DeltaReport) -> dict:
    def encode(row):
        return {
            "model": row.model_id,
            "scope": row.scope,
            "n": row.n,
            "d_ti": row.d_ti,
            "d_li": row.d_li,
            "d_cs": row.d_cs,
            "d_quadrants": {
                q.value: row.d_quadrants[i] for i, q in enumerate(QUADRANT_ORDER)
            },
        }

    return {
        "kind": "delta",
        "rows": [encode(r) for r in report.rows],
        "macro_rows": [encode(r) for r in report.macro_rows],
    }


def write_section(outdir: str | Path, name: str, csv_text: str, md_text: str, json_obj: dict) -> None:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{name}.csv").write_text(csv_text, encoding="utf-8")
    (out / f"{name}.md").write_text(md_text, encoding="utf-8")
    (out / f"{name}.json").write_text(_dump_json(json_obj), encoding="utf-8")
