"""Evaluation report serialization: CSV, Markdown table, JSON.

The Markdown layout mirrors the benchmark table shape used throughout this
project: one row per architecture x measure, metric columns rendered as
"Avg ± Std" with 3-decimal half-up rounding. JSON round-trips losslessly to
an equal in-memory report.
"""

from __future__ import annotations

import io
import json
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum

from .evaluation import (
    AggregateRow,
    EvaluationReport,
    FailedCell,
    MetricsRow,
)
from .similarity import DissimilarityMeasure

_MEASURE_LABELS = {
    DissimilarityMeasure.L1: "L1",
    DissimilarityMeasure.L2: "L2",
    DissimilarityMeasure.COSINE: "Cosine",
}


class ReportFormat(str, Enum):
    CSV = "csv"
    MARKDOWN_TABLE = "markdown"
    JSON = "json"


def round_half_up(value: float, places: int = 3) -> float:
    """Decimal half-up rounding (3.5 -> 4), unlike banker's round()."""
    quantum = Decimal(1).scaleb(-places)
    return float(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def format_metric(value: float, places: int = 3) -> str:
    return f"{round_half_up(value, places):.{places}f}"


def format_mean_std(mean: float, std: float) -> str:
    return f"{format_metric(mean)} ± {format_metric(std)}"


def _metric_columns(ks: tuple[int, ...]) -> list[str]:
    return [f"Prec@{k}" for k in ks] + ["R-Prec"]


def emit_report(report: EvaluationReport, fmt: ReportFormat) -> bytes:
    """Serialize deterministically in the requested format."""
    if not report.aggregates and not report.per_query:
        raise ValueError("report is empty")
    if fmt is ReportFormat.CSV:
        return _emit_csv(report)
    if fmt is ReportFormat.MARKDOWN_TABLE:
        return _emit_markdown(report)
    return _emit_json(report)


def _emit_csv(report: EvaluationReport) -> bytes:
    out = io.StringIO()
    ks = report.precision_ks
    header = ["backend", "measure"]
    for k in ks:
        header += [f"prec_at_{k}_mean", f"prec_at_{k}_std"]
    header += ["r_prec_mean", "r_prec_std", "queries"]
    out.write(",".join(header) + "\n")
    for row in report.aggregates:
        cells = [row.backend_id, row.measure.value]
        for k in ks:
            mean, std = row.precisions[k]
            cells += [format_metric(mean), format_metric(std)]
        cells += [
            format_metric(row.r_precision[0]),
            format_metric(row.r_precision[1]),
            str(row.query_count),
        ]
        out.write(",".join(cells) + "\n")
    return out.getvalue().encode("utf-8")


def _emit_markdown(report: EvaluationReport) -> bytes:
    ks = report.precision_ks
    columns = _metric_columns(ks)
    out = io.StringIO()
    out.write("| Architecture | Measure | " + " | ".join(f"{c} (Avg ± Std)" for c in columns) + " |\n")
    out.write("|" + "---|" * (2 + len(columns)) + "\n")
    for row in report.aggregates:
        cells = [row.backend_id, _MEASURE_LABELS[row.measure]]
        cells += [format_mean_std(*row.precisions[k]) for k in ks]
        cells.append(format_mean_std(*row.r_precision))
        out.write("| " + " | ".join(cells) + " |\n")
    return out.getvalue().encode("utf-8")


def _emit_json(report: EvaluationReport) -> bytes:
    payload = {
        "corpus_fingerprint": report.corpus_fingerprint,
        "timestamp": report.timestamp,
        "precision_ks": list(report.precision_ks),
        "per_query": [
            {
                "query_id": row.query_id,
                "backend_id": row.backend_id,
                "measure": row.measure.value,
                "precisions": {str(k): v for k, v in row.precisions.items()},
                "r_precision": row.r_precision,
                "relevant_count": row.relevant_count,
            }
            for row in report.per_query
        ],
        "aggregates": [
            {
                "backend_id": row.backend_id,
                "measure": row.measure.value,
                "precisions": {
                    str(k): {"mean": mean, "std": std}
                    for k, (mean, std) in row.precisions.items()
                },
                "r_precision": {
                    "mean": row.r_precision[0],
                    "std": row.r_precision[1],
                },
                "query_count": row.query_count,
            }
            for row in report.aggregates
        ],
        "failed_cells": [
            {
                "backend_id": cell.backend_id,
                "measure": cell.measure.value,
                "error": cell.error,
            }
            for cell in report.failed_cells
        ],
    }
    return json.dumps(payload, indent=2, sort_keys=True).encode("utf-8")


def report_from_json(data: bytes | str) -> EvaluationReport:
    raw = json.loads(data)
    per_query = tuple(
        MetricsRow(
            query_id=row["query_id"],
            measure=DissimilarityMeasure(row["measure"]),
            backend_id=row["backend_id"],
            precisions={int(k): v for k, v in row["precisions"].items()},
            r_precision=row["r_precision"],
            relevant_count=row["relevant_count"],
        )
        for row in raw["per_query"]
    )
    aggregates = tuple(
        AggregateRow(
            backend_id=row["backend_id"],
            measure=DissimilarityMeasure(row["measure"]),
            precisions={
                int(k): (v["mean"], v["std"]) for k, v in row["precisions"].items()
            },
            r_precision=(row["r_precision"]["mean"], row["r_precision"]["std"]),
            query_count=row["query_count"],
        )
        for row in raw["aggregates"]
    )
    failed = tuple(
        FailedCell(
            backend_id=cell["backend_id"],
            measure=DissimilarityMeasure(cell["measure"]),
            error=cell["error"],
        )
        for cell in raw["failed_cells"]
    )
    return EvaluationReport(
        per_query=per_query,
        aggregates=aggregates,
        corpus_fingerprint=raw["corpus_fingerprint"],
        timestamp=raw["timestamp"],
        precision_ks=tuple(raw["precision_ks"]),
        failed_cells=failed,
    )
