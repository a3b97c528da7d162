"""Report rendering: delimited table, plain-text table with improvement
markers, and one grouped bar chart per (dataset, dimension)."""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import ValidationError
from .evaluation import EvalReport, ReportRow, _sanitize

CSV_COLUMNS = [
    "dataset",
    "dimension",
    "model",
    "variant",
    "status",
    "repeats",
    "srcc_mean",
    "srcc_sd",
    "plcc_mean",
    "plcc_sd",
    "srcc_delta",
    "plcc_delta",
    "srcc_improved",
    "plcc_improved",
    "srcc_best",
    "plcc_best",
    "error",
]


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report_csv(report: EvalReport, path: str) -> str:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in report.rows:
            writer.writerow(
                [
                    _cell(v)
                    for v in (
                        row.dataset, row.dimension, row.model_label, row.variant,
                        row.status, row.repeats, row.srcc_mean, row.srcc_sd,
                        row.plcc_mean, row.plcc_sd, row.srcc_delta, row.plcc_delta,
                        row.srcc_improved, row.plcc_improved, row.srcc_best,
                        row.plcc_best, row.error,
                    )
                ]
            )
    return path


def _metric_text(mean, sd, improved, best) -> str:
    if mean is None:
        return "-"
    text = f"{mean:.4f}"
    if sd is not None:
        text += f" ±{sd:.4f}"
    if improved:
        text += " ↑"
    if best:
        text += " *"
    return text


def write_report_txt(report: EvalReport, path: str) -> str:
    blocks: dict[tuple[str, str], list[ReportRow]] = {}
    for row in report.rows:
        blocks.setdefault((row.dataset, row.dimension), []).append(row)
    lines = []
    for (dataset, dimension), rows in sorted(blocks.items()):
        lines.append(f"=== {dataset} / {dimension} ===")
        width = max(len(r.model_label) for r in rows) + 2
        lines.append(f"{'model':<{width}}{'SRCC':<22}{'PLCC':<22}")
        for row in sorted(rows, key=lambda r: (r.variant != "baseline", r.model_label)):
            if row.status != "ok":
                lines.append(f"{row.model_label:<{width}}FAILED: {row.error}")
                continue
            srcc = _metric_text(row.srcc_mean, row.srcc_sd, row.srcc_improved, row.srcc_best)
            plcc = _metric_text(row.plcc_mean, row.plcc_sd, row.plcc_improved, row.plcc_best)
            lines.append(f"{row.model_label:<{width}}{srcc:<22}{plcc:<22}")
        lines.append("")
    lines.append("↑ improves on the matched image-only baseline; * best in column.")
    if any(r.dimension == "correspondence" for r in report.rows):
        lines.append(
            "note: on correspondence scores, adding the text encoder does not "
            "necessarily improve over the image-only baseline."
        )
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    return path


def write_charts(report: EvalReport, out_dir: str) -> list[str]:
    """One grouped SRCC/PLCC bar chart per (dataset, dimension)."""
    blocks: dict[tuple[str, str], list[ReportRow]] = {}
    for row in report.rows:
        if row.status == "ok":
            blocks.setdefault((row.dataset, row.dimension), []).append(row)
    paths = []
    for (dataset, dimension), rows in sorted(blocks.items()):
        rows = sorted(rows, key=lambda r: (r.variant != "baseline", r.model_label))
        labels = [r.model_label for r in rows]
        srcc = [r.srcc_mean for r in rows]
        plcc = [r.plcc_mean for r in rows]
        srcc_err = [r.srcc_sd or 0.0 for r in rows]
        plcc_err = [r.plcc_sd or 0.0 for r in rows]
        x = range(len(rows))
        fig, ax = plt.subplots(figsize=(max(6.0, 1.6 * len(rows)), 4.0))
        bar_w = 0.38
        ax.bar([i - bar_w / 2 for i in x], srcc, bar_w, yerr=srcc_err,
               label="SRCC", color="#4878cf", capsize=3)
        ax.bar([i + bar_w / 2 for i in x], plcc, bar_w, yerr=plcc_err,
               label="PLCC", color="#ee854a", capsize=3)
        ax.set_xticks(list(x))
        ax.set_xticklabels(labels, rotation=20, ha="right")
        ax.set_ylabel("correlation")
        ax.set_title(f"{dataset} / {dimension}")
        ax.axhline(0.0, color="gray", linewidth=0.8)
        ax.legend()
        fig.tight_layout()
        path = os.path.join(out_dir, f"{_sanitize(dataset)}__{_sanitize(dimension)}.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    return paths


def render_report(report: EvalReport, out_dir: str) -> dict[str, object]:
    """Write report.csv, report.txt, and the per-(dataset, dimension) charts."""
    if not report.rows:
        raise ValidationError("cannot render an empty report")
    try:
        os.makedirs(out_dir, exist_ok=True)
        probe = os.path.join(out_dir, ".write-probe")
        with open(probe, "w"):
            pass
        os.remove(probe)
    except OSError as exc:
        raise ValidationError(f"output dir not writable: {out_dir} ({exc})") from exc
    return {
        "csv": write_report_csv(report, os.path.join(out_dir, "report.csv")),
        "txt": write_report_txt(report, os.path.join(out_dir, "report.txt")),
        "charts": write_charts(report, out_dir),
    }
