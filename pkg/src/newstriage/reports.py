"""Report rendering: aligned text tables, CSV records, and figures.

Every report path writes the machine-readable delimited file first — that
is the interface other tooling consumes — and renders a matplotlib figure
next to it for humans. Figures are plain Agg PNGs; no display needed.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .calibration import OperatingPoint, Selection
from .monitor import DriftReport, MetricsBucket
from .records import SCORED_LANGUAGES, Source
from .shadow import ComparisonReport, DiscrepancyCell

FIG_SIZE = (7.0, 4.2)
FIG_DPI = 140

_LANG_COLORS = {"en": "#1f77b4", "fr": "#d62728", "ar": "#2ca02c"}


def _fmt(value, places: int = 3) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.{places}f}"
    return str(value)


def text_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    def line(cells):
        return "  ".join(c.ljust(widths[i]) for i, c in enumerate(cells)).rstrip()
    sep = "-" * (sum(widths) + 2 * (len(widths) - 1))
    return "\n".join([line(headers), sep] + [line(r) for r in rows]) + "\n"


# -- operating tables -------------------------------------------------------

def operating_table_csv(table: Sequence[OperatingPoint], path: Path) -> None:
    sources = sorted({s for p in table for s in p.per_source_volume}, key=lambda s: s.value)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["threshold", "recall", "precision", "volume"]
            + [f"volume_{s.value.lower()}" for s in sources]
        )
        for p in table:
            writer.writerow(
                [
                    f"{p.threshold:.6g}",
                    _fmt(p.recall),
                    _fmt(p.precision),
                    p.weekly_volume,
                ]
                + [p.per_source_volume.get(s, 0) for s in sources]
            )


def operating_table_text(table: Sequence[OperatingPoint], selection: Optional[Selection] = None) -> str:
    chosen = selection.selected.threshold if selection and selection.feasible else None
    rows = []
    for p in table:
        mark = "*" if chosen is not None and p.threshold == chosen else ""
        rows.append(
            [f"{mark}{p.threshold:.6g}", _fmt(p.recall), _fmt(p.precision), str(p.weekly_volume)]
        )
    return text_table(["threshold", "recall", "precision", "volume/week"], rows)


def operating_table_figure(table: Sequence[OperatingPoint], path: Path, title: str = "") -> None:
    ts = [p.threshold for p in table]
    fig, ax1 = plt.subplots(figsize=FIG_SIZE)
    ax1.plot(ts, [p.precision for p in table], "o-", color="#1f77b4", label="precision", ms=3)
    ax1.plot(ts, [p.recall for p in table], "s-", color="#d62728", label="recall", ms=3)
    ax1.set_xlabel("relevance threshold")
    ax1.set_ylabel("precision / recall")
    ax1.set_ylim(0, 1.05)
    ax2 = ax1.twinx()
    ax2.plot(ts, [p.weekly_volume for p in table], "-", color="#7f7f7f", alpha=0.7, label="weekly volume")
    ax2.set_ylabel("articles to review / week")
    lines1, labels1 = ax1.get_legend_handles_labels()
    lines2, labels2 = ax2.get_legend_handles_labels()
    ax1.legend(lines1 + lines2, labels1 + labels2, loc="center left", fontsize=8)
    if title:
        ax1.set_title(title)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=FIG_DPI)
    plt.close(fig)


def write_operating_report(
    table: Sequence[OperatingPoint],
    out_dir: Path,
    selection: Optional[Selection] = None,
    label: str = "operating",
    figures: bool = True,
) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": out_dir / f"{label}_table.csv",
        "txt": out_dir / f"{label}_table.txt",
    }
    operating_table_csv(table, paths["csv"])
    paths["txt"].write_text(operating_table_text(table, selection), encoding="utf-8")
    if figures:
        paths["png"] = out_dir / f"{label}_table.png"
        operating_table_figure(table, paths["png"], title=label)
    return paths


# -- shadow comparison -------------------------------------------------------

def comparison_text(report: ComparisonReport) -> str:
    b, d = report.baseline, report.deployment
    rows = [
        ["Crawled", str(b.crawled), str(d.crawled), report.crawled.label],
        ["Predicted Relevant", str(b.predicted_total), str(d.predicted_total), report.predicted.label],
    ]
    for lang in SCORED_LANGUAGES:
        rows.append(
            [f"-- {lang.value}", str(b.predicted.get(lang, 0)), str(d.predicted.get(lang, 0)), ""]
        )
    rows.append(
        [
            "Confirmed Relevant",
            f"{b.confirmed_total}/{b.reviewed_total}",
            f"{d.confirmed_total}/{d.reviewed_total}",
            report.confirmed.label,
        ]
    )
    for lang in SCORED_LANGUAGES:
        bc, br = b.confirmed.get(lang, (0, 0))
        dc, dr = d.confirmed.get(lang, (0, 0))
        prec = report.precision_by_language.get(lang)
        rows.append(
            [f"-- {lang.value}", f"{bc}/{br}", f"{dc}/{dr}", "" if prec is None else f"p={prec:.2f}"]
        )
    rows.append(
        ["Review effort", str(b.reviewed_total), str(d.reviewed_total), report.review_effort.label]
    )
    return text_table(["Pipeline Stage", b.label, d.label, "multiplier"], rows)


def comparison_csv(report: ComparisonReport, path: Path) -> None:
    rec = report.to_record()
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "baseline_weekly", "deployment_weekly", "ratio", "one_decimal", "label"])
        b, d = report.baseline, report.deployment
        for stage, mult, bv, dv in [
            ("crawled", report.crawled, b.crawled, d.crawled),
            ("predicted_relevant", report.predicted, b.predicted_total, d.predicted_total),
            ("confirmed_relevant", report.confirmed, b.confirmed_total, d.confirmed_total),
            ("review_effort", report.review_effort, b.reviewed_total, d.reviewed_total),
        ]:
            writer.writerow(
                [stage, b.weekly(bv), d.weekly(dv), _fmt(mult.ratio, 4), _fmt(mult.one_decimal, 1), mult.label]
            )
        for lang in SCORED_LANGUAGES:
            writer.writerow(
                [
                    f"precision_{lang.value}",
                    _fmt(rec["precision"][lang.value]["baseline"]),
                    _fmt(rec["precision"][lang.value]["deployment"]),
                    "", "", "",
                ]
            )


def comparison_figure(report: ComparisonReport, path: Path) -> None:
    stages = ["crawled", "predicted", "confirmed", "review effort"]
    mults = [report.crawled, report.predicted, report.confirmed, report.review_effort]
    values = [m.ratio if m.ratio is not None else 0.0 for m in mults]
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    bars = ax.bar(stages, values, color="#1f77b4", width=0.55)
    for bar, m in zip(bars, mults):
        ax.text(
            bar.get_x() + bar.get_width() / 2,
            bar.get_height(),
            m.label,
            ha="center",
            va="bottom",
            fontsize=9,
        )
    ax.set_ylabel("deployment / baseline (week-normalized)")
    ax.set_title("Pipeline stage multipliers")
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=FIG_DPI)
    plt.close(fig)


def write_comparison_report(
    report: ComparisonReport, out_dir: Path, figures: bool = True
) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": out_dir / "comparison.csv",
        "txt": out_dir / "comparison.txt",
        "json": out_dir / "comparison.json",
    }
    comparison_csv(report, paths["csv"])
    paths["txt"].write_text(comparison_text(report), encoding="utf-8")
    paths["json"].write_text(
        json.dumps(report.to_record(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    if figures:
        paths["png"] = out_dir / "comparison.png"
        comparison_figure(report, paths["png"])
    return paths


# -- discrepancies -----------------------------------------------------------

def discrepancy_text(cells: Sequence[DiscrepancyCell]) -> str:
    rows = [
        [c.category.value, c.language.value, _fmt(c.offline_f1), _fmt(c.live_f1), c.flag.value]
        for c in cells
    ]
    return text_table(["category", "language", "offline_f1", "live_f1", "flag"], rows)


def discrepancy_csv(cells: Sequence[DiscrepancyCell], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["category", "language", "offline_f1", "live_f1", "flag"])
        for c in cells:
            writer.writerow(
                [c.category.value, c.language.value, _fmt(c.offline_f1), _fmt(c.live_f1), c.flag.value]
            )


# -- monitoring ---------------------------------------------------------------

def metrics_csv(buckets: Sequence[MetricsBucket], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["period", "language", "reviewed", "confirmed", "precision"])
        for b in buckets:
            writer.writerow([b.period, b.language.value, b.reviewed, b.confirmed, _fmt(b.precision, 4)])


def precision_series(buckets: Sequence[MetricsBucket]) -> dict[str, list[tuple[str, float]]]:
    """Plot-ready per-language series: (period, precision) points in order."""
    series: dict[str, list[tuple[str, float]]] = {}
    for b in sorted(buckets, key=lambda b: (b.language.value, b.period)):
        if b.precision is not None:
            series.setdefault(b.language.value, []).append((b.period, b.precision))
    return series


def series_csv(buckets: Sequence[MetricsBucket], path: Path) -> None:
    series = precision_series(buckets)
    periods = sorted({b.period for b in buckets})
    langs = sorted(series)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["period"] + langs)
        for period in periods:
            row = [period]
            for lang in langs:
                match = [p for per, p in series[lang] if per == period]
                row.append(f"{match[0]:.4f}" if match else "")
            writer.writerow(row)


def precision_over_time_figure(
    buckets: Sequence[MetricsBucket], drift: Optional[DriftReport], path: Path
) -> None:
    series = precision_series(buckets)
    alert_keys = {(a.language.value, a.period) for a in (drift.alerts if drift else [])}
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    for lang, points in sorted(series.items()):
        xs = [p for p, _ in points]
        ys = [v for _, v in points]
        color = _LANG_COLORS.get(lang, "#555555")
        ax.plot(xs, ys, "o-", label=lang, color=color, ms=4)
        flagged = [(x, y) for x, y in points if (lang, x) in alert_keys]
        if flagged:
            ax.scatter(
                [x for x, _ in flagged],
                [y for _, y in flagged],
                marker="v",
                s=90,
                color=color,
                edgecolors="black",
                zorder=5,
                label=f"{lang} drift alert",
            )
    ax.set_xlabel("month")
    ax.set_ylabel("live precision (confirmed / reviewed)")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    ax.set_title("Relevance precision over time by language")
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=FIG_DPI)
    plt.close(fig)


def write_monitor_report(
    buckets: Sequence[MetricsBucket],
    drift: DriftReport,
    out_dir: Path,
    figures: bool = True,
) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": out_dir / "metrics.csv",
        "series": out_dir / "precision_series.csv",
        "alerts": out_dir / "alerts.log",
    }
    metrics_csv(buckets, paths["csv"])
    series_csv(buckets, paths["series"])
    lines = [a.log_line() for a in drift.alerts]
    lines += [
        f"DRIFT_STATUS language={s.language.value} status={s.status} buckets={s.n_buckets}"
        for s in drift.statuses
    ]
    paths["alerts"].write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    if figures:
        paths["png"] = out_dir / "precision_over_time.png"
        precision_over_time_figure(buckets, drift, paths["png"])
    return paths
