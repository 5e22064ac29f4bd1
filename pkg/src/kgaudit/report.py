"""Audit report rendering: plain-text table, CSV, JSON, and figures.

The table mirrors the audit-summary layout of one row per suite with
KMC-count columns headed ROUGE and Entail., followed by dataset-level
means.  When a full (non-deduplicated) suite was audited alongside the
deduplicated one, a redundancy-impact line quantifies how much the
redundant facts inflated the metrics.  Figures are rendered to PNG
files next to the CSV.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .config import Config
from .evaluation import (
    AuditReport,
    ImpactReport,
    aggregate,
    read_verdicts,
    redundancy_impact,
    write_impact,
    write_report,
)

CSV_COLUMNS = (
    "suite_id",
    "n_cases",
    "kmc_rouge_count",
    "kmc_entail_count",
    "mean_rouge",
    "entail_rate",
)


@dataclass
class ReportOutcome:
    """Rendered table text plus every file the report stage produced."""

    table: str
    artifacts: list[Path]


def render_table(reports: list[AuditReport], impact: ImpactReport | None = None) -> str:
    """Fixed-width summary: one row per suite, KMC counts then means."""
    headers = ("Suite", "Cases", "ROUGE", "Entail.", "Mean ROUGE", "Entail. rate")
    rows = [
        (
            r.suite_id,
            str(r.n_cases),
            str(r.kmc_rouge_count),
            str(r.kmc_entail_count),
            f"{r.mean_rouge:.4f}",
            f"{r.entail_rate:.4f}",
        )
        for r in reports
    ]
    widths = [
        max(len(headers[i]), *(len(row[i]) for row in rows)) if rows else len(headers[i])
        for i in range(len(headers))
    ]

    def fmt(cells: tuple[str, ...]) -> str:
        first = cells[0].ljust(widths[0])
        rest = [cells[i].rjust(widths[i]) for i in range(1, len(cells))]
        return "  ".join([first, *rest]).rstrip()

    lines = [fmt(headers), fmt(tuple("-" * w for w in widths))]
    lines.extend(fmt(row) for row in rows)
    if impact is not None:
        lines.append("")
        lines.append(
            "Redundancy impact vs. deduplicated suite: "
            f"KMC drop ROUGE {impact.kmc_drop_rouge_pct:.1f}% | "
            f"KMC drop Entail. {impact.kmc_drop_entail_pct:.1f}% | "
            f"ROUGE inflation {impact.rouge_inflation_pct:.1f}% | "
            f"Entail. inflation {impact.entail_inflation_pct:.1f}%"
        )
    return "\n".join(lines) + "\n"


def write_csv(path: Path, reports: list[AuditReport]) -> None:
    """One delimited row per suite, mirroring the table columns."""
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in reports:
            writer.writerow(
                [
                    r.suite_id,
                    r.n_cases,
                    r.kmc_rouge_count,
                    r.kmc_entail_count,
                    f"{r.mean_rouge:.6f}",
                    f"{r.entail_rate:.6f}",
                ]
            )


def render_figures(figures_dir: Path, reports: list[AuditReport]) -> list[Path]:
    """Bar charts of KMC counts and of dataset-level rates, as PNGs."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    figures_dir.mkdir(parents=True, exist_ok=True)
    suites = [r.suite_id for r in reports]
    positions = range(len(reports))
    width = 0.38
    outputs: list[Path] = []

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(
        [p - width / 2 for p in positions],
        [r.kmc_rouge_count for r in reports],
        width,
        label="ROUGE",
    )
    ax.bar(
        [p + width / 2 for p in positions],
        [r.kmc_entail_count for r in reports],
        width,
        label="Entail.",
    )
    ax.set_xticks(list(positions), suites)
    ax.set_ylabel("Knowledge memorization cases")
    ax.set_title("KMC counts per suite")
    ax.legend()
    fig.tight_layout()
    kmc_path = figures_dir / "kmc_counts.png"
    fig.savefig(kmc_path)
    plt.close(fig)
    outputs.append(kmc_path)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(
        [p - width / 2 for p in positions],
        [r.mean_rouge for r in reports],
        width,
        label="Mean ROUGE",
    )
    ax.bar(
        [p + width / 2 for p in positions],
        [r.entail_rate for r in reports],
        width,
        label="Entail. rate",
    )
    ax.set_xticks(list(positions), suites)
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("Score")
    ax.set_title("Dataset-level scores per suite")
    ax.legend()
    fig.tight_layout()
    rates_path = figures_dir / "scores.png"
    fig.savefig(rates_path)
    plt.close(fig)
    outputs.append(rates_path)
    return outputs


def render_run_report(cfg: Config, paths, manifest) -> ReportOutcome:
    """Aggregate judged verdicts and write every report artifact.

    Always writes the deduplicated-suite report JSON, table, CSV, and
    figures; adds the impact JSON when the full suite was audited too.
    """
    dedup_report = aggregate(
        read_verdicts(paths.verdicts), suite_id=f"{manifest.run_id}-dedup"
    )
    reports = [dedup_report]
    impact = None
    artifacts: list[Path] = []
    if cfg["run"]["emit_full_suite"]:
        full_report = aggregate(
            read_verdicts(paths.verdicts_full), suite_id=f"{manifest.run_id}-full"
        )
        reports = [full_report, dedup_report]
        impact = redundancy_impact(full_report, dedup_report)
        write_impact(paths.impact_json, impact)
        artifacts.append(paths.impact_json)
    write_report(paths.report_json, dedup_report)
    artifacts.append(paths.report_json)
    table = render_table(reports, impact)
    paths.report_table.write_text(table, encoding="utf-8")
    artifacts.append(paths.report_table)
    write_csv(paths.report_csv, reports)
    artifacts.append(paths.report_csv)
    artifacts.extend(render_figures(paths.figures_dir, reports))
    return ReportOutcome(table=table, artifacts=artifacts)
