"""Report emission: delimited per-language rows, aggregate tables, and
static SVG bar charts.

Everything here is deterministic for fixed inputs: CSV floats use repr
(shortest round-trip form) and the SVGs pin matplotlib's hash salt and
omit the date metadata, so identical runs produce identical bytes.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .harness import EvalReport, LanguageResult, summarize  # noqa: E402

RESULT_FIELDS = ("analysis", "init", "condition", "language_id", "metric",
                 "value", "censored")
SUMMARY_FIELDS = ("analysis", "init", "condition", "metric", "n_languages",
                  "mean", "std")
RATIO_FIELDS = ("analysis", "init", "name", "value")

_INIT_COLORS = ("#4878a8", "#b85c48", "#6aa866", "#8868a8")


def write_results(path: str | Path, results: Sequence[LanguageResult]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_FIELDS)
        for r in results:
            writer.writerow([r.analysis, r.init, r.condition, r.language_id,
                             r.metric, repr(r.value), int(r.censored)])
    return path


def read_results(path: str | Path) -> list[LanguageResult]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != RESULT_FIELDS:
            raise ValueError(f"{path}: unexpected results header {header}")
        return [
            LanguageResult(analysis=row[0], init=row[1], condition=row[2],
                           language_id=row[3], metric=row[4],
                           value=float(row[5]), censored=bool(int(row[6])))
            for row in reader
        ]


def write_summary(path: str | Path, report: EvalReport) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_FIELDS)
        for row in report.rows:
            writer.writerow([row.analysis, row.init, row.condition, row.metric,
                             row.n_languages, repr(row.mean), repr(row.std)])
    return path


def write_ratios(path: str | Path, report: EvalReport) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RATIO_FIELDS)
        for row in report.ratios:
            writer.writerow([row.analysis, row.init, row.name, repr(row.value)])
    return path


def render_figures(out_dir: str | Path, results: Sequence[LanguageResult]) -> list[Path]:
    """One grouped bar chart per analysis: conditions on the x axis, one
    bar per initialization, mean with a std whisker."""
    out_dir = Path(out_dir)
    report = summarize(results)
    paths: list[Path] = []
    analyses = sorted({row.analysis for row in report.rows})
    plt.rcParams["svg.hashsalt"] = "metasyl"
    for analysis in analyses:
        rows = [r for r in report.rows if r.analysis == analysis]
        conditions = sorted({r.condition for r in rows})
        inits = sorted({r.init for r in rows})
        metric = rows[0].metric
        fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(conditions), 3.6))
        width = 0.8 / max(len(inits), 1)
        x = np.arange(len(conditions))
        for j, init in enumerate(inits):
            by_condition = {r.condition: r for r in rows if r.init == init}
            means = [by_condition[c].mean if c in by_condition else np.nan
                     for c in conditions]
            stds = [by_condition[c].std if c in by_condition else 0.0
                    for c in conditions]
            ax.bar(x + (j - (len(inits) - 1) / 2) * width, means, width,
                   yerr=stds, capsize=3, label=init,
                   color=_INIT_COLORS[j % len(_INIT_COLORS)])
        ax.set_xticks(x)
        ax.set_xticklabels(conditions, rotation=20, ha="right", fontsize=8)
        ax.set_ylabel(metric)
        ax.set_title(analysis)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / f"fig-{analysis}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths.append(path)
    return paths


def write_report(out_dir: str | Path, results: Sequence[LanguageResult]) -> dict[str, list[Path]]:
    """Aggregate per-language rows into summary + ratio tables and figures,
    all written under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = summarize(results)
    tables = [
        write_summary(out_dir / "summary.csv", report),
        write_ratios(out_dir / "ratios.csv", report),
    ]
    figures = render_figures(out_dir, results)
    return {"tables": tables, "figures": figures}
