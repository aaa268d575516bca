"""Render stored run records into learning-curve figures, diagnostics
figures, and the strategy-by-(learner, challenge, budget) summary table.

Everything here is a pure function of the record files: regenerating with
unchanged records reproduces identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .acquisition import STRATEGY_NAMES
from .harness import CellAggregate, RunRecord, aggregate_seeds

LEARNER_ORDER = ("spv", "fixmatch", "pl", "flexmatch")
CHALLENGE_ORDER = ("bci", "bcs", "wci", "none")
STRATEGY_COLORS = {"Rnd": "black", "Unc": "tab:orange", "Cov": "tab:blue",
                   "Bal": "tab:green", "Rep": "tab:red"}

Column = tuple[str, str, int]  # (learner, challenge, budget)


@dataclass
class SummaryTable:
    rows: list[str]  # strategies
    columns: list[Column]
    cells: dict[tuple[str, Column], float]
    best: dict[Column, set[str]]  # ties flagged jointly
    worst: dict[Column, set[str]]


def _sort_key(col: Column) -> tuple[int, int, int]:
    learner, challenge, budget = col
    return (LEARNER_ORDER.index(learner) if learner in LEARNER_ORDER else 99,
            CHALLENGE_ORDER.index(challenge) if challenge in CHALLENGE_ORDER else 99,
            budget)


def summary_table(records: list[RunRecord],
                  budgets: tuple[int, ...] | None = (50, 250)) -> SummaryTable:
    """Mean test accuracy per strategy and column, with per-column best/worst
    flags computed from the stored means."""
    agg = aggregate_seeds(records)
    cells: dict[tuple[str, Column], float] = {}
    columns: set[Column] = set()
    rows: set[str] = set()
    for (challenge, learner, strategy, budget), cell in agg.items():
        if budgets is not None and budget not in budgets:
            continue
        col = (learner, challenge, budget)
        columns.add(col)
        rows.add(strategy)
        cells[(strategy, col)] = cell.mean
    if not cells:
        raise ValueError("no records match the requested budgets")
    ordered_rows = [s for s in STRATEGY_NAMES if s in rows] + sorted(rows - set(STRATEGY_NAMES))
    ordered_cols = sorted(columns, key=_sort_key)
    best, worst = {}, {}
    for col in ordered_cols:
        vals = {s: cells[(s, col)] for s in ordered_rows if (s, col) in cells}
        hi, lo = max(vals.values()), min(vals.values())
        best[col] = {s for s, v in vals.items() if v == hi}
        worst[col] = {s for s, v in vals.items() if v == lo}
    return SummaryTable(rows=ordered_rows, columns=ordered_cols, cells=cells,
                        best=best, worst=worst)


def render_summary_text(table: SummaryTable) -> str:
    """Plain-text grid; '*' marks the column best, '!' the column worst."""
    header = ["strategy"] + [f"{l}/{c}/{b}" for l, c, b in table.columns]
    widths = [max(len(header[0]), 8)] + [max(len(h), 8) for h in header[1:]]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for strategy in table.rows:
        row = [strategy.ljust(widths[0])]
        for col, w in zip(table.columns, widths[1:]):
            v = table.cells.get((strategy, col))
            if v is None:
                cell = "-"
            else:
                mark = "*" if strategy in table.best[col] else \
                       "!" if strategy in table.worst[col] else " "
                cell = f"{100 * v:.1f}{mark}"
            row.append(cell.ljust(w))
        lines.append("  ".join(row))
    lines.append("")
    lines.append("* column best   ! column worst   (mean test accuracy, %)")
    return "\n".join(lines) + "\n"


def render_summary_csv(table: SummaryTable) -> str:
    lines = ["strategy," + ",".join(f"{l}/{c}/{b}" for l, c, b in table.columns)]
    for strategy in table.rows:
        vals = []
        for col in table.columns:
            v = table.cells.get((strategy, col))
            vals.append("" if v is None else repr(float(v)))
        lines.append(strategy + "," + ",".join(vals))
    return "\n".join(lines) + "\n"


def _curve_data(records: list[RunRecord], challenge: str, learner: str,
                metric: str) -> dict[str, tuple[list[int], list[float]]]:
    agg = aggregate_seeds(records, metric=metric)
    curves: dict[str, dict[int, float]] = {}
    for (ch, le, strategy, budget), cell in agg.items():
        if ch == challenge and le == learner:
            curves.setdefault(strategy, {})[budget] = cell.mean
    return {s: (sorted(pts), [pts[b] for b in sorted(pts)])
            for s, pts in curves.items()}


def _sidecar(path: Path, curves: dict[str, tuple[list[int], list[float]]]) -> None:
    lines = ["strategy,budget,value"]
    for strategy in sorted(curves):
        budgets, values = curves[strategy]
        for b, v in zip(budgets, values):
            lines.append(f"{strategy},{b},{repr(float(v))}")
    path.write_text("\n".join(lines) + "\n")


def plot_learning_curves(records: list[RunRecord], out_dir: str | Path,
                         dpi: int = 150) -> list[Path]:
    """Accuracy-vs-budget figures per (challenge, learner); one line per
    strategy, random in black; a clean-corpus reference (challenge "none",
    same learner, random selection) is drawn solid while challenge curves
    are dashed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = sorted({(r.challenge, r.learner) for r in records if r.challenge != "none"},
                   key=lambda p: (_sort_key((p[1], p[0], 0))))
    written = []
    for challenge, learner in pairs:
        curves = _curve_data(records, challenge, learner, "test_accuracy")
        reference = _curve_data(records, "none", learner, "test_accuracy")
        fig, ax = plt.subplots(figsize=(5, 3.4))
        for strategy in [s for s in STRATEGY_NAMES if s in curves]:
            budgets, values = curves[strategy]
            ax.plot(budgets, values, "--", marker="o", ms=3,
                    color=STRATEGY_COLORS.get(strategy, None), label=strategy)
        if "Rnd" in reference:
            budgets, values = reference["Rnd"]
            ax.plot(budgets, values, "-", marker="s", ms=3, color="gray",
                    label="clean/Rnd")
        ax.set_xlabel("labeling budget")
        ax.set_ylabel("test accuracy")
        ax.set_title(f"{learner} on {challenge}")
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / f"curves_{challenge}_{learner}.png"
        fig.savefig(path, dpi=dpi)
        plt.close(fig)
        _sidecar(out_dir / f"curves_{challenge}_{learner}.csv", curves)
        written.append(path)
    return written


def plot_diagnostics(records: list[RunRecord], out_dir: str | Path,
                     dpi: int = 150) -> list[Path]:
    """Pseudo-label entropy and wrong-pseudo-label fraction vs budget."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = (("pl_entropy", "pseudo-label entropy (nats)"),
               ("wrong_pl_fraction", "wrong pseudo-label fraction"))
    pairs = sorted({(r.challenge, r.learner) for r in records
                    if r.learner in ("pl", "fixmatch", "flexmatch")},
                   key=lambda p: (_sort_key((p[1], p[0], 0))))
    written = []
    for metric, label in metrics:
        for challenge, learner in pairs:
            curves = _curve_data(records, challenge, learner, metric)
            if not curves:
                continue
            fig, ax = plt.subplots(figsize=(5, 3.4))
            for strategy in [s for s in STRATEGY_NAMES if s in curves]:
                budgets, values = curves[strategy]
                ax.plot(budgets, values, marker="o", ms=3,
                        color=STRATEGY_COLORS.get(strategy, None), label=strategy)
            ax.set_xlabel("labeling budget")
            ax.set_ylabel(label)
            ax.set_title(f"{learner} on {challenge}")
            ax.grid(alpha=0.3)
            ax.legend(fontsize=8)
            fig.tight_layout()
            path = out_dir / f"{metric}_{challenge}_{learner}.png"
            fig.savefig(path, dpi=dpi)
            plt.close(fig)
            written.append(path)
    return written


def write_report(records: list[RunRecord], out_dir: str | Path,
                 budgets: tuple[int, ...] | None = (50, 250)) -> dict[str, list[Path]]:
    """Full report: summary table (text + csv), learning curves, diagnostics."""
    if not records:
        raise ValueError("record set is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = summary_table(records, budgets=budgets)
    text_path = out_dir / "summary.txt"
    csv_path = out_dir / "summary.csv"
    text_path.write_text(render_summary_text(table))
    csv_path.write_text(render_summary_csv(table))
    curves = plot_learning_curves(records, out_dir)
    diagnostics = plot_diagnostics(records, out_dir)
    return {"tables": [text_path, csv_path], "curves": curves,
            "diagnostics": diagnostics}
