"""Report export: CSV rows plus Markdown tables in the comparison layouts.

Cells render as "0.600±0.248" (mean ± confidence half-width, three decimals);
the best method per dataset row is bolded. The voting table shows, per mode,
the best single-method mean, the best voted score and the signed gain
("+0.006" shape).
"""

from __future__ import annotations

import csv
from pathlib import Path

from .scoring import MODES, AggregateStat, ScoreReport


def format_mean_halfwidth(stat: AggregateStat) -> str:
    if stat.n < 2:
        return f"{stat.mean:.3f}"
    return f"{stat.mean:.3f}±{stat.half_width:.3f}"


def format_gain(delta: float) -> str:
    return f"{delta:+.3f}"


def _markdown_table(header: list[str], rows: list[list[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |",
             "| " + " | ".join("---" for _ in header) + " |"]
    for row in rows:
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def comparison_table(aggregates: dict[tuple[str, str, str], AggregateStat],
                     datasets: list[str], methods: list[str], mode: str) -> str:
    """One row per dataset, one column per method, best mean bolded."""
    rows = []
    for dataset in datasets:
        stats = {m: aggregates.get((dataset, m, mode)) for m in methods}
        means = [s.mean for s in stats.values() if s is not None]
        best = max(means) if means else None
        cells = [dataset]
        for m in methods:
            stat = stats[m]
            if stat is None:
                cells.append("-")
                continue
            cell = format_mean_halfwidth(stat)
            if best is not None and stat.mean == best:
                cell = f"**{cell}**"
            cells.append(cell)
        rows.append(cells)
    return _markdown_table(["Dataset"] + list(methods), rows)


def voting_table(aggregates: dict[tuple[str, str, str], AggregateStat],
                 voted_f1: dict[tuple[str, str, str], float],
                 datasets: list[str], methods: list[str]) -> str:
    """Best mean vs best voted score per mode, with the signed vote gain."""
    header = ["Dataset"]
    for mode in MODES:
        header += [f"Best Performance ({mode})", f"Best Voted ({mode})",
                   f"Vote Gain ({mode})"]
    rows = []
    for dataset in datasets:
        cells = [dataset]
        for mode in MODES:
            means = [aggregates[(dataset, m, mode)].mean
                     for m in methods if (dataset, m, mode) in aggregates]
            votes = [voted_f1[(dataset, m, mode)]
                     for m in methods if (dataset, m, mode) in voted_f1]
            if not means or not votes:
                cells += ["-", "-", "-"]
                continue
            best = max(means)
            best_voted = max(votes)
            cells += [f"{best:.3f}", f"{best_voted:.3f}",
                      format_gain(best_voted - best)]
        rows.append(cells)
    return _markdown_table(header, rows)


def write_scores_csv(reports: list[ScoreReport], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "method", "mode", "run",
                         "tp", "fp", "fn", "precision", "recall", "f1"])
        for r in reports:
            writer.writerow([r.dataset_id, r.method_tag, r.mode, r.run_label,
                             r.tp, r.fp, r.fn,
                             f"{r.precision:.6f}", f"{r.recall:.6f}", f"{r.f1:.6f}"])


def write_aggregates_csv(aggregates: dict[tuple[str, str, str], AggregateStat],
                         voted_f1: dict[tuple[str, str, str], float], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "method", "mode", "n_runs",
                         "mean_f1", "half_width", "voted_f1"])
        for key in sorted(aggregates):
            dataset, method, mode = key
            stat = aggregates[key]
            voted = voted_f1.get(key)
            writer.writerow([dataset, method, mode, stat.n,
                             f"{stat.mean:.6f}", f"{stat.half_width:.6f}",
                             "" if voted is None else f"{voted:.6f}"])


def read_scores_csv(path) -> list[ScoreReport]:
    reports = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            reports.append(ScoreReport(
                dataset_id=row["dataset"], method_tag=row["method"],
                run_label=row["run"], mode=row["mode"],
                tp=int(row["tp"]), fp=int(row["fp"]), fn=int(row["fn"]),
                precision=float(row["precision"]), recall=float(row["recall"]),
                f1=float(row["f1"]), per_label={},
            ))
    return reports
