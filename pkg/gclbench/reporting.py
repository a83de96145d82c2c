"""
Report files for one sweep directory: aggregate CSV, delta CSVs, a JSON
summary of crossovers and log fits, and a plain-text comparison table.

Outputs carry no timestamps, so regenerating from the same records is
byte-identical.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

from gclbench.errors import BenchmarkError, GridMismatchError
from gclbench.harness import CellAggregate, SweepResult, delta_table, estimate_crossover, fit_log_scaling
from gclbench.reference import METHOD_LABELS, REFERENCE_RESULTS, TU_DATASETS

logger = logging.getLogger(__name__)

GCL_METHODS = ("graphcl", "infograph")
BASELINES = ("untrained", "handcrafted", "molfingerprint", "random")


def _style_label(style: Optional[int]) -> str:
    return "all" if style is None else f"S={style}"


def _write_csv(path: Path, header: List[str], rows: List[list]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def write_aggregate_csv(aggregates: List[CellAggregate], path: Path) -> Path:
    rows = [[a.method, a.dataset, "" if a.style is None else a.style, a.fraction, a.train_size,
             _fmt(a.mean), _fmt(a.std), a.count] for a in aggregates]
    return _write_csv(path, ["method", "dataset", "style", "fraction", "train_size", "mean", "std", "count"], rows)


def _summary(sweep: SweepResult, aggregates: List[CellAggregate], out: Path) -> Dict:
    methods = set(sweep.methods)
    summary: Dict = {
        "records": len(sweep.records),
        "failed": sum(r.status == "failed" for r in sweep.records),
        "deltas": {},
        "log_fits": {},
    }
    for method in GCL_METHODS:
        for baseline in BASELINES:
            if method not in methods or baseline not in methods:
                continue
            try:
                table = delta_table(sweep, method, baseline)
            except GridMismatchError as e:
                logger.warning(f"⚠️ Skipping {method} vs {baseline}: {e}")
                summary["deltas"][f"{method}_vs_{baseline}"] = {"skipped": str(e)}
                continue
            _write_csv(
                out / "deltas" / f"{method}_vs_{baseline}.csv",
                ["dataset", "style", "fraction", "train_size", "delta_pp"],
                [[c.dataset, "" if c.style is None else c.style, c.fraction, c.train_size,
                  "" if c.delta is None else _fmt(c.delta)] for c in table.cells],
            )
            per_style = {}
            for style in sorted({c.style for c in table.cells}, key=lambda s: -1 if s is None else s):
                points = sorted((c.train_size, c.delta) for c in table.cells if c.style == style and c.delta is not None)
                entry: Dict = {"points": [[n, round(d, 6)] for n, d in points]}
                sizes = [n for n, _ in points]
                if len(points) >= 2 and len(set(sizes)) == len(sizes):
                    entry["crossover"] = estimate_crossover(sizes, [d for _, d in points]).model_dump()
                per_style[_style_label(style)] = entry
            summary["deltas"][f"{method}_vs_{baseline}"] = per_style

    for method in sorted(methods):
        per_style = {}
        for style in sorted({a.style for a in aggregates if a.method == method}, key=lambda s: -1 if s is None else s):
            rows = [a for a in aggregates if a.method == method and a.style == style]
            try:
                fit = fit_log_scaling([a.train_size for a in rows], [a.mean for a in rows])
            except BenchmarkError:
                continue
            per_style[_style_label(style)] = fit.model_dump()
        if per_style:
            summary["log_fits"][method] = per_style
    return summary


def render_table(sweep: SweepResult, aggregates: List[CellAggregate]) -> str:
    """Measured rows (largest training size per dataset) followed by quoted rows."""
    lines: List[str] = []
    datasets = sorted({(r.dataset, r.style) for r in sweep.records}, key=lambda d: (d[0], -1 if d[1] is None else d[1]))
    columns = [name if style is None else f"{name} ({_style_label(style)})" for name, style in datasets]
    width = max([24] + [len(c) + 2 for c in columns])

    lines.append("Measured (accuracy or ROC-AUC in %, mean ± std over seeds, largest training size)")
    lines.append("Method".ljust(28) + "".join(c.rjust(width) for c in columns))
    for method in sweep.methods:
        cells = []
        for name, style in datasets:
            rows = [a for a in aggregates if a.method == method and a.dataset == name and a.style == style]
            if not rows:
                cells.append("-".rjust(width))
                continue
            best = max(rows, key=lambda a: a.train_size)
            cells.append(f"{100 * best.mean:.2f} ± {100 * best.std:.2f}".rjust(width))
        lines.append(METHOD_LABELS.get(method, method).ljust(28) + "".join(cells))

    lines.append("")
    lines.append("Quoted (published 10-fold SVM accuracy in %, not recomputed)")
    lines.append("Method".ljust(28) + "".join(d.rjust(16) for d in TU_DATASETS) + "  source")
    for group, rows in REFERENCE_RESULTS.items():
        lines.append(group)
        for name, row in rows.items():
            cells = "".join(("N/A" if c is None else f"{c[0]:.2f} ± {c[1]:.2f}").rjust(16) for c in row)
            lines.append(f"  {name}".ljust(28) + cells + "  quoted")
    return "\n".join(lines) + "\n"


def write_report(sweep: SweepResult, out_dir: Union[str, Path]) -> Dict[str, str]:
    """Write every report file and return their paths by kind."""
    if not sweep.records:
        raise BenchmarkError("Cannot report an empty sweep")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    aggregates = sweep.aggregates()

    paths = {"aggregate": str(write_aggregate_csv(aggregates, out / "aggregate.csv"))}
    summary = _summary(sweep, aggregates, out)
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    paths["summary"] = str(summary_path)
    table_path = out / "table.txt"
    table_path.write_text(render_table(sweep, aggregates), encoding="utf-8")
    paths["table"] = str(table_path)
    paths["deltas"] = str(out / "deltas")
    logger.info(f"📊 Report written to {out} ({len(aggregates)} aggregate rows)")
    return paths
