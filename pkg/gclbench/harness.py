"""
Scaling sweeps over (style, size) x fraction x seed x method, plus the
analyses built on their records: delta tables, crossover estimates and
logarithmic scaling fits.
"""

import logging
import time
from functools import lru_cache
from multiprocessing import Pool
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from gclbench.autodiff import set_precision
from gclbench.configs import PRETRAINED_METHODS, ExperimentConfig
from gclbench.datasets import load_dataset
from gclbench.encoders import embed, init_encoder
from gclbench.errors import (
    BenchmarkError,
    ConfigError,
    GridMismatchError,
    NonFiniteError,
    ProbeError,
    TrainingDivergedError,
)
from gclbench.features import compute_bin_edges, feature_matrix, random_matrix
from gclbench.gcl import train_graphcl, train_infograph
from gclbench.graphs import GraphDataset, subsample
from gclbench.probes import logreg_probe_protocol, svm_probe_protocol
from gclbench.results_store import RunRecord, RunStore, generate_cell_key
from gclbench.settings import get_settings
from gclbench.synthetic import SyntheticConfig, generate_dataset

logger = logging.getLogger(__name__)

RECOVERABLE_ERRORS = (TrainingDivergedError, NonFiniteError, ProbeError)


# ============================================================================
# RESULT TYPES
# ============================================================================

class CellAggregate(BaseModel):
    method: str
    dataset: str
    style: Optional[int] = None
    fraction: float
    train_size: int
    mean: float
    std: float
    count: int


class SweepResult(BaseModel):
    records: List[RunRecord] = Field(default_factory=list)
    computed: int = Field(default=0, description="Cells computed by this invocation")

    @property
    def methods(self) -> List[str]:
        return sorted({r.method for r in self.records})

    @property
    def styles(self) -> List[Optional[int]]:
        return sorted({r.style for r in self.records}, key=lambda s: -1 if s is None else s)

    @property
    def sizes(self) -> List[int]:
        return sorted({r.train_size for r in self.records})

    @property
    def seeds(self) -> List[int]:
        return sorted({r.seed for r in self.records})

    def aggregates(self) -> List[CellAggregate]:
        """Mean and population std of successful records per (method, dataset, fraction).

        Synthetic dataset names carry the size, so each (style, size) point
        is its own group.
        """
        groups: Dict[Tuple, List[RunRecord]] = {}
        for record in self.records:
            if record.status == "ok":
                groups.setdefault((record.method, record.dataset, record.style, record.fraction), []).append(record)
        rows = []
        for (method, dataset, style, fraction), members in groups.items():
            values = np.array([r.value for r in members])
            rows.append(CellAggregate(
                method=method, dataset=dataset, style=style, fraction=fraction,
                train_size=max(r.train_size for r in members),
                mean=float(values.mean()), std=float(values.std()), count=len(members),
            ))
        return sorted(rows, key=lambda a: (a.method, -1 if a.style is None else a.style, a.train_size, a.fraction))


# ============================================================================
# CELL EXECUTION
# ============================================================================

@lru_cache(maxsize=4)
def _load_cached(path: str) -> GraphDataset:
    return load_dataset(path)


def cell_dataset(config: ExperimentConfig, cell: Dict[str, Any]) -> GraphDataset:
    if config.is_synthetic:
        return generate_dataset(SyntheticConfig(
            style_multiplier=cell["style"], total_size=cell["size"],
            num_classes=config.synthetic_classes, seed=cell["seed"],
        ))
    return _load_cached(config.dataset)


def _embedder(config: ExperimentConfig, method: str, dataset: GraphDataset, train_graphs, seed: int,
              run: str, details: Dict[str, Any]):
    """Return a function mapping dataset indices to feature rows."""
    if method == "random":
        return lambda idx: random_matrix(idx, seed, config.random_dim)
    if method == "handcrafted":
        bin_edges = compute_bin_edges(train_graphs)
        return lambda idx: feature_matrix(dataset.subset(idx), bin_edges, config.ablation)

    encoder_config = config.encoder_config(method, dataset, seed)
    if method in PRETRAINED_METHODS:
        trainer = train_graphcl if method == "graphcl" else train_infograph
        result = trainer(train_graphs, encoder_config, config.train_config(seed), run)
        params = result.params
        details["loss_trace"] = result.loss_trace
    else:
        params = init_encoder(encoder_config)
    params.freeze()
    return lambda idx: embed(params, dataset.subset(idx))


def run_cell(config: ExperimentConfig, cell: Dict[str, Any], cell_key: str) -> RunRecord:
    """Compute one grid cell; recoverable failures become a failed record."""
    set_precision(get_settings().precision)
    started = time.perf_counter()
    method, seed, fraction = cell["method"], cell["seed"], cell["fraction"]
    metric = "accuracy" if config.probe == "svm" else "roc-auc"
    dataset = cell_dataset(config, cell)
    # the run key leaves out the method, so all methods of a cell share subsample and init
    run = f"{dataset.name}/f={fraction}"
    pool = dataset.split.train if dataset.split is not None else np.arange(len(dataset))
    train_idx = subsample(pool, fraction, seed, run)
    base = dict(
        method=method, dataset=dataset.name, train_size=int(train_idx.size), fraction=fraction,
        seed=seed, style=cell.get("style"), metric=metric,
        config_hash=config.config_hash(), cell_key=cell_key,
    )
    details: Dict[str, Any] = {}
    try:
        train_graphs = dataset.subset(train_idx)
        features = _embedder(config, method, dataset, train_graphs, seed, run, details)
        if config.probe == "svm":
            labels = dataset.labels[train_idx]
            if method == "handcrafted":
                def fold_features(tr, te):
                    edges = compute_bin_edges([train_graphs[i] for i in tr])
                    return (feature_matrix([train_graphs[i] for i in tr], edges, config.ablation),
                            feature_matrix([train_graphs[i] for i in te], edges, config.ablation))
                report = svm_probe_protocol(None, labels, config.folds, [seed], fold_features=fold_features, run=run)
            else:
                report = svm_probe_protocol(features(train_idx), labels, config.folds, [seed], run=run)
            value, std = report.mean, report.std
        else:
            if dataset.split is None:
                raise ConfigError(f"The logreg probe needs a dataset with train/valid/test splits ({dataset.name})")
            labels = dataset.labels
            split = dataset.split
            result = logreg_probe_protocol(
                (features(train_idx), labels[train_idx]),
                (features(split.valid), labels[split.valid]),
                (features(split.test), labels[split.test]),
            )
            value, std = result.roc_auc, None
            details["best_c"] = result.best_c
    except RECOVERABLE_ERRORS as e:
        logger.error(f"❌ Cell {method} f={fraction} seed={seed} failed: {e}")
        return RunRecord(**base, status="failed", error=f"{type(e).__name__}: {e}",
                         wall_time=time.perf_counter() - started, details=details)

    logger.info(f"✅ {method} on {dataset.name} (size {train_idx.size}, seed {seed}): {metric} {value:.4f}")
    return RunRecord(**base, value=value, std=std, wall_time=time.perf_counter() - started, details=details)


def _run_cell_task(task: Tuple[ExperimentConfig, Dict[str, Any], str]) -> RunRecord:
    return run_cell(*task)


def sweep_cells(config: ExperimentConfig) -> List[Dict[str, Any]]:
    """Grid coordinates in a fixed order."""
    if config.is_synthetic:
        data_axes = [{"style": s, "size": n} for s in config.synthetic_styles for n in config.synthetic_sizes]
    else:
        data_axes = [{}]
    return [
        {**axes, "fraction": fraction, "seed": seed, "method": method}
        for axes in data_axes
        for fraction in config.fractions
        for seed in config.seeds
        for method in config.methods
    ]


def run_sweep(config: ExperimentConfig, store: Optional[RunStore] = None,
              workers: Optional[int] = None) -> SweepResult:
    """
    Run every missing cell of the grid and return all records of the grid.

    Finished cells (same settings hash and coordinates) are skipped, so an
    interrupted sweep resumes where it stopped.
    """
    store = store or RunStore(config.output_dir)
    workers = workers or config.workers or get_settings().workers
    config_hash = config.config_hash()

    records: Dict[str, RunRecord] = {}
    pending = []
    for cell in sweep_cells(config):
        key = generate_cell_key(config_hash, cell)
        existing = store.get(key)
        if existing is not None:
            records[key] = existing
        else:
            pending.append((config, cell, key))

    logger.info(f"🚀 Sweep {config.name}: {len(records)} cells done, {len(pending)} to run on {workers} worker(s)")
    if workers > 1 and len(pending) > 1:
        with Pool(min(workers, len(pending))) as pool:
            for record in pool.imap_unordered(_run_cell_task, pending):
                store.put(record)
                records[record.cell_key] = record
    else:
        for task in pending:
            record = _run_cell_task(task)
            store.put(record)
            records[record.cell_key] = record

    ordered = sorted(records.values(), key=lambda r: (r.method, r.style or 0, r.train_size, r.fraction, r.seed))
    return SweepResult(records=ordered, computed=len(pending))


# ============================================================================
# ANALYSES
# ============================================================================

class DeltaCell(BaseModel):
    dataset: str
    style: Optional[int] = None
    fraction: float
    train_size: int
    delta: Optional[float] = Field(default=None, description="mean(A) - mean(B) in percentage points")


class DeltaTable(BaseModel):
    method: str
    baseline: str
    cells: List[DeltaCell] = Field(default_factory=list)

    def as_matrix(self) -> Tuple[List[Optional[int]], List[int], np.ndarray]:
        """(styles, sizes, matrix) with NaN where a cell is absent."""
        styles = sorted({c.style for c in self.cells}, key=lambda s: -1 if s is None else s)
        sizes = sorted({c.train_size for c in self.cells})
        matrix = np.full((len(styles), len(sizes)), np.nan)
        for c in self.cells:
            if c.delta is not None:
                matrix[styles.index(c.style), sizes.index(c.train_size)] = c.delta
        return styles, sizes, matrix


def delta_table(sweep: SweepResult, method: str, baseline: str) -> DeltaTable:
    """Per-cell mean difference A - B in percentage points."""
    by_method: Dict[str, Dict[Tuple, List[RunRecord]]] = {method: {}, baseline: {}}
    for record in sweep.records:
        if record.method in by_method:
            by_method[record.method].setdefault((record.dataset, record.style, record.fraction), []).append(record)
    for name, cells in by_method.items():
        if not cells:
            raise GridMismatchError(f"Method '{name}' has no records in this sweep")
    shared = set(by_method[method]) & set(by_method[baseline])
    if not shared:
        raise GridMismatchError(f"'{method}' and '{baseline}' were run on disjoint grids")

    rows = []
    for coord in set(by_method[method]) | set(by_method[baseline]):
        a = [r for r in by_method[method].get(coord, []) if r.status == "ok"]
        b = [r for r in by_method[baseline].get(coord, []) if r.status == "ok"]
        sizes = {r.train_size for r in by_method[method].get(coord, []) + by_method[baseline].get(coord, [])}
        if len(sizes) > 1:
            raise GridMismatchError(f"Cell {coord} has different training sizes {sorted(sizes)}")
        delta = 100.0 * (np.mean([r.value for r in a]) - np.mean([r.value for r in b])) if a and b else None
        rows.append(DeltaCell(dataset=coord[0], style=coord[1], fraction=coord[2], train_size=sizes.pop(),
                              delta=None if delta is None else float(delta)))
    rows.sort(key=lambda c: (-1 if c.style is None else c.style, c.train_size, c.fraction, c.dataset))
    return DeltaTable(method=method, baseline=baseline, cells=rows)


class CrossoverEstimate(BaseModel):
    size: Optional[float] = Field(default=None, description="Size where delta crosses zero; None if it never does")
    bracket: Optional[Tuple[float, float]] = None
    warnings: List[str] = Field(default_factory=list)


def estimate_crossover(sizes: Sequence[float], deltas: Sequence[float]) -> CrossoverEstimate:
    """
    First sign change of delta, located by linear interpolation in
    (log size, delta). Later crossings are only reported as warnings.
    """
    sizes = np.asarray(sizes, dtype=np.float64)
    deltas = np.asarray(deltas, dtype=np.float64)
    if sizes.size < 2 or sizes.shape != deltas.shape:
        raise BenchmarkError("Crossover estimation needs at least two aligned (size, delta) points")
    if np.any(np.diff(sizes) <= 0) or np.any(sizes <= 0):
        raise BenchmarkError("Sizes must be positive and strictly ascending")

    crossings: List[Tuple[float, Tuple[float, float]]] = []
    for i in range(sizes.size):
        if deltas[i] == 0.0:
            if not crossings or crossings[-1][0] != sizes[i]:
                crossings.append((float(sizes[i]), (float(sizes[i]), float(sizes[i]))))
            continue
        if i + 1 < sizes.size and deltas[i] * deltas[i + 1] < 0:
            t = deltas[i] / (deltas[i] - deltas[i + 1])
            log_size = np.log(sizes[i]) + t * (np.log(sizes[i + 1]) - np.log(sizes[i]))
            crossings.append((float(np.exp(log_size)), (float(sizes[i]), float(sizes[i + 1]))))

    if not crossings:
        return CrossoverEstimate()
    size, bracket = crossings[0]
    size = min(max(size, bracket[0]), bracket[1])
    warnings = [f"additional crossing near {c:.0f} (between {lo:.0f} and {hi:.0f})" for c, (lo, hi) in crossings[1:]]
    for warning in warnings:
        logger.warning(f"⚠️ Crossover: {warning}")
    return CrossoverEstimate(size=size, bracket=bracket, warnings=warnings)


class LogFit(BaseModel):
    slope: float
    intercept: float
    residual_rms: float


def fit_log_scaling(sizes: Sequence[float], values: Sequence[float]) -> LogFit:
    """Least squares for value = intercept + slope * ln(size)."""
    sizes = np.asarray(sizes, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if sizes.shape != values.shape or np.unique(sizes).size < 2:
        raise BenchmarkError("A log-scaling fit needs at least two distinct sizes")
    if np.any(sizes <= 0):
        raise BenchmarkError("Sizes must be positive")
    x = np.log(sizes)
    slope, intercept = np.polyfit(x, values, 1)
    residuals = values - (intercept + slope * x)
    return LogFit(slope=float(slope), intercept=float(intercept),
                  residual_rms=float(np.sqrt(np.mean(residuals ** 2))))
