"""
Graph and dataset containers, batching, subsampling and stratified folds.

Graphs are undirected and simple: every edge is stored once as (u, v) with
u < v. Datasets are treated as immutable once loaded.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from gclbench.errors import DatasetFormatError, ProbeError
from gclbench.rng import stream

logger = logging.getLogger(__name__)


# ============================================================================
# CONTAINERS
# ============================================================================

@dataclass(frozen=True)
class Graph:
    num_nodes: int
    node_features: np.ndarray
    edges: np.ndarray
    label: int
    edge_features: Optional[np.ndarray] = None

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        np.add.at(deg, self.edges.reshape(-1), 1)
        return deg

    def validate(self) -> None:
        """Raise DatasetFormatError if any structural invariant is broken."""
        if self.num_nodes < 1:
            raise DatasetFormatError("Graph has zero nodes")
        if self.node_features.ndim != 2 or self.node_features.shape[0] != self.num_nodes:
            raise DatasetFormatError(
                f"node_features has shape {self.node_features.shape}, expected ({self.num_nodes}, d)"
            )
        if self.edges.ndim != 2 or self.edges.shape[1] != 2:
            raise DatasetFormatError(f"edges has shape {self.edges.shape}, expected (E, 2)")
        if self.num_edges:
            u, v = self.edges[:, 0], self.edges[:, 1]
            if np.any(u < 0) or np.any(u >= v) or np.any(v >= self.num_nodes):
                raise DatasetFormatError("edges must satisfy 0 <= u < v < num_nodes")
            if len({(int(a), int(b)) for a, b in self.edges}) != self.num_edges:
                raise DatasetFormatError("duplicate edges")
        if self.edge_features is not None and self.edge_features.shape[0] != self.num_edges:
            raise DatasetFormatError(
                f"edge_features has {self.edge_features.shape[0]} rows for {self.num_edges} edges"
            )

    def relabeled(self, permutation: Sequence[int]) -> "Graph":
        """Copy in which old node i becomes node permutation[i]."""
        perm = np.asarray(permutation, dtype=np.int64)
        features = np.empty_like(self.node_features)
        features[perm] = self.node_features
        mapped = perm[self.edges] if self.num_edges else self.edges.copy()
        return make_graph(self.num_nodes, features, mapped, self.label, self.edge_features)


def make_graph(num_nodes: int, node_features, edges, label: int,
               edge_features=None) -> Graph:
    """Build a Graph, orienting every pair as (min, max) and sorting edges."""
    edge_array = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    edge_array = np.sort(edge_array, axis=1)
    order = np.lexsort((edge_array[:, 1], edge_array[:, 0]))
    edge_array = edge_array[order]
    if edge_features is not None:
        edge_features = np.asarray(edge_features, dtype=np.float64)[order]
    features = np.asarray(node_features, dtype=np.float64).reshape(num_nodes, -1)
    return Graph(int(num_nodes), features, edge_array, int(label), edge_features)


@dataclass(frozen=True)
class SplitSpec:
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray

    def validate(self, size: int) -> None:
        parts = {"train": self.train, "valid": self.valid, "test": self.test}
        for name, idx in parts.items():
            if idx.size and (idx.min() < 0 or idx.max() >= size):
                raise DatasetFormatError(f"{name} split index out of range [0, {size})")
            if np.unique(idx).size != idx.size:
                raise DatasetFormatError(f"{name} split contains duplicate indices")
        seen = np.concatenate(list(parts.values()))
        if np.unique(seen).size != seen.size:
            raise DatasetFormatError("train/valid/test splits overlap")


@dataclass
class GraphDataset:
    graphs: List[Graph]
    name: str
    num_classes: int
    split: Optional[SplitSpec] = None

    def __len__(self) -> int:
        return len(self.graphs)

    @property
    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=np.int64)

    def validate(self) -> None:
        for i, graph in enumerate(self.graphs):
            try:
                graph.validate()
            except DatasetFormatError as e:
                raise DatasetFormatError(f"{self.name} graph {i}: {e}")
            if not 0 <= graph.label < self.num_classes:
                raise DatasetFormatError(
                    f"{self.name} graph {i}: label {graph.label} outside [0, {self.num_classes})"
                )
        if self.split is not None:
            self.split.validate(len(self.graphs))

    def subset(self, indices: Sequence[int]) -> List[Graph]:
        return [self.graphs[int(i)] for i in indices]


@dataclass(frozen=True)
class FoldAssignment:
    folds: List[np.ndarray]
    seed: int

    @property
    def k(self) -> int:
        return len(self.folds)

    def train_test(self, fold: int) -> Tuple[np.ndarray, np.ndarray]:
        test = self.folds[fold]
        train = np.sort(np.concatenate([f for i, f in enumerate(self.folds) if i != fold]))
        return train, test


def dataset_statistics(dataset: GraphDataset) -> Dict[str, float]:
    """Summary row: graph count, class count, average nodes and edges."""
    nodes = [g.num_nodes for g in dataset.graphs]
    edges = [g.num_edges for g in dataset.graphs]
    return {
        "name": dataset.name,
        "graphs": len(dataset.graphs),
        "classes": dataset.num_classes,
        "avg_nodes": float(np.mean(nodes)) if nodes else 0.0,
        "avg_edges": float(np.mean(edges)) if edges else 0.0,
    }


# ============================================================================
# BATCHING
# ============================================================================

@dataclass
class GraphBatch:
    """Disjoint union of graphs with directed edge lists (both directions)."""

    num_graphs: int
    node_features: np.ndarray
    graph_index: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    edge_features: Optional[np.ndarray] = None
    nodes_per_graph: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def num_nodes(self) -> int:
        return int(self.node_features.shape[0])


def collate(graphs: Sequence[Graph]) -> GraphBatch:
    if not graphs:
        raise DatasetFormatError("Cannot batch an empty list of graphs")
    widths = {g.node_features.shape[1] for g in graphs}
    if len(widths) != 1:
        raise DatasetFormatError(f"Graphs in a batch have different node feature widths {widths}")
    has_edge_features = graphs[0].edge_features is not None

    offsets = np.cumsum([0] + [g.num_nodes for g in graphs])
    src_parts, dst_parts, edge_parts = [], [], []
    for graph, offset in zip(graphs, offsets[:-1]):
        if graph.num_nodes < 1:
            raise DatasetFormatError("Graph with zero nodes cannot be encoded")
        u, v = graph.edges[:, 0] + offset, graph.edges[:, 1] + offset
        src_parts += [u, v]
        dst_parts += [v, u]
        if has_edge_features:
            if graph.edge_features is None:
                raise DatasetFormatError("Some graphs in the batch lack edge features")
            edge_parts += [graph.edge_features, graph.edge_features]

    nodes_per_graph = np.array([g.num_nodes for g in graphs], dtype=np.int64)
    return GraphBatch(
        num_graphs=len(graphs),
        node_features=np.concatenate([g.node_features for g in graphs], axis=0),
        graph_index=np.repeat(np.arange(len(graphs)), nodes_per_graph),
        src=np.concatenate(src_parts).astype(np.int64),
        dst=np.concatenate(dst_parts).astype(np.int64),
        edge_features=np.concatenate(edge_parts, axis=0) if has_edge_features else None,
        nodes_per_graph=nodes_per_graph,
    )


# ============================================================================
# SUBSAMPLING AND FOLDS
# ============================================================================

def subsample(target: Union[GraphDataset, Sequence[int], np.ndarray], fraction: float,
              seed: int, run: str = "") -> np.ndarray:
    """floor(f * n) indices (at least 1), uniform without replacement, sorted."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    pool = np.arange(len(target)) if isinstance(target, GraphDataset) else np.asarray(target, dtype=np.int64)
    if pool.size == 0:
        raise ValueError("Cannot subsample an empty index list")
    if fraction == 1.0:
        return np.sort(pool)
    count = max(1, math.floor(fraction * pool.size + 1e-9))
    chosen = stream(seed, "subsample", run).choice(pool.size, size=count, replace=False)
    return np.sort(pool[chosen])


def stratified_kfold(labels: Sequence[int], k: int, seed: int, run: str = "") -> FoldAssignment:
    """Shuffle each class, then deal members round-robin over k folds."""
    labels = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise ProbeError(f"Cross-validation needs k >= 2 folds, got {k}")
    rng = stream(seed, "folds", run)
    buckets: List[List[int]] = [[] for _ in range(k)]
    position = 0
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if members.size < k:
            raise ProbeError(f"Class {cls} has {members.size} members, fewer than k={k}")
        for member in rng.permutation(members):
            buckets[position % k].append(int(member))
            position += 1
    return FoldAssignment([np.sort(np.array(b, dtype=np.int64)) for b in buckets], seed)


# ============================================================================
# CANONICAL JSON-LINES DUMP
# ============================================================================

def save_jsonl(dataset: GraphDataset, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for graph in dataset.graphs:
            row = {
                "num_nodes": graph.num_nodes,
                "edges": graph.edges.tolist(),
                "node_features": graph.node_features.tolist(),
                "edge_features": None if graph.edge_features is None else graph.edge_features.tolist(),
                "label": graph.label,
            }
            fh.write(json.dumps(row) + "\n")
    logger.info(f"Wrote {len(dataset)} graphs to {path}")
    return path


def load_jsonl(path: Union[str, Path], name: Optional[str] = None) -> GraphDataset:
    path = Path(path)
    if not path.exists():
        raise DatasetFormatError(f"Missing file: {path}")
    graphs = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                edge_features = row.get("edge_features")
                graphs.append(Graph(
                    num_nodes=int(row["num_nodes"]),
                    node_features=np.asarray(row["node_features"], dtype=np.float64).reshape(int(row["num_nodes"]), -1),
                    edges=np.asarray(row["edges"], dtype=np.int64).reshape(-1, 2),
                    label=int(row["label"]),
                    edge_features=None if edge_features is None else np.asarray(edge_features, dtype=np.float64),
                ))
            except (KeyError, TypeError, ValueError) as e:
                raise DatasetFormatError(f"{path}:{line_no}: malformed graph record ({e})")
    num_classes = max((g.label for g in graphs), default=-1) + 1
    dataset = GraphDataset(graphs, name or path.stem, num_classes)
    dataset.validate()
    return dataset
