"""
OGB graph-property-prediction CSV layout (uncompressed).

Per-graph node/edge counts slice the concatenated node, edge and feature
tables; edge endpoints are 0-based within their graph. The split files hold
one graph index per line.
"""

import logging
import warnings
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from gclbench.errors import DatasetFormatError
from gclbench.graphs import Graph, GraphDataset, SplitSpec, make_graph

logger = logging.getLogger(__name__)

REQUIRED_FILES = [
    "num-node-list.csv", "num-edge-list.csv", "edge.csv", "node-feat.csv",
    "edge-feat.csv", "graph-label.csv", "train.csv", "valid.csv", "test.csv",
]


def _load_table(path: Path, dtype=np.float64) -> np.ndarray:
    if not path.exists():
        raise DatasetFormatError(f"Missing file: {path}")
    if path.stat().st_size == 0:
        return np.zeros((0, 0), dtype=dtype)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            table = np.loadtxt(path, delimiter=",", dtype=dtype, ndmin=2)
    except ValueError as e:
        raise DatasetFormatError(f"{path.name}: unparseable value ({e})")
    return table


def _load_column(path: Path) -> np.ndarray:
    table = _load_table(path, dtype=np.int64)
    if table.size and table.shape[1] != 1:
        raise DatasetFormatError(f"{path.name}: expected a single column, got {table.shape[1]}")
    return table.reshape(-1)


def load_ogb_csv(directory: Union[str, Path]) -> GraphDataset:
    """Rebuild every graph and the official split from an OGB CSV directory."""
    directory = Path(directory)
    for name in REQUIRED_FILES:
        if not (directory / name).exists():
            raise DatasetFormatError(f"Missing file: {directory / name}")

    node_counts = _load_column(directory / "num-node-list.csv")
    edge_counts = _load_column(directory / "num-edge-list.csv")
    labels = _load_column(directory / "graph-label.csv")
    if not node_counts.size == edge_counts.size == labels.size:
        raise DatasetFormatError(
            f"Per-graph row counts disagree: {node_counts.size} node counts, "
            f"{edge_counts.size} edge counts, {labels.size} labels"
        )

    node_feat = _load_table(directory / "node-feat.csv")
    edge_index = _load_table(directory / "edge.csv", dtype=np.int64)
    edge_feat = _load_table(directory / "edge-feat.csv")
    total_nodes, total_edges = int(node_counts.sum()), int(edge_counts.sum())
    if node_feat.shape[0] != total_nodes:
        raise DatasetFormatError(f"node-feat.csv has {node_feat.shape[0]} rows, node counts sum to {total_nodes}")
    if edge_index.shape[0] != total_edges or edge_feat.shape[0] != total_edges:
        raise DatasetFormatError(
            f"edge.csv/edge-feat.csv have {edge_index.shape[0]}/{edge_feat.shape[0]} rows, "
            f"edge counts sum to {total_edges}"
        )
    if total_edges and edge_index.shape[1] != 2:
        raise DatasetFormatError("edge.csv must have two columns (src, dst)")

    node_offsets = np.concatenate([[0], np.cumsum(node_counts)])
    edge_offsets = np.concatenate([[0], np.cumsum(edge_counts)])
    graphs: List[Graph] = []
    self_loops = 0
    for g in range(node_counts.size):
        n = int(node_counts[g])
        if n < 1:
            raise DatasetFormatError(f"Graph {g} has zero nodes")
        block = edge_index[edge_offsets[g]:edge_offsets[g + 1]]
        features = edge_feat[edge_offsets[g]:edge_offsets[g + 1]]
        if block.size and (block.min() < 0 or block.max() >= n):
            raise DatasetFormatError(f"Graph {g}: edge endpoint outside [0, {n})")
        kept: Dict[Tuple[int, int], int] = {}
        for row, (src, dst) in enumerate(block):
            if src == dst:
                self_loops += 1
                continue
            kept.setdefault((min(int(src), int(dst)), max(int(src), int(dst))), row)
        rows = list(kept.values())
        width = edge_feat.shape[1] if edge_feat.ndim == 2 and edge_feat.size else 0
        graphs.append(make_graph(
            num_nodes=n,
            node_features=node_feat[node_offsets[g]:node_offsets[g + 1]],
            edges=list(kept.keys()),
            label=int(labels[g]),
            edge_features=features[rows] if rows else np.zeros((0, width)),
        ))
    if self_loops:
        logger.warning(f"Dropped {self_loops} self-loop edge(s)")

    split = SplitSpec(
        train=_load_column(directory / "train.csv"),
        valid=_load_column(directory / "valid.csv"),
        test=_load_column(directory / "test.csv"),
    )
    if labels.size and labels.min() < 0:
        raise DatasetFormatError("Graph labels must be non-negative class ids")
    dataset = GraphDataset(graphs, directory.name, int(labels.max()) + 1 if labels.size else 0, split)
    dataset.validate()
    logger.info(
        f"Loaded OGB dataset {dataset.name}: {len(graphs)} graphs "
        f"(train {split.train.size}, valid {split.valid.size}, test {split.test.size})"
    )
    return dataset
