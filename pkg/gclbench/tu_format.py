"""
TU Dortmund graph-classification format.

A dataset DS lives in one directory as plain text files:

    DS_A.txt               "row, col" per line, 1-based global node ids
    DS_graph_indicator.txt 1-based graph id for every node
    DS_graph_labels.txt    one label per graph
    DS_node_labels.txt     optional integer label per node (one-hot encoded)
    DS_edge_labels.txt     optional integer label per line of DS_A.txt
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from gclbench.errors import DatasetFormatError
from gclbench.graphs import Graph, GraphDataset, make_graph

logger = logging.getLogger(__name__)


def _read_int_rows(path: Path, width: int) -> List[Tuple[int, ...]]:
    if not path.exists():
        raise DatasetFormatError(f"Missing file: {path}")
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            tokens = [t.strip() for t in line.split(",")]
            if len(tokens) != width:
                raise DatasetFormatError(f"{path.name}:{line_no}: expected {width} value(s), got {len(tokens)}")
            try:
                rows.append(tuple(int(t) for t in tokens))
            except ValueError:
                raise DatasetFormatError(f"{path.name}:{line_no}: non-integer token in '{line}'")
    return rows


def _read_ints(path: Path) -> List[int]:
    return [row[0] for row in _read_int_rows(path, 1)]


def _one_hot(values: np.ndarray, what: str) -> np.ndarray:
    if values.size and values.min() < 0:
        raise DatasetFormatError(f"Negative {what} cannot be one-hot encoded")
    width = int(values.max()) + 1 if values.size else 1
    out = np.zeros((values.size, width), dtype=np.float64)
    out[np.arange(values.size), values] = 1.0
    return out


def parse_tu_dataset(directory: Union[str, Path], name: str) -> GraphDataset:
    """Parse one TU dataset directory into a validated GraphDataset."""
    directory = Path(directory)
    prefix = directory / name
    indicator = np.array(_read_ints(Path(f"{prefix}_graph_indicator.txt")), dtype=np.int64)
    raw_labels = _read_ints(Path(f"{prefix}_graph_labels.txt"))
    edge_rows = _read_int_rows(Path(f"{prefix}_A.txt"), 2)

    num_nodes, num_graphs = indicator.size, len(raw_labels)
    if num_nodes == 0:
        raise DatasetFormatError(f"{name}: graph indicator file is empty")
    if indicator.min() < 1 or indicator.max() != num_graphs:
        raise DatasetFormatError(
            f"{name}: indicator references graphs 1..{indicator.max()} but {num_graphs} labels were given"
        )

    node_label_path = Path(f"{prefix}_node_labels.txt")
    if node_label_path.exists():
        node_labels = np.array(_read_ints(node_label_path), dtype=np.int64)
        if node_labels.size != num_nodes:
            raise DatasetFormatError(
                f"{name}: node count mismatch ({num_nodes} indicator lines, {node_labels.size} node labels)"
            )
        features = _one_hot(node_labels, "node label")
    else:
        features = np.ones((num_nodes, 1), dtype=np.float64)

    edge_label_path = Path(f"{prefix}_edge_labels.txt")
    edge_features: Optional[np.ndarray] = None
    if edge_label_path.exists():
        edge_labels = np.array(_read_ints(edge_label_path), dtype=np.int64)
        if edge_labels.size != len(edge_rows):
            raise DatasetFormatError(
                f"{name}: {len(edge_rows)} edges but {edge_labels.size} edge labels"
            )
        edge_features = _one_hot(edge_labels, "edge label")

    graph_of_node = indicator - 1
    local_id = np.zeros(num_nodes, dtype=np.int64)
    sizes = np.zeros(num_graphs, dtype=np.int64)
    for node, g in enumerate(graph_of_node):
        local_id[node] = sizes[g]
        sizes[g] += 1
    if np.any(sizes == 0):
        raise DatasetFormatError(f"{name}: graph {int(np.argmin(sizes)) + 1} has zero nodes")

    edges: List[Dict[Tuple[int, int], int]] = [{} for _ in range(num_graphs)]
    self_loops = 0
    for line, (row, col) in enumerate(edge_rows):
        if not (1 <= row <= num_nodes and 1 <= col <= num_nodes):
            raise DatasetFormatError(f"{name}: edge ({row}, {col}) references an unknown node")
        g = graph_of_node[row - 1]
        if graph_of_node[col - 1] != g:
            raise DatasetFormatError(f"{name}: edge ({row}, {col}) connects two different graphs")
        if row == col:
            self_loops += 1
            continue
        u, v = sorted((int(local_id[row - 1]), int(local_id[col - 1])))
        edges[g].setdefault((u, v), line)
    if self_loops:
        logger.warning(f"{name}: dropped {self_loops} self-loop line(s)")

    classes = sorted(set(raw_labels))
    class_id = {raw: i for i, raw in enumerate(classes)}

    node_order = np.argsort(graph_of_node, kind="stable")
    starts = np.concatenate([[0], np.cumsum(sizes)])
    graphs: List[Graph] = []
    for g in range(num_graphs):
        nodes = node_order[starts[g]:starts[g + 1]]
        # nodes of graph g sorted by local id
        nodes = nodes[np.argsort(local_id[nodes], kind="stable")]
        pairs = list(edges[g].keys())
        lines = list(edges[g].values())
        graphs.append(make_graph(
            num_nodes=int(sizes[g]),
            node_features=features[nodes],
            edges=pairs,
            label=class_id[raw_labels[g]],
            edge_features=None if edge_features is None else edge_features[lines],
        ))

    dataset = GraphDataset(graphs, name, len(classes))
    dataset.validate()
    logger.info(f"Parsed TU dataset {name}: {num_graphs} graphs, {len(classes)} classes")
    return dataset


def _as_labels(matrix: np.ndarray) -> Optional[np.ndarray]:
    """Integer labels if every row is one-hot, else None."""
    if matrix.ndim != 2 or matrix.shape[1] < 2:
        return None
    if not np.all((matrix == 0) | (matrix == 1)) or not np.all(matrix.sum(axis=1) == 1):
        return None
    return matrix.argmax(axis=1)


def write_tu_dataset(dataset: GraphDataset, directory: Union[str, Path], name: str) -> Path:
    """Serialize a dataset back to TU files (both edge directions)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    prefix = directory / name

    a_lines, edge_label_lines, indicator, node_label_lines = [], [], [], []
    all_node_features = np.concatenate([g.node_features for g in dataset.graphs], axis=0)
    node_labels = _as_labels(all_node_features)
    has_edge_features = all(g.edge_features is not None and g.num_edges for g in dataset.graphs if g.num_edges)
    edge_blocks = [g.edge_features for g in dataset.graphs if g.edge_features is not None and g.num_edges]
    edge_labels = _as_labels(np.concatenate(edge_blocks, axis=0)) if has_edge_features and edge_blocks else None

    offset, edge_cursor = 0, 0
    for g_id, graph in enumerate(dataset.graphs, 1):
        indicator += [str(g_id)] * graph.num_nodes
        for e, (u, v) in enumerate(graph.edges):
            a, b = offset + int(u) + 1, offset + int(v) + 1
            a_lines += [f"{a}, {b}", f"{b}, {a}"]
            if edge_labels is not None:
                label = str(edge_labels[edge_cursor + e])
                edge_label_lines += [label, label]
        edge_cursor += graph.num_edges
        offset += graph.num_nodes
    if node_labels is not None:
        node_label_lines = [str(x) for x in node_labels]

    def _write(suffix: str, lines: List[str]) -> None:
        Path(f"{prefix}_{suffix}.txt").write_text("".join(line + "\n" for line in lines), encoding="utf-8")

    _write("A", a_lines)
    _write("graph_indicator", indicator)
    _write("graph_labels", [str(g.label) for g in dataset.graphs])
    if node_labels is not None:
        _write("node_labels", node_label_lines)
    if edge_labels is not None:
        _write("edge_labels", edge_label_lines)
    logger.info(f"Wrote TU dataset {name} to {directory}")
    return directory
