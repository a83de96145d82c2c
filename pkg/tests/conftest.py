"""Shared fixtures and helpers for the gclbench test suite."""

from pathlib import Path
from typing import Callable, Dict

import numpy as np
import pytest

from gclbench.autodiff import Tape, Tensor, backward
from gclbench.graphs import Graph, GraphDataset, make_graph


# =============================================================================
# Gradient checking
# =============================================================================

def numeric_gradients(build: Callable[[Tape, Dict[str, Tensor]], Tensor],
                      params: Dict[str, np.ndarray], eps: float = 1e-5) -> Dict[str, np.ndarray]:
    """Central finite differences of build() for every parameter entry."""
    out = {}
    for name, value in params.items():
        grad = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            total = 0.0
            for sign in (1.0, -1.0):
                shifted = {k: v.copy() for k, v in params.items()}
                shifted[name][idx] += sign * eps
                tape = Tape(np.float64)
                tensors = {k: tape.parameter(k, v) for k, v in shifted.items()}
                total += sign * build(tape, tensors).item()
            grad[idx] = total / (2 * eps)
        out[name] = grad
    return out


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = np.linalg.norm(a) + np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / scale) if scale > 1e-12 else 0.0


def assert_gradients_match(build, params: Dict[str, np.ndarray], tol: float = 1e-4) -> None:
    tape = Tape(np.float64)
    tensors = {k: tape.parameter(k, v) for k, v in params.items()}
    analytic = backward(tape, build(tape, tensors))
    numeric = numeric_gradients(build, params)
    for name in params:
        err = relative_error(analytic[name], numeric[name])
        assert err < tol, f"gradient of '{name}' off by relative error {err:.2e}"


# =============================================================================
# Graph fixtures
# =============================================================================

def triangle(label: int = 0, features=None) -> Graph:
    x = np.ones((3, 1)) if features is None else features
    return make_graph(3, x, [(0, 1), (1, 2), (0, 2)], label)


def path_graph(n: int, label: int = 0, width: int = 1) -> Graph:
    return make_graph(n, np.ones((n, width)), [(i, i + 1) for i in range(n - 1)], label)


def star(leaves: int, label: int = 0) -> Graph:
    return make_graph(leaves + 1, np.ones((leaves + 1, 1)), [(0, i) for i in range(1, leaves + 1)], label)


def random_graph(rng: np.random.Generator, n: int, p: float = 0.3, width: int = 4, label: int = 0,
                 edge_vocab: int = 0) -> Graph:
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < p]
    edge_features = None
    if edge_vocab:
        edge_features = rng.integers(0, edge_vocab, size=(len(pairs), 1)).astype(np.float64)
    return make_graph(n, rng.normal(size=(n, width)), pairs, label, edge_features)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_graphs(rng):
    return [random_graph(rng, int(rng.integers(3, 9)), label=i % 2) for i in range(12)]


def two_class_graphs(count: int):
    """Alternating triangles-with-tails (class 0) and paths (class 1)."""
    graphs = []
    for i in range(count):
        n = 4 + i % 4
        if i % 2 == 0:
            edges = [(0, 1), (1, 2), (0, 2)] + [(j, j + 1) for j in range(2, n - 1)]
            graphs.append(make_graph(n, np.ones((n, 1)), edges, 0))
        else:
            graphs.append(path_graph(n, 1))
    return graphs


@pytest.fixture
def toy_dataset():
    return GraphDataset(two_class_graphs(20), "toy", 2)


# =============================================================================
# On-disk dataset fixtures
# =============================================================================

def write_lines(path: Path, lines) -> None:
    path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")


@pytest.fixture
def tu_dir(tmp_path):
    """
    Three graphs in TU layout:
      graph 1: triangle on nodes 1-3 (edges listed both ways, plus a self-loop)
      graph 2: single edge 4-5
      graph 3: isolated node 6
    """
    root = tmp_path / "TOY"
    root.mkdir()
    write_lines(root / "TOY_A.txt", ["1, 2", "2, 1", "2, 3", "3, 2", "1, 3", "3, 1", "3, 3", "4, 5", "5, 4"])
    write_lines(root / "TOY_graph_indicator.txt", [1, 1, 1, 2, 2, 3])
    write_lines(root / "TOY_graph_labels.txt", [-1, 1, -1])
    write_lines(root / "TOY_node_labels.txt", [0, 1, 2, 0, 1, 2])
    write_lines(root / "TOY_edge_labels.txt", [0, 0, 1, 1, 2, 2, 0, 1, 1])
    return root


@pytest.fixture
def ogb_dir(tmp_path):
    """Four graphs in OGB CSV layout with 2 node and 1 edge feature columns."""
    root = tmp_path / "ogbg_toy"
    root.mkdir()
    write_lines(root / "num-node-list.csv", [3, 2, 2, 3])
    write_lines(root / "num-edge-list.csv", [3, 1, 2, 2])
    write_lines(root / "edge.csv", ["0,1", "1,2", "2,0", "0,1", "0,1", "1,0", "0,1", "1,2"])
    write_lines(root / "edge-feat.csv", [0, 1, 2, 0, 1, 2, 0, 1])
    write_lines(root / "node-feat.csv", ["0,1", "1,0", "2,1", "0,0", "1,1", "2,0", "0,1", "1,1", "2,2", "0,0"])
    write_lines(root / "graph-label.csv", [0, 1, 0, 1])
    write_lines(root / "train.csv", [0, 1])
    write_lines(root / "valid.csv", [2])
    write_lines(root / "test.csv", [3])
    return root


def write_ogb(root: Path, graphs, train, valid, test) -> Path:
    """OGB CSV directory with constant node features and a zero edge feature."""
    root.mkdir()
    write_lines(root / "num-node-list.csv", [g.num_nodes for g in graphs])
    write_lines(root / "num-edge-list.csv", [g.num_edges for g in graphs])
    write_lines(root / "edge.csv", [f"{u},{v}" for g in graphs for u, v in g.edges.tolist()])
    write_lines(root / "edge-feat.csv", [0 for g in graphs for _ in range(g.num_edges)])
    write_lines(root / "node-feat.csv", [1 for g in graphs for _ in range(g.num_nodes)])
    write_lines(root / "graph-label.csv", [g.label for g in graphs])
    write_lines(root / "train.csv", train)
    write_lines(root / "valid.csv", valid)
    write_lines(root / "test.csv", test)
    return root


@pytest.fixture
def split_dir(tmp_path):
    """24 two-class graphs with a 12/6/6 official split."""
    return write_ogb(tmp_path / "ogbg_split", two_class_graphs(24), range(12), range(12, 18), range(18, 24))
