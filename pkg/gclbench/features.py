"""
Non-neural baselines: handcrafted graph statistics, their ablations and the
random Gaussian control, plus per-fold standardisation.
"""

import logging
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from gclbench.errors import ConfigError, DatasetFormatError, ProbeError
from gclbench.graphs import Graph
from gclbench.rng import stream

logger = logging.getLogger(__name__)

NUM_BINS = 5
DESCRIPTOR_DIM = 2 + NUM_BINS

AblationName = Literal["node-count", "avg-degree", "deg-histogram", "all"]

_ABLATION_SLICES = {
    "node-count": slice(0, 1),
    "avg-degree": slice(1, 2),
    "deg-histogram": slice(2, DESCRIPTOR_DIM),
    "all": slice(0, DESCRIPTOR_DIM),
}


def compute_bin_edges(graphs: Sequence[Graph]) -> np.ndarray:
    """Five equal-width bins over [0, max training degree]; the last is open."""
    if not graphs:
        raise DatasetFormatError("Bin edges need at least one training graph")
    max_degree = max((int(g.degrees().max()) for g in graphs if g.num_nodes), default=0)
    if max_degree == 0:
        return np.array([0.0, 1.0, 2.0, 3.0, 4.0, np.inf])
    edges = np.linspace(0.0, float(max_degree), NUM_BINS + 1)
    edges[-1] = np.inf
    return edges


def handcrafted_features(graph: Graph, bin_edges: np.ndarray) -> np.ndarray:
    """[node count, mean degree, 5 degree-histogram bins normalised by |V|]."""
    if graph.num_nodes < 1:
        raise DatasetFormatError("Handcrafted features need a nonempty graph")
    degrees = graph.degrees()
    bins = np.searchsorted(bin_edges, degrees, side="right") - 1
    bins = np.clip(bins, 0, NUM_BINS - 1)
    histogram = np.bincount(bins, minlength=NUM_BINS).astype(np.float64) / graph.num_nodes
    mean_degree = 2.0 * graph.num_edges / graph.num_nodes
    return np.concatenate([[float(graph.num_nodes), mean_degree], histogram])


def ablation_features(graph: Graph, which: str, bin_edges: np.ndarray) -> np.ndarray:
    if which not in _ABLATION_SLICES:
        raise ConfigError(f"Unknown ablation '{which}', expected one of {sorted(_ABLATION_SLICES)}")
    return handcrafted_features(graph, bin_edges)[_ABLATION_SLICES[which]]


def feature_matrix(graphs: Sequence[Graph], bin_edges: np.ndarray, which: str = "all") -> np.ndarray:
    return np.stack([ablation_features(g, which, bin_edges) for g in graphs])


def random_features(dim: int, graph_id: int, seed: int) -> np.ndarray:
    """Standard normal vector fixed per (graph id, seed)."""
    if dim < 1:
        raise ConfigError(f"Random feature dimension must be >= 1, got {dim}")
    return stream(seed, "random-baseline", str(int(graph_id))).standard_normal(dim)


def random_matrix(graph_ids: Sequence[int], seed: int, dim: int = DESCRIPTOR_DIM) -> np.ndarray:
    return np.stack([random_features(dim, i, seed) for i in graph_ids])


# ====== STANDARDISATION ======

@dataclass(frozen=True)
class ScalerParams:
    mean: np.ndarray
    std: np.ndarray


def standardize_fit(vectors: np.ndarray) -> ScalerParams:
    """Per-feature z-scoring; zero-variance features pass through unchanged."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] == 0:
        raise ProbeError("Cannot fit a scaler on an empty set")
    mean, std = vectors.mean(axis=0), vectors.std(axis=0)
    constant = std == 0
    mean[constant], std[constant] = 0.0, 1.0
    return ScalerParams(mean, std)


def standardize_apply(scaler: ScalerParams, vectors: np.ndarray) -> np.ndarray:
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.shape[-1] != scaler.mean.shape[0]:
        raise ProbeError(f"Scaler fitted on {scaler.mean.shape[0]} features, got {vectors.shape[-1]}")
    return (vectors - scaler.mean) / scaler.std
