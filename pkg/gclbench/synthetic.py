"""
Synthetic graph classification: a label-defining motif bridged to a random
background tree whose size is S times the motif size.
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from gclbench.graphs import Graph, GraphDataset, make_graph
from gclbench.rng import stream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MotifSpec:
    class_id: int
    name: str
    num_nodes: int
    edges: Tuple[Tuple[int, int], ...]

    @classmethod
    def from_networkx(cls, class_id: int, name: str, graph: nx.Graph) -> "MotifSpec":
        graph = nx.convert_node_labels_to_integers(graph)
        edges = tuple(sorted((min(u, v), max(u, v)) for u, v in graph.edges()))
        return cls(class_id, name, graph.number_of_nodes(), edges)

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.num_nodes))
        graph.add_edges_from(self.edges)
        return graph


MOTIFS: List[MotifSpec] = [
    MotifSpec.from_networkx(0, "triangle", nx.complete_graph(3)),
    MotifSpec.from_networkx(1, "4-cycle", nx.cycle_graph(4)),
    MotifSpec.from_networkx(2, "4-clique", nx.complete_graph(4)),
    MotifSpec.from_networkx(3, "5-cycle", nx.cycle_graph(5)),
    MotifSpec.from_networkx(4, "4-star", nx.star_graph(4)),
    MotifSpec.from_networkx(5, "5-path", nx.path_graph(5)),
]


class SyntheticConfig(BaseModel):
    """Parameters of one generated dataset."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    style_multiplier: int = Field(default=2, ge=1, description="Background size multiplier S")
    total_size: int = Field(default=600, ge=1, description="Number of graphs")
    num_classes: int = Field(default=6, ge=2, le=len(MOTIFS), description="Number of motif classes")
    feature_dim: int = Field(default=10, ge=1, description="Width of the constant node feature")
    seed: int = Field(default=0, description="Global seed")

    @model_validator(mode="after")
    def _balanced(self) -> "SyntheticConfig":
        if self.total_size % self.num_classes:
            raise ValueError(
                f"total_size {self.total_size} is not divisible by num_classes {self.num_classes}"
            )
        return self

    @property
    def run_key(self) -> str:
        return f"S={self.style_multiplier}/size={self.total_size}"


def random_tree(n: int, rng: np.random.Generator) -> np.ndarray:
    """Recursive-attachment tree: node i attaches to a uniform node in [0, i)."""
    if n < 1:
        raise ValueError(f"A tree needs at least one node, got n={n}")
    if n == 1:
        return np.zeros((0, 2), dtype=np.int64)
    parents = np.array([rng.integers(0, i) for i in range(1, n)], dtype=np.int64)
    return np.stack([parents, np.arange(1, n, dtype=np.int64)], axis=1)


def generate_graph(motif: MotifSpec, style_multiplier: int, feature_dim: int,
                   rng: np.random.Generator) -> Graph:
    if style_multiplier < 1:
        raise ValueError(f"style multiplier must be >= 1, got {style_multiplier}")
    m = motif.num_nodes
    background = style_multiplier * m
    tree = random_tree(background, rng) + m
    bridge = [(int(rng.integers(0, m)), m + int(rng.integers(0, background)))]
    edges = list(motif.edges) + [tuple(e) for e in tree.tolist()] + bridge
    total = m + background
    return make_graph(total, np.ones((total, feature_dim)), edges, motif.class_id)


def generate_dataset(config: SyntheticConfig) -> GraphDataset:
    """Balanced, shuffled dataset; identical for identical configs."""
    per_class = config.total_size // config.num_classes
    rng = stream(config.seed, "synth-graphs", config.run_key)
    graphs = [
        generate_graph(motif, config.style_multiplier, config.feature_dim, rng)
        for motif in MOTIFS[: config.num_classes]
        for _ in range(per_class)
    ]
    order = stream(config.seed, "synth-shuffle", config.run_key).permutation(len(graphs))
    dataset = GraphDataset(
        [graphs[i] for i in order],
        f"synthetic-S{config.style_multiplier}-n{config.total_size}",
        config.num_classes,
    )
    logger.info(f"Generated {dataset.name}: {per_class} graphs per class")
    return dataset
