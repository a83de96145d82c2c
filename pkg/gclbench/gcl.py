"""
Graph contrastive pretraining: GraphCL (two stochastic views + InfoNCE over a
projection head) and InfoGraph (local/global Jensen-Shannon objective).
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from gclbench.autodiff import AdamState, Tape, Tensor, adam_step, backward, count_parameters
from gclbench.encoders import (
    EncoderConfig,
    EncoderParams,
    encoder_forward,
    init_encoder,
    register_parameters,
)
from gclbench.errors import ConfigError, DatasetFormatError, NonFiniteError, ShapeError, TrainingDivergedError
from gclbench.graphs import Graph, collate, make_graph
from gclbench.rng import stream

logger = logging.getLogger(__name__)


# ============================================================================
# CONFIGURATION
# ============================================================================

class AugmentationSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["node-drop", "edge-drop", "node+edge"] = Field(
        default="edge-drop", description="Which graph elements are removed"
    )
    p: float = Field(default=0.1, ge=0.0, le=1.0, description="Independent drop probability")


class InfoNCEConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    temperature: float = Field(default=0.2, gt=0.0, description="Softmax temperature tau")
    batch_size: int = Field(default=256, ge=2, description="Graphs per minibatch (N)")


class InfoGraphConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    hidden_dim: int = Field(default=32, ge=1, description="Discriminator MLP hidden width")
    proj_dim: int = Field(default=2, ge=1, description="Discriminator output width")


class TrainConfig(BaseModel):
    """Pretraining hyperparameters shared by both methods."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    epochs: int = Field(default=50, ge=0, description="Passes over the pretraining subset")
    batch_size: int = Field(default=256, ge=2, description="Graphs per minibatch")
    lr: float = Field(default=1e-3, gt=0.0, description="Adam learning rate")
    weight_decay: float = Field(default=0.0, ge=0.0, description="Decoupled weight decay")
    temperature: float = Field(default=0.2, gt=0.0, description="InfoNCE temperature")
    proj_dim: int = Field(default=32, ge=1, description="Projection head / discriminator output width")
    augmentation: AugmentationSpec = Field(default_factory=AugmentationSpec)
    seed: int = Field(default=0, description="Global seed of the run")

    def info_nce(self) -> InfoNCEConfig:
        return InfoNCEConfig(temperature=self.temperature, batch_size=self.batch_size)

    def infograph(self, hidden_dim: int) -> InfoGraphConfig:
        return InfoGraphConfig(hidden_dim=hidden_dim, proj_dim=self.proj_dim)


TRAIN_PRESETS: Dict[str, TrainConfig] = {
    "molhiv-graphcl": TrainConfig(
        epochs=100, batch_size=256, lr=1e-3, weight_decay=1e-5, temperature=0.2, proj_dim=64,
        augmentation=AugmentationSpec(kind="edge-drop", p=0.10),
    ),
    "synthetic-graphcl": TrainConfig(
        epochs=50, batch_size=256, lr=1e-3, proj_dim=32,
        augmentation=AugmentationSpec(kind="node+edge", p=0.15),
    ),
    "synthetic-infograph": TrainConfig(epochs=50, batch_size=256, lr=1e-3, proj_dim=2),
}


def preset(name: str, **overrides) -> TrainConfig:
    if name not in TRAIN_PRESETS:
        raise ConfigError(f"Unknown preset '{name}', expected one of {sorted(TRAIN_PRESETS)}")
    return TRAIN_PRESETS[name].model_copy(update=overrides)


# ============================================================================
# AUGMENTATIONS
# ============================================================================

def _drop_edges(graph: Graph, p: float, rng: np.random.Generator) -> Graph:
    keep = rng.random(graph.num_edges) >= p
    return make_graph(
        graph.num_nodes, graph.node_features, graph.edges[keep], graph.label,
        None if graph.edge_features is None else graph.edge_features[keep],
    )


def _drop_nodes(graph: Graph, p: float, rng: np.random.Generator) -> Graph:
    keep = rng.random(graph.num_nodes) >= p
    if not keep.any():
        keep[rng.integers(0, graph.num_nodes)] = True
    new_id = np.cumsum(keep) - 1
    edge_keep = keep[graph.edges[:, 0]] & keep[graph.edges[:, 1]] if graph.num_edges else np.zeros(0, bool)
    return make_graph(
        int(keep.sum()), graph.node_features[keep], new_id[graph.edges[edge_keep]], graph.label,
        None if graph.edge_features is None else graph.edge_features[edge_keep],
    )


def augment(graph: Graph, spec: AugmentationSpec, rng: np.random.Generator) -> Graph:
    """One stochastic view; node ids are compacted after node dropping."""
    if graph.num_nodes < 1:
        raise DatasetFormatError("Cannot augment a graph with zero nodes")
    if spec.kind == "edge-drop":
        return _drop_edges(graph, spec.p, rng)
    if spec.kind == "node-drop":
        return _drop_nodes(graph, spec.p, rng)
    return _drop_edges(_drop_nodes(graph, spec.p, rng), spec.p, rng)


# ============================================================================
# HEADS AND LOSSES
# ============================================================================

def init_mlp(prefix: str, dims: Sequence[int], rng: np.random.Generator) -> Dict[str, np.ndarray]:
    """Uniform fan-in init for a stack of linear maps named {prefix}.lin{i}."""
    arrays = {}
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:]), 1):
        bound = 1.0 / np.sqrt(fan_in)
        arrays[f"{prefix}.lin{i}.w"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        arrays[f"{prefix}.lin{i}.b"] = rng.uniform(-bound, bound, size=(fan_out,))
    return arrays


def apply_mlp(tape: Tape, weights: Dict[str, Tensor], prefix: str, x: Tensor, depth: int = 2) -> Tensor:
    """linear -> relu -> ... -> linear, no activation after the last map."""
    for i in range(1, depth + 1):
        x = tape.linear(x, weights[f"{prefix}.lin{i}.w"], weights[f"{prefix}.lin{i}.b"])
        if i < depth:
            x = tape.relu(x)
    return x


@dataclass
class ProjectionHead:
    """Two-layer MLP mapping the readout to the contrastive space."""

    arrays: Dict[str, np.ndarray]
    prefix: str = "head"

    @classmethod
    def create(cls, in_dim: int, out_dim: int, rng: np.random.Generator, prefix: str = "head") -> "ProjectionHead":
        return cls(init_mlp(prefix, [in_dim, out_dim, out_dim], rng), prefix)

    def __call__(self, tape: Tape, weights: Dict[str, Tensor], x: Tensor) -> Tensor:
        return apply_mlp(tape, weights, self.prefix, x)


def _as_tensor(tape: Tape, x) -> Tensor:
    return x if isinstance(x, Tensor) else tape.constant(x)


def info_nce_loss(tape: Tape, z1, z2, temperature: float) -> Tensor:
    """
    Contrastive loss over cosine similarities divided by temperature.

    The denominator sums over negatives only (n' != n), so the loss can be
    negative. Both view directions are averaged.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z1, z2 = _as_tensor(tape, z1), _as_tensor(tape, z2)
    if z1.shape != z2.shape or len(z1.shape) != 2:
        raise ShapeError(f"Views must be equal [N, d] batches, got {z1.shape} and {z2.shape}")
    n = z1.shape[0]
    if n < 2:
        raise ShapeError(f"InfoNCE needs at least 2 graphs per batch, got {n}")

    inv_tau = 1.0 / temperature
    sim = tape.scale(tape.cosine_similarity(z1, z2), inv_tau)
    # shifted by the largest possible similarity so exp stays <= 1
    shifted = tape.exp(tape.add(sim, tape.constant(-inv_tau)))
    negatives = tape.multiply(shifted, tape.constant(1.0 - np.eye(n)))
    positives = tape.sum(tape.multiply(sim, tape.constant(np.eye(n))), axis=1)

    total = None
    for axis in (1, 0):
        log_denominator = tape.add(tape.log(tape.sum(negatives, axis=axis)), tape.constant(inv_tau))
        direction = tape.mean(tape.add(log_denominator, tape.scale(positives, -1.0)))
        total = direction if total is None else tape.add(total, direction)
    return tape.scale(total, 0.5)


def infograph_loss(tape: Tape, global_emb, node_emb, graph_index: np.ndarray,
                   discriminator: Dict[str, Tensor]) -> Tensor:
    """
    Jensen-Shannon local/global objective.

    T = <MLP_local(l), MLP_global(g)>; nodes paired with their own graph are
    positives, every other pairing is a negative.
    """
    global_emb, node_emb = _as_tensor(tape, global_emb), _as_tensor(tape, node_emb)
    graph_index = np.asarray(graph_index, dtype=np.int64)
    num_graphs = global_emb.shape[0]
    if num_graphs < 2:
        raise ShapeError("InfoGraph needs at least 2 graphs per batch for negatives")
    if graph_index.shape != (node_emb.shape[0],):
        raise ShapeError(f"graph_index has shape {graph_index.shape}, expected ({node_emb.shape[0]},)")

    local = apply_mlp(tape, discriminator, "disc.local", node_emb)
    glob = apply_mlp(tape, discriminator, "disc.global", global_emb)
    scores = tape.matmul(local, glob, transpose_b=True)

    positive = np.zeros((node_emb.shape[0], num_graphs))
    positive[np.arange(graph_index.size), graph_index] = 1.0
    negative = 1.0 - positive
    pos_term = tape.sum(tape.multiply(tape.softplus(tape.scale(scores, -1.0)), tape.constant(positive)))
    neg_term = tape.sum(tape.multiply(tape.softplus(scores), tape.constant(negative)))
    return tape.add(tape.scale(pos_term, 1.0 / positive.sum()), tape.scale(neg_term, 1.0 / negative.sum()))


def init_discriminator(embedding_dim: int, config: InfoGraphConfig, rng: np.random.Generator) -> Dict[str, np.ndarray]:
    dims = [embedding_dim, config.hidden_dim, config.proj_dim]
    return {**init_mlp("disc.local", dims, rng), **init_mlp("disc.global", dims, rng)}


# ============================================================================
# TRAINING
# ============================================================================

@dataclass
class PretrainResult:
    params: EncoderParams
    loss_trace: List[float] = field(default_factory=list)


BatchLoss = Callable[[Tape, Dict[str, Tensor], EncoderParams, List[Graph]], Tensor]


def _train(method: str, graphs: Sequence[Graph], encoder_config: EncoderConfig, train: TrainConfig,
           head_arrays: Dict[str, np.ndarray], batch_loss: BatchLoss, run: str) -> PretrainResult:
    if len(graphs) < 2:
        raise DatasetFormatError(f"{method} pretraining needs at least 2 graphs, got {len(graphs)}")
    params = init_encoder(encoder_config)
    trainable = {**params.arrays, **head_arrays}
    adam = AdamState.create(trainable, lr=train.lr, weight_decay=train.weight_decay)
    logger.info(f"{method}: {count_parameters(trainable.values())} trainable values, {train.epochs} epochs")
    order_rng = stream(train.seed, "batch-order", run)
    trace: List[float] = []

    for epoch in range(1, train.epochs + 1):
        order = order_rng.permutation(len(graphs))
        losses = []
        for batch_no, start in enumerate(range(0, len(graphs), train.batch_size), 1):
            members = [graphs[i] for i in order[start:start + train.batch_size]]
            if len(members) < 2:
                continue
            tape = Tape()
            weights = register_parameters(tape, trainable)
            try:
                loss = batch_loss(tape, weights, params, members)
                value = loss.item()
                if not np.isfinite(value):
                    raise NonFiniteError(f"loss is {value}")
                gradients = backward(tape, loss)
            except NonFiniteError as e:
                raise TrainingDivergedError(
                    f"{method} diverged at epoch {epoch}, batch {batch_no}: {e}", epoch, batch_no
                )
            trainable, adam = adam_step(trainable, gradients, adam)
            params = EncoderParams(encoder_config, {k: trainable[k] for k in params.arrays}, params.buffers)
            losses.append(value)
        trace.append(float(np.mean(losses)) if losses else float("nan"))
        logger.info(f"{method} epoch {epoch}/{train.epochs}: loss {trace[-1]:.4f}")

    return PretrainResult(params, trace)


def train_graphcl(graphs: Sequence[Graph], encoder_config: EncoderConfig, train: TrainConfig,
                  run: str = "") -> PretrainResult:
    """Pretrain with two augmented views per graph; the head is discarded."""
    head = ProjectionHead.create(
        encoder_config.embedding_dim, train.proj_dim, stream(train.seed, "head-init", run)
    )
    aug1, aug2 = stream(train.seed, "aug-1", run), stream(train.seed, "aug-2", run)
    spec = train.augmentation

    def batch_loss(tape, weights, params, members):
        view1 = collate([augment(g, spec, aug1) for g in members])
        view2 = collate([augment(g, spec, aug2) for g in members])
        h1 = encoder_forward(tape, params, view1, training=True, weights=weights).graph_embeddings
        h2 = encoder_forward(tape, params, view2, training=True, weights=weights).graph_embeddings
        return info_nce_loss(tape, head(tape, weights, h1), head(tape, weights, h2), train.temperature)

    logger.info(f"🚀 GraphCL pretraining on {len(graphs)} graphs ({spec.kind}, p={spec.p})")
    return _train("graphcl", graphs, encoder_config, train, head.arrays, batch_loss, run)


def train_infograph(graphs: Sequence[Graph], encoder_config: EncoderConfig, train: TrainConfig,
                    run: str = "") -> PretrainResult:
    """Augmentation-free local/global pretraining; the discriminator is discarded."""
    config = train.infograph(encoder_config.hidden_dim)
    discriminator = init_discriminator(
        encoder_config.embedding_dim, config, stream(train.seed, "head-init", run)
    )

    def batch_loss(tape, weights, params, members):
        batch = collate(members)
        out = encoder_forward(tape, params, batch, training=True, weights=weights)
        return infograph_loss(tape, out.graph_embeddings, out.node_embeddings, batch.graph_index, weights)

    logger.info(f"🚀 InfoGraph pretraining on {len(graphs)} graphs")
    return _train("infograph", graphs, encoder_config, train, discriminator, batch_loss, run)
