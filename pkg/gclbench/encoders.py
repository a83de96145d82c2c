"""
GIN / GINE message-passing encoders and the MolFingerprint MLP.

Layer update: h'_v = BN(relu(MLP((1 + eps) * h_v + sum_u m_uv))) with
m_uv = h_u (GIN) or relu(h_u + e_uv) (GINE). Every layer is sum-pooled per
graph and the pooled vectors are concatenated.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from gclbench.autodiff import BatchNormState, Tape, Tensor
from gclbench.errors import ConfigError, DatasetFormatError, ShapeError
from gclbench.graphs import Graph, GraphBatch, GraphDataset, collate
from gclbench.rng import stream

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "gclbench-checkpoint"
CHECKPOINT_VERSION = 1


class EncoderConfig(BaseModel):
    """Architecture of one encoder."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    variant: Literal["gin", "gine", "molfingerprint"] = Field(default="gin", description="Encoder family")
    layers: int = Field(default=3, ge=1, description="Message-passing layers")
    hidden_dim: int = Field(default=32, ge=1, description="Width of every layer")
    eps: float = Field(default=0.0, description="GIN self-weight; fixed, not learned")
    node_dim: int = Field(default=1, ge=1, description="Node feature width (GIN / MolFingerprint)")
    node_vocab: List[int] = Field(default_factory=list, description="GINE table size per node column")
    edge_vocab: List[int] = Field(default_factory=list, description="GINE table size per edge column")
    fingerprint_dim: int = Field(default=256, ge=1, description="MolFingerprint hidden/output width")
    init_seed: int = Field(default=0, description="Seed of the 'init' stream")

    @property
    def embedding_dim(self) -> int:
        if self.variant == "molfingerprint":
            return self.fingerprint_dim
        return self.layers * self.hidden_dim

    @classmethod
    def for_dataset(cls, dataset: GraphDataset, variant: str = "gin", **overrides) -> "EncoderConfig":
        """Infer input widths (or categorical table sizes) from the data."""
        first = dataset.graphs[0]
        values = dict(variant=variant, node_dim=int(first.node_features.shape[1]))
        if variant == "gine":
            node_codes = np.concatenate([g.node_features for g in dataset.graphs], axis=0)
            values["node_vocab"] = [int(c) + 1 for c in node_codes.max(axis=0)]
            edge_blocks = [g.edge_features for g in dataset.graphs
                           if g.edge_features is not None and g.num_edges]
            if not edge_blocks:
                raise ConfigError("GINE needs edge features, but the dataset has none")
            values["edge_vocab"] = [int(c) + 1 for c in np.concatenate(edge_blocks, axis=0).max(axis=0)]
        values.update(overrides)
        return cls(**values)


@dataclass
class EncoderParams:
    """Weights plus batch-norm running statistics."""

    config: EncoderConfig
    arrays: Dict[str, np.ndarray]
    buffers: Dict[str, np.ndarray] = field(default_factory=dict)
    frozen: bool = False

    def freeze(self) -> "EncoderParams":
        for value in list(self.arrays.values()) + list(self.buffers.values()):
            value.setflags(write=False)
        self.frozen = True
        return self

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            self.config,
            {k: v.copy() for k, v in self.arrays.items()},
            {k: v.copy() for k, v in self.buffers.items()},
        )

    def fingerprint(self) -> str:
        """SHA-256 over names, shapes and bytes of all arrays and buffers."""
        digest = hashlib.sha256()
        for group in (self.arrays, self.buffers):
            for name in sorted(group):
                value = np.ascontiguousarray(group[name])
                digest.update(name.encode())
                digest.update(str(value.shape).encode())
                digest.update(value.tobytes())
        return digest.hexdigest()


# ============================================================================
# INITIALIZATION
# ============================================================================

def _uniform(rng: np.random.Generator, bound: float, shape) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape)


def _linear(arrays: Dict[str, np.ndarray], rng: np.random.Generator, name: str,
            fan_in: int, fan_out: int, bias: bool = True) -> None:
    bound = 1.0 / np.sqrt(fan_in)
    arrays[f"{name}.w"] = _uniform(rng, bound, (fan_in, fan_out))
    if bias:
        arrays[f"{name}.b"] = _uniform(rng, bound, (fan_out,))


def init_encoder(config: EncoderConfig) -> EncoderParams:
    """Uniform fan-in initialisation from the 'init' stream."""
    rng = stream(config.init_seed, "init", config.variant)
    arrays: Dict[str, np.ndarray] = {}
    buffers: Dict[str, np.ndarray] = {}
    hidden = config.hidden_dim

    if config.variant == "molfingerprint":
        _linear(arrays, rng, "fp.lin1", config.node_dim, config.fingerprint_dim)
        _linear(arrays, rng, "fp.lin2", config.fingerprint_dim, config.fingerprint_dim)
        return EncoderParams(config, arrays, buffers)

    if config.variant == "gin":
        _linear(arrays, rng, "input", config.node_dim, hidden, bias=False)
    else:
        if not config.node_vocab or not config.edge_vocab:
            raise ConfigError("GINE needs node_vocab and edge_vocab")
        for c, size in enumerate(config.node_vocab):
            arrays[f"node_emb.{c}"] = _uniform(rng, np.sqrt(6.0 / (size + hidden)), (size, hidden))

    for layer in range(config.layers):
        if config.variant == "gine":
            for c, size in enumerate(config.edge_vocab):
                arrays[f"layer{layer}.edge_emb.{c}"] = _uniform(rng, np.sqrt(6.0 / (size + hidden)), (size, hidden))
        _linear(arrays, rng, f"layer{layer}.lin1", hidden, hidden)
        _linear(arrays, rng, f"layer{layer}.lin2", hidden, hidden)
        arrays[f"layer{layer}.bn.gamma"] = np.ones(hidden)
        arrays[f"layer{layer}.bn.beta"] = np.zeros(hidden)
        buffers[f"layer{layer}.bn.running_mean"] = np.zeros(hidden)
        buffers[f"layer{layer}.bn.running_var"] = np.ones(hidden)
    return EncoderParams(config, arrays, buffers)


# ============================================================================
# FORWARD
# ============================================================================

@dataclass
class EncoderOutput:
    graph_embeddings: Tensor
    node_embeddings: Tensor
    pre_norm: List[np.ndarray] = field(default_factory=list)


def register_parameters(tape: Tape, arrays: Dict[str, np.ndarray], prefix: str = "") -> Dict[str, Tensor]:
    return {name: tape.parameter(prefix + name, value) for name, value in arrays.items()}


def _categorical(tape: Tape, tables: Sequence[Tensor], codes: np.ndarray, what: str) -> Tensor:
    if codes.ndim != 2 or codes.shape[1] != len(tables):
        raise ShapeError(f"{what} features have {codes.shape[-1]} columns, encoder expects {len(tables)}")
    out: Optional[Tensor] = None
    for c, table in enumerate(tables):
        column = codes[:, c]
        if column.size and (column.min() < 0 or column.max() >= table.shape[0]):
            raise ShapeError(f"{what} column {c} has codes outside [0, {table.shape[0]})")
        part = tape.row_gather(table, column)
        out = part if out is None else tape.add(out, part)
    return out


def encoder_forward(tape: Tape, params: EncoderParams, batch: GraphBatch, training: bool,
                    weights: Optional[Dict[str, Tensor]] = None) -> EncoderOutput:
    """Message passing on the tape. `weights` reuses already-registered tensors."""
    config = params.config
    if config.variant == "molfingerprint":
        raise ConfigError("Use molfingerprint_embed for the MolFingerprint baseline")
    if training and params.frozen:
        raise ConfigError("Frozen encoder parameters cannot run in train mode")
    w = weights if weights is not None else register_parameters(tape, params.arrays)
    n = batch.num_nodes

    if config.variant == "gin":
        if batch.node_features.shape[1] != config.node_dim:
            raise ShapeError(f"Node features have width {batch.node_features.shape[1]}, encoder expects {config.node_dim}")
        h = tape.matmul(tape.constant(batch.node_features), w["input.w"])
    else:
        if batch.edge_features is None:
            raise DatasetFormatError("GINE needs edge features")
        h = _categorical(tape, [w[f"node_emb.{c}"] for c in range(len(config.node_vocab))],
                         batch.node_features.astype(np.int64), "Node")
        edge_codes = batch.edge_features.astype(np.int64).reshape(batch.src.size, -1)

    pooled: List[Tensor] = []
    node_layers: List[Tensor] = []
    pre_norm: List[np.ndarray] = []
    for layer in range(config.layers):
        neighbours = tape.row_gather(h, batch.src)
        if config.variant == "gine":
            edge_emb = _categorical(
                tape, [w[f"layer{layer}.edge_emb.{c}"] for c in range(len(config.edge_vocab))],
                edge_codes, "Edge",
            )
            neighbours = tape.relu(tape.add(neighbours, edge_emb))
        aggregated = tape.scatter_sum(neighbours, batch.dst, n)
        self_term = h if config.eps == 0.0 else tape.scale(h, 1.0 + config.eps)
        z = tape.add(self_term, aggregated)
        z = tape.relu(tape.linear(z, w[f"layer{layer}.lin1.w"], w[f"layer{layer}.lin1.b"]))
        # rectified after the second map too, then batch norm
        z = tape.relu(tape.linear(z, w[f"layer{layer}.lin2.w"], w[f"layer{layer}.lin2.b"]))
        pre_norm.append(z.values)
        state = BatchNormState(
            params.buffers[f"layer{layer}.bn.running_mean"],
            params.buffers[f"layer{layer}.bn.running_var"],
        )
        h = tape.batch_norm(z, w[f"layer{layer}.bn.gamma"], w[f"layer{layer}.bn.beta"], state, training)
        node_layers.append(h)
        pooled.append(tape.scatter_sum(h, batch.graph_index, batch.num_graphs))

    return EncoderOutput(
        graph_embeddings=tape.concatenate(pooled, axis=1),
        node_embeddings=tape.concatenate(node_layers, axis=1),
        pre_norm=pre_norm,
    )


def _chunks(graphs: Sequence[Graph], batch_size: int):
    for start in range(0, len(graphs), batch_size):
        yield graphs[start:start + batch_size]


def encode_graphs(params: EncoderParams, graphs: Sequence[Graph], mode: str = "eval",
                  batch_size: int = 512) -> np.ndarray:
    """
    Graph embeddings [len(graphs), layers * hidden_dim].

    Eval mode reads batch-norm running statistics, so chunking does not change
    results. Train mode normalises by statistics of the whole input and
    updates the running averages.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if not graphs:
        raise DatasetFormatError("Cannot encode an empty batch")
    if mode == "train":
        batch_size = len(graphs)
    blocks = []
    for chunk in _chunks(graphs, batch_size):
        tape = Tape()
        out = encoder_forward(tape, params, collate(chunk), training=(mode == "train"))
        blocks.append(out.graph_embeddings.values)
    return np.concatenate(blocks, axis=0)


def molfingerprint_embed(params: EncoderParams, graphs: Sequence[Graph], batch_size: int = 512) -> np.ndarray:
    """Per-node two-layer MLP followed by sum pooling; no message passing."""
    config = params.config
    if config.variant != "molfingerprint":
        raise ConfigError(f"Expected MolFingerprint parameters, got variant '{config.variant}'")
    blocks = []
    for chunk in _chunks(graphs, batch_size):
        batch = collate(chunk)
        if batch.node_features.shape[1] != config.node_dim:
            raise ShapeError(f"Node features have width {batch.node_features.shape[1]}, encoder expects {config.node_dim}")
        tape = Tape()
        w = register_parameters(tape, params.arrays)
        x = tape.constant(batch.node_features)
        h = tape.relu(tape.linear(x, w["fp.lin1.w"], w["fp.lin1.b"]))
        h = tape.linear(h, w["fp.lin2.w"], w["fp.lin2.b"])
        blocks.append(tape.scatter_sum(h, batch.graph_index, batch.num_graphs).values)
    return np.concatenate(blocks, axis=0)


def embed(params: EncoderParams, graphs: Sequence[Graph]) -> np.ndarray:
    if params.config.variant == "molfingerprint":
        return molfingerprint_embed(params, graphs)
    return encode_graphs(params, graphs, mode="eval")


# ============================================================================
# CHECKPOINTS
# ============================================================================

def _dump_arrays(group: Dict[str, np.ndarray]) -> Dict[str, dict]:
    return {name: {"shape": list(v.shape), "values": v.reshape(-1).tolist()} for name, v in sorted(group.items())}


def _load_arrays(group: Dict[str, dict]) -> Dict[str, np.ndarray]:
    return {name: np.asarray(e["values"], dtype=np.float64).reshape(e["shape"]) for name, e in group.items()}


def save_checkpoint(params: EncoderParams, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": params.config.model_dump(),
        "arrays": _dump_arrays(params.arrays),
        "buffers": _dump_arrays(params.buffers),
    }
    path.write_text(json.dumps(payload), encoding="utf-8")
    logger.info(f"💾 Saved encoder checkpoint: {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> EncoderParams:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Checkpoint not found: {path}")
    payload = json.loads(path.read_text(encoding="utf-8"))
    if payload.get("format") != CHECKPOINT_FORMAT or payload.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"{path} is not a version {CHECKPOINT_VERSION} gclbench checkpoint")
    return EncoderParams(
        EncoderConfig(**payload["config"]),
        _load_arrays(payload["arrays"]),
        _load_arrays(payload["buffers"]),
    )
