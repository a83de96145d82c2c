"""
Dense tensors with a reverse-mode differentiation tape and the Adam optimizer.

Every forward op appends one record to a flat Tape. backward() replays the
records in reverse order, so each node is visited exactly once and operands
always precede outputs.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from gclbench.errors import NonFiniteError, ShapeError, TapeError, UnknownOpError

logger = logging.getLogger(__name__)

DTYPES = {"float64": np.float64, "float32": np.float32}

_default_dtype = np.float64

BN_MOMENTUM = 0.1
BN_EVAL_EPS = 1e-5
BN_TRAIN_EPS = 1e-8


def set_precision(name: str) -> None:
    """Switch the dtype used for new leaves ("float64" or "float32")."""
    global _default_dtype
    if name not in DTYPES:
        raise ValueError(f"Unknown precision '{name}', expected one of {sorted(DTYPES)}")
    _default_dtype = DTYPES[name]


def default_dtype():
    return _default_dtype


# ============================================================================
# TENSOR AND TAPE
# ============================================================================

class Tensor:
    """A dense row-major array owned by at most one Tape."""

    __slots__ = ("values", "name", "tape", "index")

    def __init__(self, values: np.ndarray, name: Optional[str] = None,
                 tape: Optional["Tape"] = None, index: int = -1):
        self.values = values
        self.name = name
        self.tape = tape
        self.index = index

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.values.shape)

    def item(self) -> float:
        return float(self.values)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class OpRecord:
    kind: str
    operands: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


@dataclass
class BatchNormState:
    """Running statistics for one batch-norm site; updated in place in train mode."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM
    eps: float = BN_EVAL_EPS
    train_eps: float = BN_TRAIN_EPS


_OPS: Dict[str, Callable] = {}


def register(kind: str):
    def decorator(fn):
        _OPS[kind] = fn
        return fn
    return decorator


def op_kinds() -> List[str]:
    return sorted(_OPS)


class Tape:
    """Flat record of forward operations for one worker."""

    def __init__(self, dtype=None):
        self.dtype = dtype or default_dtype()
        self.records: List[OpRecord] = []
        self.parameters: Dict[str, Tensor] = {}
        self._size = 0

    def _adopt(self, values: np.ndarray, name: Optional[str] = None) -> Tensor:
        tensor = Tensor(values, name=name, tape=self, index=self._size)
        self._size += 1
        return tensor

    def parameter(self, name: str, values) -> Tensor:
        """Leaf whose gradient backward() reports under `name`."""
        if name in self.parameters:
            raise TapeError(f"Parameter '{name}' already registered on this tape")
        tensor = self._adopt(np.array(values, dtype=self.dtype), name=name)
        self.parameters[name] = tensor
        return tensor

    def constant(self, values) -> Tensor:
        return self._adopt(np.asarray(values, dtype=self.dtype))

    def forward(self, kind: str, *operands: Tensor, **attrs) -> Tensor:
        if kind not in _OPS:
            raise UnknownOpError(f"Unknown op-kind '{kind}'")
        for operand in operands:
            if not isinstance(operand, Tensor) or operand.tape is not self:
                raise TapeError(f"Operand of '{kind}' is not a tensor on this tape")
        values, backward_fn = _OPS[kind](*(t.values for t in operands), **attrs)
        if not np.all(np.isfinite(values)):
            raise NonFiniteError(f"'{kind}' produced non-finite values")
        output = self._adopt(values)
        self.records.append(OpRecord(kind, tuple(operands), output, backward_fn))
        return output

    # Convenience wrappers, one per op-kind.

    def matmul(self, a: Tensor, b: Tensor, transpose_b: bool = False) -> Tensor:
        return self.forward("matmul", a, b, transpose_b=transpose_b)

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        return self.forward("add", a, b)

    def multiply(self, a: Tensor, b: Tensor) -> Tensor:
        return self.forward("multiply", a, b)

    def scale(self, a: Tensor, factor: float) -> Tensor:
        return self.forward("multiply", a, self.constant(factor))

    def relu(self, a: Tensor) -> Tensor:
        return self.forward("relu", a)

    def softplus(self, a: Tensor) -> Tensor:
        return self.forward("softplus", a)

    def exp(self, a: Tensor) -> Tensor:
        return self.forward("exp", a)

    def log(self, a: Tensor) -> Tensor:
        return self.forward("log", a)

    def sum(self, a: Tensor, axis: Optional[int] = None) -> Tensor:
        return self.forward("sum-reduce", a, axis=axis)

    def mean(self, a: Tensor, axis: Optional[int] = None) -> Tensor:
        return self.forward("mean-reduce", a, axis=axis)

    def batch_norm(self, x: Tensor, gamma: Tensor, beta: Tensor,
                   state: BatchNormState, training: bool) -> Tensor:
        return self.forward("batch-norm", x, gamma, beta, state=state, training=training)

    def cosine_similarity(self, a: Tensor, b: Tensor) -> Tensor:
        return self.forward("cosine-similarity", a, b)

    def concatenate(self, tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
        return self.forward("concatenate", *tensors, axis=axis)

    def scatter_sum(self, x: Tensor, index: np.ndarray, num_segments: int) -> Tensor:
        return self.forward("scatter-sum", x, index=index, num_segments=num_segments)

    def row_gather(self, x: Tensor, index: np.ndarray) -> Tensor:
        return self.forward("row-gather", x, index=index)

    def linear(self, x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
        out = self.matmul(x, weight)
        return self.add(out, bias) if bias is not None else out


def backward(tape: Tape, loss: Tensor) -> Dict[str, np.ndarray]:
    """Gradient of a scalar loss with respect to every parameter on the tape."""
    if loss.tape is not tape:
        raise TapeError("Loss was not produced on this tape")
    if loss.values.ndim != 0:
        raise ShapeError(f"Loss must be a scalar, got shape {loss.shape}")

    grads: Dict[int, np.ndarray] = {loss.index: np.ones_like(loss.values)}
    for record in reversed(tape.records):
        upstream = grads.get(record.output.index)
        if upstream is None:
            continue
        for operand, grad in zip(record.operands, record.backward(upstream)):
            if grad is None:
                continue
            if operand.index in grads:
                grads[operand.index] = grads[operand.index] + grad
            else:
                grads[operand.index] = grad

    out = {
        name: grads.get(tensor.index, np.zeros_like(tensor.values))
        for name, tensor in tape.parameters.items()
    }
    for name, grad in out.items():
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"Gradient of '{name}' is non-finite")
    return out


# ============================================================================
# OP RULES
# ============================================================================

def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(kind: str, a: np.ndarray, b: np.ndarray) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"'{kind}' operands do not conform: {a.shape} vs {b.shape}")


@register("matmul")
def _matmul(a: np.ndarray, b: np.ndarray, transpose_b: bool = False):
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    inner = b.shape[1] if transpose_b else b.shape[0]
    if a.shape[1] != inner:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    if transpose_b:
        def grad(g):
            return g @ b, g.T @ a
        return a @ b.T, grad

    def grad(g):
        return g @ b.T, a.T @ g
    return a @ b, grad


@register("add")
def _add(a: np.ndarray, b: np.ndarray):
    _broadcast_shape("add", a, b)

    def grad(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return a + b, grad


@register("multiply")
def _multiply(a: np.ndarray, b: np.ndarray):
    _broadcast_shape("multiply", a, b)

    def grad(g):
        return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)
    return a * b, grad


@register("relu")
def _relu(a: np.ndarray):
    # subgradient at exactly 0 is 0
    mask = a > 0

    def grad(g):
        return (g * mask,)
    return np.where(mask, a, 0.0).astype(a.dtype), grad


def _sigmoid(a: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * a))


@register("softplus")
def _softplus(a: np.ndarray):
    def grad(g):
        return (g * _sigmoid(a),)
    return np.logaddexp(0.0, a).astype(a.dtype), grad


@register("exp")
def _exp(a: np.ndarray):
    out = np.exp(a)

    def grad(g):
        return (g * out,)
    return out, grad


@register("log")
def _log(a: np.ndarray):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a)

    def grad(g):
        return (g / a,)
    return out, grad


def _expand_reduced(g: np.ndarray, shape: Tuple[int, ...], axis: Optional[int]) -> np.ndarray:
    if axis is not None:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape).copy()


def _check_axis(kind: str, a: np.ndarray, axis: Optional[int]) -> None:
    if axis is not None and not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"'{kind}' axis {axis} out of range for shape {a.shape}")


@register("sum-reduce")
def _sum(a: np.ndarray, axis: Optional[int] = None):
    _check_axis("sum-reduce", a, axis)

    def grad(g):
        return (_expand_reduced(g, a.shape, axis),)
    return np.asarray(a.sum(axis=axis)), grad


@register("mean-reduce")
def _mean(a: np.ndarray, axis: Optional[int] = None):
    _check_axis("mean-reduce", a, axis)
    count = a.size if axis is None else a.shape[axis]
    if count == 0:
        raise ShapeError("mean-reduce over an empty axis")

    def grad(g):
        return (_expand_reduced(g, a.shape, axis) / count,)
    return np.asarray(a.mean(axis=axis)), grad


@register("batch-norm")
def _batch_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
                state: BatchNormState, training: bool):
    if x.ndim != 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeError(f"batch-norm expects x [n, d] with gamma/beta [d], got "
                         f"{x.shape}, {gamma.shape}, {beta.shape}")
    if state.running_mean.shape != (x.shape[1],):
        raise ShapeError("batch-norm running statistics do not match feature width")

    if not training:
        inv_std = 1.0 / np.sqrt(state.running_var + state.eps)
        x_hat = (x - state.running_mean) * inv_std

        def grad(g):
            return g * gamma * inv_std, (g * x_hat).sum(axis=0), g.sum(axis=0)
        return x_hat * gamma + beta, grad

    n = x.shape[0]
    mean = x.mean(axis=0)
    var = x.var(axis=0)
    inv_std = 1.0 / np.sqrt(var + state.train_eps)
    x_hat = (x - mean) * inv_std

    unbiased = var * n / (n - 1) if n > 1 else var
    state.running_mean[...] = (1 - state.momentum) * state.running_mean + state.momentum * mean
    state.running_var[...] = (1 - state.momentum) * state.running_var + state.momentum * unbiased

    def grad(g):
        g_hat = g * gamma
        gx = inv_std / n * (n * g_hat - g_hat.sum(axis=0) - x_hat * (g_hat * x_hat).sum(axis=0))
        return gx, (g * x_hat).sum(axis=0), g.sum(axis=0)
    return x_hat * gamma + beta, grad


@register("cosine-similarity")
def _cosine_similarity(a: np.ndarray, b: np.ndarray):
    """Pairwise cosine similarity of rows; 1-D operands give a scalar."""
    squeeze = a.ndim == 1 and b.ndim == 1
    a2, b2 = np.atleast_2d(a), np.atleast_2d(b)
    if a2.ndim != 2 or b2.ndim != 2 or a2.shape[1] != b2.shape[1]:
        raise ShapeError(f"cosine-similarity operands do not conform: {a.shape} vs {b.shape}")
    norm_a = np.linalg.norm(a2, axis=1, keepdims=True)
    norm_b = np.linalg.norm(b2, axis=1, keepdims=True)
    if np.any(norm_a == 0) or np.any(norm_b == 0):
        raise ShapeError("cosine-similarity is undefined for zero-norm vectors")
    unit_a, unit_b = a2 / norm_a, b2 / norm_b
    sim = unit_a @ unit_b.T

    def grad(g):
        g2 = np.atleast_2d(g).reshape(sim.shape)
        d_unit_a = g2 @ unit_b
        d_unit_b = g2.T @ unit_a
        ga = (d_unit_a - unit_a * (d_unit_a * unit_a).sum(axis=1, keepdims=True)) / norm_a
        gb = (d_unit_b - unit_b * (d_unit_b * unit_b).sum(axis=1, keepdims=True)) / norm_b
        return ga.reshape(a.shape), gb.reshape(b.shape)
    return (np.asarray(sim[0, 0]) if squeeze else sim), grad


@register("concatenate")
def _concatenate(*parts: np.ndarray, axis: int = -1):
    if not parts:
        raise ShapeError("concatenate needs at least one operand")
    try:
        out = np.concatenate(parts, axis=axis)
    except ValueError as e:
        raise ShapeError(f"concatenate operands do not conform: {e}")
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def grad(g):
        return tuple(np.split(g, bounds, axis=axis))
    return out, grad


def _check_index(kind: str, index: np.ndarray, limit: int) -> np.ndarray:
    index = np.asarray(index)
    if index.ndim != 1 or not np.issubdtype(index.dtype, np.integer):
        raise ShapeError(f"'{kind}' index must be a 1-D integer array")
    if index.size and (index.min() < 0 or index.max() >= limit):
        raise ShapeError(f"'{kind}' index out of range [0, {limit})")
    return index


@register("scatter-sum")
def _scatter_sum(x: np.ndarray, index: np.ndarray, num_segments: int):
    index = _check_index("scatter-sum", index, num_segments)
    if x.shape[0] != index.shape[0]:
        raise ShapeError(f"scatter-sum index length {index.shape[0]} != rows {x.shape[0]}")
    out = np.zeros((num_segments,) + x.shape[1:], dtype=x.dtype)
    np.add.at(out, index, x)

    def grad(g):
        return (g[index],)
    return out, grad


@register("row-gather")
def _row_gather(x: np.ndarray, index: np.ndarray):
    index = _check_index("row-gather", index, x.shape[0])

    def grad(g):
        gx = np.zeros_like(x)
        np.add.at(gx, index, g)
        return (gx,)
    return x[index], grad


# ============================================================================
# ADAM
# ============================================================================

@dataclass
class AdamState:
    """First/second moment accumulators keyed by parameter name."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def create(cls, params: Dict[str, np.ndarray], **hyper) -> "AdamState":
        return cls(
            first_moment={k: np.zeros_like(v) for k, v in params.items()},
            second_moment={k: np.zeros_like(v) for k, v in params.items()},
            **hyper,
        )


def adam_step(params: Dict[str, np.ndarray], gradients: Dict[str, np.ndarray],
              state: AdamState) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """
    One bias-corrected Adam update with decoupled weight decay.

    Inputs are not mutated; new parameter and state objects are returned.
    """
    if set(params) != set(state.first_moment) or set(params) != set(gradients):
        raise ShapeError("Adam state, parameters and gradients cover different names")

    step = state.step + 1
    correction1 = 1.0 - state.beta1 ** step
    correction2 = 1.0 - state.beta2 ** step
    new_params, first, second = {}, {}, {}
    for name, value in params.items():
        g = gradients[name]
        if g.shape != value.shape or state.first_moment[name].shape != value.shape:
            raise ShapeError(f"Adam shape mismatch for '{name}': {value.shape} vs {g.shape}")
        m = state.beta1 * state.first_moment[name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.second_moment[name] + (1.0 - state.beta2) * g * g
        decayed = value - state.lr * state.weight_decay * value
        delta = state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.epsilon)
        new_params[name] = (decayed - delta).astype(value.dtype)
        first[name], second[name] = m, v

    new_state = AdamState(
        lr=state.lr, beta1=state.beta1, beta2=state.beta2, epsilon=state.epsilon,
        weight_decay=state.weight_decay, step=step, first_moment=first, second_moment=second,
    )
    return new_params, new_state


def count_parameters(params: Iterable[np.ndarray]) -> int:
    return int(sum(p.size for p in params))
