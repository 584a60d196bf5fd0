"""
Neural building blocks for the teacher and student classifiers.

- EmbeddingTable: token id -> vector lookup with a frozen, all-zero pad row
- LstmParams / LstmState / lstm_cell: one LSTM step with separate gate weights
- bilstm_encode / lstm_encode: masked recurrence over a padded batch
- ConvFilterBank / conv_text: full-width 1-D text convolution, ReLU, max over time
- Linear / linear: affine classifier head
- dropout: inverted dropout (identity at evaluation time)

Initialisation:
- embeddings uniform(-0.1, 0.1), pad row zero
- LSTM and conv weights uniform(+-1/sqrt(fan_in)), forget-gate bias 1.0, other biases 0
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from blendkit.tensor import (
    Tensor,
    add,
    bias_add,
    concat,
    gather_rows,
    matmul,
    max_over_axis,
    mul,
    narrow,
    relu,
    reshape,
    select,
    sigmoid,
    tanh,
    transpose,
    unfold,
)
from blendkit.util.errors import ConfigError, DimensionError, InputError

EMBEDDING_INIT_RANGE = 0.1
FORGET_BIAS_INIT = 1.0
GATES = ("f", "i", "o", "c")


def _uniform(rng: np.random.Generator, shape, bound: float) -> Tensor:
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


@dataclass
class EmbeddingTable:
    weights: Tensor
    pad_id: int = 0

    @classmethod
    def init(cls, vocab_size: int, dim: int, rng: np.random.Generator, pad_id: int = 0) -> "EmbeddingTable":
        values = rng.uniform(-EMBEDDING_INIT_RANGE, EMBEDDING_INIT_RANGE, size=(vocab_size, dim))
        values[pad_id] = 0.0
        return cls(Tensor(values, requires_grad=True), pad_id)

    @property
    def vocab_size(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def lookup(self, ids: np.ndarray) -> Tensor:
        return gather_rows(self.weights, ids, frozen_row=self.pad_id)

    def named_parameters(self, prefix: str) -> Dict[str, Tensor]:
        return {f"{prefix}.weight": self.weights}


@dataclass
class LstmParams:
    W_f: Tensor
    W_i: Tensor
    W_o: Tensor
    W_c: Tensor
    U_f: Tensor
    U_i: Tensor
    U_o: Tensor
    U_c: Tensor
    b_f: Tensor
    b_i: Tensor
    b_o: Tensor
    b_c: Tensor

    def __post_init__(self) -> None:
        hidden = self.W_f.shape[0]
        for gate in GATES:
            w, u, b = getattr(self, f"W_{gate}"), getattr(self, f"U_{gate}"), getattr(self, f"b_{gate}")
            if w.shape[0] != hidden or u.shape != (hidden, hidden) or b.shape != (hidden,):
                raise DimensionError(
                    f"LSTM gate {gate}: shapes {w.shape}, {u.shape}, {b.shape} do not share hidden size {hidden}")

    @classmethod
    def init(cls, input_size: int, hidden_size: int, rng: np.random.Generator,
             forget_bias: float = FORGET_BIAS_INIT) -> "LstmParams":
        fields = {}
        for gate in GATES:
            fields[f"W_{gate}"] = _uniform(rng, (hidden_size, input_size), 1.0 / math.sqrt(input_size))
        for gate in GATES:
            fields[f"U_{gate}"] = _uniform(rng, (hidden_size, hidden_size), 1.0 / math.sqrt(hidden_size))
        for gate in GATES:
            fill = forget_bias if gate == "f" else 0.0
            fields[f"b_{gate}"] = Tensor(np.full(hidden_size, fill), requires_grad=True)
        return cls(**fields)

    @property
    def hidden_size(self) -> int:
        return self.W_f.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_f.shape[1]

    def named_parameters(self, prefix: str) -> Dict[str, Tensor]:
        names = [f"{kind}_{gate}" for kind in ("W", "U", "b") for gate in GATES]
        return {f"{prefix}.{name}": getattr(self, name) for name in names}


@dataclass
class LstmState:
    h: Tensor
    c: Tensor

    @classmethod
    def zeros(cls, batch: int, hidden: int) -> "LstmState":
        return cls(Tensor(np.zeros((batch, hidden))), Tensor(np.zeros((batch, hidden))))


@dataclass
class _FusedLstm:
    """Gate weights stacked in f, i, o, c order so one step costs two matmuls."""

    w_t: Tensor  # input x 4*hidden
    u_t: Tensor  # hidden x 4*hidden
    bias: Tensor  # 4*hidden
    hidden: int


def _fuse(params: LstmParams) -> _FusedLstm:
    w = concat([getattr(params, f"W_{gate}") for gate in GATES], axis=0)
    u = concat([getattr(params, f"U_{gate}") for gate in GATES], axis=0)
    b = concat([getattr(params, f"b_{gate}") for gate in GATES], axis=0)
    return _FusedLstm(transpose(w), transpose(u), b, params.hidden_size)


def _step(fused: _FusedLstm, x_t: Tensor, state: LstmState) -> LstmState:
    h = fused.hidden
    if x_t.data.ndim != 2 or x_t.shape[1] != fused.w_t.shape[0] or state.h.shape != (x_t.shape[0], h):
        raise DimensionError(
            f"lstm_cell: input {x_t.shape} and state {state.h.shape} do not fit "
            f"input size {fused.w_t.shape[0]} / hidden size {h}")
    gates = bias_add(add(matmul(x_t, fused.w_t), matmul(state.h, fused.u_t)), fused.bias)
    f_t = sigmoid(narrow(gates, 1, 0, h))
    i_t = sigmoid(narrow(gates, 1, h, 2 * h))
    o_t = sigmoid(narrow(gates, 1, 2 * h, 3 * h))
    c_hat = tanh(narrow(gates, 1, 3 * h, 4 * h))
    c_t = add(mul(f_t, state.c), mul(i_t, c_hat))
    h_t = mul(o_t, tanh(c_t))
    return LstmState(h_t, c_t)


def lstm_cell(params: LstmParams, x_t: Tensor, state: LstmState) -> LstmState:
    """One LSTM step: sigmoid gates f, i, o, tanh candidate, c = f*c + i*c_hat, h = o*tanh(c)."""
    return _step(_fuse(params), x_t, state)


def _blend(valid: np.ndarray, new: Tensor, old: Tensor) -> Tensor:
    # Rows past their true length keep the previous state exactly
    keep = Tensor(np.repeat(valid[:, None], new.shape[1], axis=1).astype(float))
    return add(mul(keep, new), mul(1.0 - keep.data, old))


def _masked_step(fused: _FusedLstm, x_t: Tensor, state: LstmState, valid: np.ndarray) -> LstmState:
    if not valid.any():
        return state
    stepped = _step(fused, x_t, state)
    if valid.all():
        return stepped
    return LstmState(_blend(valid, stepped.h, state.h), _blend(valid, stepped.c, state.c))


def _check_lengths(embedded: Tensor, lengths: np.ndarray) -> np.ndarray:
    lengths = np.asarray(lengths, dtype=np.int64)
    if embedded.data.ndim != 3 or lengths.shape != (embedded.shape[0],):
        raise DimensionError(f"encoder: embedded {embedded.shape} and lengths {lengths.shape} do not fit")
    if (lengths < 1).any():
        raise InputError(f"encoder: example {int(np.argmin(lengths))} has zero length")
    if (lengths > embedded.shape[1]).any():
        raise DimensionError(f"encoder: lengths exceed padded length {embedded.shape[1]}")
    return lengths


def _run_direction(params: LstmParams, embedded: Tensor, lengths: np.ndarray, reverse: bool) -> Tensor:
    batch = embedded.shape[0]
    fused = _fuse(params)
    state = LstmState.zeros(batch, params.hidden_size)
    span = int(lengths.max())
    steps = range(span - 1, -1, -1) if reverse else range(span)
    for t in steps:
        state = _masked_step(fused, select(embedded, 1, t), state, t < lengths)
    return state.h


def lstm_encode(params: LstmParams, embedded: Tensor, lengths) -> Tensor:
    """Forward-direction state at each example's last true token: batch x hidden."""
    lengths = _check_lengths(embedded, lengths)
    return _run_direction(params, embedded, lengths, reverse=False)


def bilstm_encode(fwd: LstmParams, bwd: LstmParams, embedded: Tensor, lengths) -> Tensor:
    """Concatenate the forward state at the last true token with the backward state at token 1.

    Args:
        fwd: Forward-direction parameters.
        bwd: Backward-direction parameters.
        embedded: batch x max_len x dim, pad positions may hold anything.
        lengths: True length of every example (>= 1).

    Returns:
        Tensor: batch x 2*hidden.
    """
    lengths = _check_lengths(embedded, lengths)
    forward = _run_direction(fwd, embedded, lengths, reverse=False)
    backward = _run_direction(bwd, embedded, lengths, reverse=True)
    return concat([forward, backward], axis=1)


@dataclass
class ConvFilterBank:
    kernels: Tensor  # count x width x dim
    bias: Tensor  # count

    def __post_init__(self) -> None:
        if self.kernels.data.ndim != 3 or self.kernels.shape[1] < 1:
            raise DimensionError(f"filter bank kernels must be count x width x dim, got {self.kernels.shape}")
        if self.bias.shape != (self.kernels.shape[0],):
            raise DimensionError(f"filter bank bias {self.bias.shape} does not match {self.kernels.shape[0]} filters")

    @classmethod
    def init(cls, width: int, count: int, dim: int, rng: np.random.Generator) -> "ConvFilterBank":
        bound = 1.0 / math.sqrt(width * dim)
        return cls(_uniform(rng, (count, width, dim), bound), Tensor(np.zeros(count), requires_grad=True))

    @property
    def width(self) -> int:
        return self.kernels.shape[1]

    @property
    def count(self) -> int:
        return self.kernels.shape[0]

    @property
    def dim(self) -> int:
        return self.kernels.shape[2]

    def named_parameters(self, prefix: str) -> Dict[str, Tensor]:
        return {f"{prefix}.kernels": self.kernels, f"{prefix}.bias": self.bias}


def conv_text(bank: ConvFilterBank, embedded: Tensor, lengths) -> Tensor:
    """Valid correlation over time, + bias, ReLU, then max over positions inside the true length.

    Returns:
        Tensor: batch x count.
    """
    lengths = np.asarray(lengths, dtype=np.int64)
    batch, max_len, dim = embedded.shape
    if dim != bank.dim:
        raise DimensionError(f"conv_text: embedding dim {dim} differs from kernel dim {bank.dim}")
    if max_len < bank.width or (lengths < bank.width).any():
        # The data pipeline pads every sentence to the widest filter
        raise DimensionError(
            f"conv_text: pipeline contract breach, length below filter width {bank.width}")
    span = int(lengths.max())
    if span < max_len:
        # Columns past every true length never reach the output
        embedded = narrow(embedded, 1, 0, span)
        max_len = span
    positions = max_len - bank.width + 1
    windows = reshape(unfold(embedded, bank.width), (batch * positions, bank.width * dim))
    flat_kernels = reshape(bank.kernels, (bank.count, bank.width * dim))
    scores = relu(bias_add(matmul(windows, transpose(flat_kernels)), bank.bias))
    scores = reshape(scores, (batch, positions, bank.count))
    valid = np.arange(positions)[None, :] + bank.width <= lengths[:, None]
    mask = np.repeat(valid[:, :, None], bank.count, axis=2)
    return max_over_axis(scores, axis=1, mask=mask)


@dataclass
class Linear:
    weight: Tensor  # out x in
    bias: Tensor  # out

    @classmethod
    def init(cls, in_features: int, out_features: int, rng: np.random.Generator) -> "Linear":
        bound = 1.0 / math.sqrt(in_features)
        return cls(_uniform(rng, (out_features, in_features), bound),
                   Tensor(np.zeros(out_features), requires_grad=True))

    @property
    def in_features(self) -> int:
        return self.weight.shape[1]

    @property
    def out_features(self) -> int:
        return self.weight.shape[0]

    def __call__(self, x: Tensor) -> Tensor:
        return linear(self.weight, self.bias, x)

    def named_parameters(self, prefix: str) -> Dict[str, Tensor]:
        return {f"{prefix}.weight": self.weight, f"{prefix}.bias": self.bias}


def linear(w: Tensor, b: Tensor, x: Tensor) -> Tensor:
    if w.data.ndim != 2 or x.data.ndim != 2 or x.shape[1] != w.shape[1] or b.shape != (w.shape[0],):
        raise DimensionError(f"linear: weight {w.shape}, bias {b.shape} and input {x.shape} do not fit")
    return bias_add(matmul(x, transpose(w)), b)


def dropout(x: Tensor, rate: float, training: bool, rng: Optional[np.random.Generator]) -> Tensor:
    """Inverted dropout: zero with probability ``rate`` and scale survivors by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, Tensor(keep))


def parameter_count(named: Dict[str, Tensor]) -> int:
    return int(sum(t.size for t in named.values()))


def max_width(banks: Sequence[ConvFilterBank]) -> int:
    return max(bank.width for bank in banks)
