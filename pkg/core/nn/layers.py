"""
Layers built on the tensor core.

All layers take an explicit ``np.random.Generator`` so initialization is
reproducible from a single seed. Linear maps are drawn uniformly from
+-sqrt(6 / (fan_in + fan_out)); biases start at zero.
"""

import math

import numpy as np

from core.errors import ShapeError
from core.nn import tensor as T
from core.nn.tensor import Tensor

MASK_OFFSET = -1e9


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape if shape is not None else (fan_in, fan_out))


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


class Module:
    """Base class: parameters are discovered from attributes in definition order."""

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        found: list[tuple[str, Tensor]] = []
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, Tensor):
                if value.requires_grad:
                    found.append((path, value))
            elif isinstance(value, Module):
                found.extend(value.named_parameters(f"{path}."))
            elif isinstance(value, list | tuple):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        found.extend(item.named_parameters(f"{path}.{i}."))
                    elif isinstance(item, Tensor) and item.requires_grad:
                        found.append((f"{path}.{i}", item))
        return found

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        self.d_in = d_in
        self.d_out = d_out
        self.weight = parameter(glorot_uniform(rng, d_in, d_out))
        self.bias = parameter(np.zeros(d_out)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.d_in:
            raise ShapeError("linear", x.shape, self.weight.shape)
        lead = x.shape[:-1]
        flat = x.reshape((-1, self.d_in)) if x.ndim != 2 else x
        out = flat @ self.weight
        if self.bias is not None:
            out = out + self.bias
        return out.reshape(lead + (self.d_out,)) if x.ndim != 2 else out


class MLP(Module):
    """Linear -> ReLU -> Linear."""

    def __init__(self, d_in: int, d_hidden: int, d_out: int, rng: np.random.Generator):
        self.fc1 = Linear(d_in, d_hidden, rng)
        self.fc2 = Linear(d_hidden, d_out, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(T.relu(self.fc1(x)))


class GLU(Module):
    """(x W1 + b1) * sigmoid(x W2 + b2)."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        self.value = Linear(d_in, d_out, rng)
        self.gate = Linear(d_in, d_out, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.value(x) * T.sigmoid(self.gate(x))


def _standardize(x: Tensor, eps: float) -> Tensor:
    centered = x - x.mean(axis=-1, keepdims=True)
    variance = (centered * centered).mean(axis=-1, keepdims=True)
    return centered * T.pow_scalar(variance + eps, -0.5)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.eps = eps
        self.gain = parameter(np.ones(dim))
        self.bias = parameter(np.zeros(dim))

    def forward(self, x: Tensor) -> Tensor:
        return _standardize(x, self.eps) * self.gain + self.bias


class GroupNorm(Module):
    """Standardize each group of ``channels / groups`` consecutive features."""

    def __init__(self, channels: int, groups: int, eps: float = 1e-5):
        if channels % groups:
            raise ShapeError("group_norm", (channels,), (groups,))
        self.channels = channels
        self.groups = groups
        self.eps = eps
        self.gain = parameter(np.ones(channels))
        self.bias = parameter(np.zeros(channels))

    def forward(self, x: Tensor) -> Tensor:
        lead = x.shape[:-1]
        grouped = x.reshape(lead + (self.groups, self.channels // self.groups))
        normed = _standardize(grouped, self.eps).reshape(lead + (self.channels,))
        return normed * self.gain + self.bias


class LSTMCell(Module):
    """Input, forget, cell and output gates from one weight over [x, h]; forget bias starts at 1."""

    def __init__(self, d_in: int, d_hidden: int, rng: np.random.Generator):
        self.d_in = d_in
        self.d_hidden = d_hidden
        self.weight = parameter(glorot_uniform(rng, d_in + d_hidden, 4 * d_hidden))
        bias = np.zeros(4 * d_hidden)
        bias[d_hidden : 2 * d_hidden] = 1.0
        self.bias = parameter(bias)

    def forward(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        if x.shape[-1] != self.d_in or h.shape[-1] != self.d_hidden or c.shape != h.shape:
            raise ShapeError("lstm_cell", x.shape, h.shape, c.shape)
        z = T.concat([x, h], axis=-1) @ self.weight + self.bias
        n = self.d_hidden
        i = T.sigmoid(z[..., 0:n])
        f = T.sigmoid(z[..., n : 2 * n])
        g = T.tanh(z[..., 2 * n : 3 * n])
        o = T.sigmoid(z[..., 3 * n : 4 * n])
        c_next = f * c + i * g
        return o * T.tanh(c_next), c_next


class GRUCell(Module):
    def __init__(self, d_in: int, d_hidden: int, rng: np.random.Generator):
        self.d_in = d_in
        self.d_hidden = d_hidden
        self.gates = parameter(glorot_uniform(rng, d_in + d_hidden, 2 * d_hidden))
        self.gates_bias = parameter(np.zeros(2 * d_hidden))
        self.candidate = parameter(glorot_uniform(rng, d_in + d_hidden, d_hidden))
        self.candidate_bias = parameter(np.zeros(d_hidden))

    def forward(self, x: Tensor, h: Tensor) -> Tensor:
        if x.shape[-1] != self.d_in or h.shape[-1] != self.d_hidden:
            raise ShapeError("gru_cell", x.shape, h.shape)
        n = self.d_hidden
        zr = T.sigmoid(T.concat([x, h], axis=-1) @ self.gates + self.gates_bias)
        update, reset = zr[..., 0:n], zr[..., n : 2 * n]
        candidate = T.tanh(T.concat([x, reset * h], axis=-1) @ self.candidate + self.candidate_bias)
        return (1.0 - update) * h + update * candidate


def attention_bias(key_mask: np.ndarray | None, length: int, causal: bool) -> np.ndarray:
    """Additive score offsets: MASK_OFFSET for absent keys and (if causal) future keys."""
    bias = np.zeros((length, length))
    if causal:
        bias = np.where(np.triu(np.ones((length, length), dtype=bool), k=1), MASK_OFFSET, 0.0)
    if key_mask is not None:
        bias = bias + np.where(np.asarray(key_mask, dtype=bool), 0.0, MASK_OFFSET)[..., None, :]
    return bias


class MultiHeadSelfAttention(Module):
    """
    Self-attention whose heads are summed rather than concatenated.

    Each head projects queries and keys to ``d_model / heads`` and values to
    ``d_model``; the output is sum_h softmax(Q_h K_h^T / sqrt(d_s)) V_h.
    """

    def __init__(self, d_in: int, d_model: int, heads: int, rng: np.random.Generator, causal: bool = False):
        if d_model % heads:
            raise ShapeError("attention", (d_model,), (heads,))
        self.d_in = d_in
        self.d_model = d_model
        self.heads = heads
        self.d_s = d_model // heads
        self.causal = causal
        self.query = Linear(d_in, heads * self.d_s, rng, bias=False)
        self.key = Linear(d_in, heads * self.d_s, rng, bias=False)
        self.value = Linear(d_in, heads * d_model, rng, bias=False)

    def _split(self, x: Tensor, width: int) -> Tensor:
        # (..., n, heads * width) -> (..., heads, n, width)
        lead, n = x.shape[:-2], x.shape[-2]
        split = x.reshape(lead + (n, self.heads, width))
        return T.swapaxes(split, -2, -3)

    def forward(self, q_in: Tensor, k_in: Tensor | None = None, v_in: Tensor | None = None, key_mask=None) -> Tensor:
        """
        Args:
            q_in, k_in, v_in: (..., n, d_in); keys and values default to the queries
            key_mask: Optional (..., n) presence flags; absent keys get MASK_OFFSET
        """
        k_in = q_in if k_in is None else k_in
        v_in = q_in if v_in is None else v_in
        n = q_in.shape[-2]
        q = self._split(self.query(q_in), self.d_s)
        k = self._split(self.key(k_in), self.d_s)
        v = self._split(self.value(v_in), self.d_model)
        scores = (q @ T.swapaxes(k, -1, -2)) * (1.0 / math.sqrt(self.d_s))
        bias = attention_bias(key_mask, n, self.causal)
        if key_mask is not None:
            # (..., n, n) -> (..., 1, n, n) to broadcast over heads
            bias = np.expand_dims(bias, -3)
        weights = T.softmax(scores + bias, axis=-1)
        return (weights @ v).sum(axis=-3)


def normalized_adjacency(adjacency: np.ndarray, lambda_a: float = 1.0) -> np.ndarray:
    """D^-1/2 (A + lambda_a I) D^-1/2 over the last two axes."""
    n = adjacency.shape[-1]
    tilde = adjacency + lambda_a * np.eye(n)
    degree = tilde.sum(axis=-1)
    if np.any(degree <= 0):
        raise ShapeError("gcn", adjacency.shape)
    scale = 1.0 / np.sqrt(degree)
    return scale[..., :, None] * tilde * scale[..., None, :]


class GCNLayer(Module):
    """ReLU(D^-1/2 (A + lambda_a I) D^-1/2 Z W), no bias."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, lambda_a: float = 1.0):
        self.lambda_a = lambda_a
        self.weight = parameter(glorot_uniform(rng, d_in, d_out))

    def forward(self, z: Tensor, adjacency: np.ndarray) -> Tensor:
        if adjacency.shape[-1] != adjacency.shape[-2] or adjacency.shape[-1] != z.shape[-2]:
            raise ShapeError("gcn", z.shape, adjacency.shape)
        norm = Tensor(normalized_adjacency(adjacency, self.lambda_a))
        lead = z.shape[:-1]
        projected = (z.reshape((-1, z.shape[-1])) @ self.weight).reshape(lead + (self.weight.shape[1],))
        return T.relu(norm @ projected)
