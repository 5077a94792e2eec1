"""
Feature-stream encoders: safety, behavior and priority.

Every stream is laid out (batch, agents, frames, d_model). Attention runs over
the frame axis of each agent and is causal, so a stream value at frame k only
depends on inputs up to frame k. Absent slots come out exactly zero.
"""

import numpy as np

from core.nn import tensor as T
from core.nn.layers import GCNLayer, GLU, LSTMCell, MLP, LayerNorm, Module, MultiHeadSelfAttention
from core.nn.tensor import Tensor


class OutputBlock(Module):
    """LN(MLP(GLU(x)))."""

    def __init__(self, d_model: int, rng: np.random.Generator):
        self.glu = GLU(d_model, d_model, rng)
        self.mlp = MLP(d_model, d_model, d_model, rng)
        self.norm = LayerNorm(d_model)

    def forward(self, x: Tensor) -> Tensor:
        return self.norm(self.mlp(self.glu(x)))


def _masked(x: Tensor, mask: np.ndarray) -> Tensor:
    return x * mask[..., None].astype(np.float64)


def run_lstm(cell: LSTMCell, inputs: Tensor) -> Tensor:
    """Unroll ``cell`` over axis -2 of (..., frames, d_in); returns (..., frames, d_hidden)."""
    lead = inputs.shape[:-2]
    h = Tensor(np.zeros(lead + (cell.d_hidden,)))
    c = Tensor(np.zeros(lead + (cell.d_hidden,)))
    outputs = []
    for k in range(inputs.shape[-2]):
        h, c = cell(inputs[..., k, :], h, c)
        outputs.append(h)
    return T.stack(outputs, axis=-2)


class SafetyEncoder(Module):
    """
    Embed the safety indices, run three graph convolutions per frame, then
    attend with queries from the third layer, keys from the second and values
    from the first.
    """

    def __init__(self, d_in: int, d_model: int, heads: int, rng: np.random.Generator, lambda_a: float = 1.0, causal: bool = True):
        self.embed = MLP(d_in, d_model, d_model, rng)
        self.gcn = [GCNLayer(d_model, d_model, rng, lambda_a) for _ in range(3)]
        self.query = MLP(d_model, d_model, d_model, rng)
        self.key = MLP(d_model, d_model, d_model, rng)
        self.value = MLP(d_model, d_model, d_model, rng)
        self.attention = MultiHeadSelfAttention(d_model, d_model, heads, rng, causal=causal)
        self.out = OutputBlock(d_model, rng)

    def forward(self, safety: Tensor, adjacency: np.ndarray, mask: np.ndarray) -> Tensor:
        """
        Args:
            safety: (B, A, T, 5) standardized indices
            adjacency: (B, T, A, A) normalized per-frame graph
            mask: (B, A, T) presence
        """
        z = T.swapaxes(self.embed(safety), 1, 2)
        layers = []
        for gcn in self.gcn:
            z = gcn(z, adjacency)
            layers.append(T.swapaxes(z, 1, 2))
        z1, z2, z3 = layers
        alpha = self.attention(self.query(z3), self.key(z2), self.value(z1), key_mask=mask)
        return _masked(self.out(alpha), mask)


class BehaviorEncoder(Module):
    """LSTM over [MLP(criteria), MLP(safety stream)], then attention and the output block."""

    def __init__(self, d_in: int, d_model: int, heads: int, rng: np.random.Generator, causal: bool = True):
        self.criteria = MLP(d_in, d_model, d_model, rng)
        self.safety = MLP(d_model, d_model, d_model, rng)
        self.lstm = LSTMCell(2 * d_model, d_model, rng)
        self.attention = MultiHeadSelfAttention(d_model, d_model, heads, rng, causal=causal)
        self.out = OutputBlock(d_model, rng)

    def forward(self, behavior: Tensor, o_safety: Tensor, mask: np.ndarray) -> Tensor:
        x = T.concat([self.criteria(behavior), self.safety(o_safety)], axis=-1)
        hidden = run_lstm(self.lstm, x)
        return _masked(self.out(self.attention(hidden, key_mask=mask)), mask)


class PriorityEncoder(Module):
    """LSTM over the pooled (self, pairwise) vectors, then attention and the output block."""

    def __init__(self, d_in: int, d_model: int, heads: int, rng: np.random.Generator, causal: bool = True):
        self.lstm = LSTMCell(d_in, d_model, rng)
        self.attention = MultiHeadSelfAttention(d_model, d_model, heads, rng, causal=causal)
        self.out = OutputBlock(d_model, rng)

    def forward(self, pooling: Tensor, mask: np.ndarray) -> Tensor:
        hidden = run_lstm(self.lstm, pooling)
        return _masked(self.out(self.attention(hidden, key_mask=mask)), mask)
