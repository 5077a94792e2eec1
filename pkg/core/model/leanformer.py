"""
Interaction module: stream fusion, auxiliary tokens and low-rank linear attention.

The (agents x frames) grid of each fused stream is flattened to a sequence of
length n. Each head scores its queries against k keys projected by a fixed
n x k matrix U and reads k values projected by a fixed F, so the work per head
is O(n k d) instead of O(n^2 d).
"""

import math

import numpy as np

from core.errors import ShapeError
from core.nn import tensor as T
from core.nn.layers import GRUCell, Linear, MLP, MASK_OFFSET, Module
from core.nn.tensor import Tensor


def projection_matrices(n: int, k: int, heads: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Fixed (heads, n, k) projections with i.i.d. N(0, 1/k) entries."""
    if k > n:
        raise ShapeError("projection rank exceeds sequence length", (k,), (n,))
    rng = np.random.default_rng(seed)
    scale = 1.0 / math.sqrt(k)
    return rng.normal(0.0, scale, size=(heads, n, k)), rng.normal(0.0, scale, size=(heads, n, k))


def linear_attention_head(q: Tensor, k: Tensor, v: Tensor, u: np.ndarray, f: np.ndarray, d_k: int) -> Tensor:
    """
    softmax(Q (U^T K)^T / sqrt(d_k)) (F^T V).

    Args:
        q, k, v: (..., n, d) queries, keys and values
        u, f: (n, k) fixed projections, or (..., n, k) matching the leading axes
        d_k: Key width used for the score scale

    Returns:
        (..., n, d) head output
    """
    n = q.shape[-2]
    if k.shape[-2] != n or v.shape[-2] != n:
        raise ShapeError("linear_attention", q.shape, k.shape, v.shape)
    if u.shape[-2] != n or f.shape[-2] != n or u.shape[-1] != f.shape[-1]:
        raise ShapeError("linear_attention", (n,), u.shape, f.shape)
    if u.shape[-1] > n:
        raise ShapeError("projection rank exceeds sequence length", u.shape, (n,))
    u_t = Tensor(np.swapaxes(u, -1, -2))
    f_t = Tensor(np.swapaxes(f, -1, -2))
    keys = u_t @ k
    values = f_t @ v
    context = T.softmax((q @ T.swapaxes(keys, -1, -2)) * (1.0 / math.sqrt(d_k)), axis=-1)
    return context @ values


def full_attention(q: Tensor, k: Tensor, v: Tensor, d_k: int, key_mask: np.ndarray | None = None) -> Tensor:
    """Quadratic reference: softmax(Q K^T / sqrt(d_k)) V."""
    scores = (q @ T.swapaxes(k, -1, -2)) * (1.0 / math.sqrt(d_k))
    if key_mask is not None:
        scores = scores + np.where(np.asarray(key_mask, dtype=bool), 0.0, MASK_OFFSET)[..., None, :]
    return T.softmax(scores, axis=-1) @ v


def _flatten_grid(x: Tensor) -> Tensor:
    # (B, A, T, d) -> (B, A * T, d)
    b, a, t, d = x.shape
    return x.reshape((b, a * t, d))


class StreamFusion(Module):
    """Per-stream MLPs whose outputs are concatenated on the feature axis."""

    def __init__(self, d_model: int, width: int, rng: np.random.Generator):
        self.width = width
        self.safety = MLP(d_model, width, width, rng)
        self.behavior = MLP(d_model, width, width, rng)
        self.priority = MLP(d_model, width, width, rng)

    def embed(self, o_safety: Tensor, o_behavior: Tensor, o_priority: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        if not (o_safety.shape == o_behavior.shape == o_priority.shape):
            raise ShapeError("fuse_streams", o_safety.shape, o_behavior.shape, o_priority.shape)
        return self.safety(o_safety), self.behavior(o_behavior), self.priority(o_priority)

    def forward(self, o_safety: Tensor, o_behavior: Tensor, o_priority: Tensor) -> Tensor:
        """Returns the fused sequence O, (B, A * T, 3 * width)."""
        return _flatten_grid(T.concat(list(self.embed(o_safety, o_behavior, o_priority)), axis=-1))


def _masked_agent_mean(x: Tensor, mask: np.ndarray) -> Tensor:
    # (B, A, T, d) -> (B, T, d), averaging present agents only
    weights = mask.astype(np.float64)
    counts = np.maximum(weights.sum(axis=1), 1.0)
    return (x * weights[..., None]).sum(axis=1) * (1.0 / counts)[..., None]


class AuxTokens(Module):
    """
    Query and key tokens from recurrent passes over per-frame agent-averaged
    stream embeddings: L_q reads safety || behavior, L_k reads safety || priority.
    """

    def __init__(self, width: int, d_token: int, rng: np.random.Generator):
        self.query = GRUCell(2 * width, d_token, rng)
        self.key = GRUCell(2 * width, d_token, rng)

    def forward(
        self, e_safety: Tensor, e_behavior: Tensor, e_priority: Tensor, mask: np.ndarray
    ) -> tuple[Tensor, Tensor]:
        """
        Args:
            e_safety, e_behavior, e_priority: (B, A, T, width) stream embeddings
            mask: (B, A, T)

        Returns:
            (L_q, L_k), each (B, 1, d_token)
        """
        for other in (e_behavior, e_priority):
            if other.shape != e_safety.shape:
                raise ShapeError("make_aux_tokens", e_safety.shape, other.shape)
        safety = _masked_agent_mean(e_safety, mask)
        x_q = T.concat([safety, _masked_agent_mean(e_behavior, mask)], axis=-1)
        x_k = T.concat([safety, _masked_agent_mean(e_priority, mask)], axis=-1)
        batch, frames = x_q.shape[0], x_q.shape[1]
        h_q = Tensor(np.zeros((batch, self.query.d_hidden)))
        h_k = Tensor(np.zeros((batch, self.key.d_hidden)))
        for t in range(frames):
            h_q = self.query(x_q[:, t, :], h_q)
            h_k = self.key(x_k[:, t, :], h_k)
        return h_q.reshape((batch, 1, -1)), h_k.reshape((batch, 1, -1))


class Leanformer(Module):
    """
    Multi-head low-rank attention with a skip connection.

    Q = W^Q(MLP(O + L_q)), K = W^K(MLP(O + L_k)), V = W^V(MLP(O)). Head outputs
    are summed, then [MLP(Q_shared) || MLP(V_shared)] is added, each half d_z / 2 wide.
    """

    def __init__(self, d_in: int, d_z: int, heads: int, rank: int, seq_len: int, rng: np.random.Generator, projection_seed: int):
        if d_z % 2:
            raise ShapeError("leanformer", (d_z,), (2,))
        self.d_z = d_z
        self.heads = heads
        self.rank = rank
        self.seq_len = seq_len
        self.query_mlp = MLP(d_in, d_z, d_z, rng)
        self.key_mlp = MLP(d_in, d_z, d_z, rng)
        self.value_mlp = MLP(d_in, d_z, d_z, rng)
        self.w_query = Linear(d_z, heads * d_z, rng, bias=False)
        self.w_key = Linear(d_z, heads * d_z, rng, bias=False)
        self.w_value = Linear(d_z, heads * d_z, rng, bias=False)
        self.skip_query = MLP(d_z, d_z, d_z // 2, rng)
        self.skip_value = MLP(d_z, d_z, d_z // 2, rng)
        # fixed, not registered as parameters
        self.u, self.f = projection_matrices(seq_len, rank, heads, projection_seed)

    def _heads(self, x: Tensor) -> Tensor:
        # (B, n, heads * d_z) -> (B, heads, n, d_z)
        b, n, _ = x.shape
        return T.swapaxes(x.reshape((b, n, self.heads, self.d_z)), 1, 2)

    def forward(self, o: Tensor, l_q: Tensor, l_k: Tensor, mask: np.ndarray | None = None) -> Tensor:
        """
        Args:
            o: (B, n, d_in) fused sequence
            l_q, l_k: (B, 1, d_in) tokens, broadcast over the sequence
            mask: Optional (B, n) presence; absent keys and values are zeroed before projection

        Returns:
            (B, n, d_z)
        """
        if o.shape[-2] != self.seq_len or l_q.shape[-1] != o.shape[-1] or l_k.shape[-1] != o.shape[-1]:
            raise ShapeError("leanformer", o.shape, l_q.shape, l_k.shape)
        q_shared = self.query_mlp(o + l_q)
        k_shared = self.key_mlp(o + l_k)
        v_shared = self.value_mlp(o)
        q = self._heads(self.w_query(q_shared))
        k = self._heads(self.w_key(k_shared))
        v = self._heads(self.w_value(v_shared))
        if mask is not None:
            keep = mask.astype(np.float64)[:, None, :, None]
            k = k * keep
            v = v * keep
        attended = linear_attention_head(q, k, v, self.u, self.f, self.d_z).sum(axis=1)
        skip = T.concat([self.skip_query(q_shared), self.skip_value(v_shared)], axis=-1)
        return attended + skip
