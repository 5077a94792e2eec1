"""
Central-difference gradient checks for every differentiable building block.

Each case builds a small module (width 8) from a fixed seed and reduces its
output to a scalar with a fixed random probe, so every output entry contributes.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from core.config import TrainConfig
from core.model.decoder import ManeuverHead, MixtureOutput, TrajectoryHead
from core.model.encoders import BehaviorEncoder, PriorityEncoder, SafetyEncoder
from core.model.leanformer import AuxTokens, Leanformer, StreamFusion, linear_attention_head
from core.nn import tensor as T
from core.nn.gradcheck import grad_check
from core.nn.layers import GCNLayer, GLU, GRUCell, GroupNorm, LayerNorm, LSTMCell, Module, MultiHeadSelfAttention
from core.nn.tensor import Tensor
from core.training.losses import combined_loss

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-4
WIDTH = 8
MAX_ELEMENTS = 24

Case = tuple[Callable[[], Tensor], list[Tensor]]


@dataclass(frozen=True)
class GradCheckResult:
    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance


def _probe(fn: Callable[[], Tensor], rng: np.random.Generator) -> Callable[..., Tensor]:
    weights: dict[str, np.ndarray] = {}

    def scalar(*_inputs) -> Tensor:
        out = fn()
        if "w" not in weights:
            weights["w"] = rng.normal(size=out.shape) / math.sqrt(out.size)
        return (out * weights["w"]).sum()

    return scalar


def _tensor(rng: np.random.Generator, *shape: int) -> Tensor:
    return Tensor(rng.normal(size=shape))


def _mask(rng: np.random.Generator, *shape: int) -> np.ndarray:
    # target slot (agent 0) always present
    mask = rng.random(shape) > 0.25
    mask[:, 0] = True
    return mask


def _adjacency(rng: np.random.Generator, batch: int, frames: int, agents: int) -> np.ndarray:
    a = rng.random((batch, frames, agents, agents))
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    idx = np.arange(agents)
    a[..., idx, idx] = 0.0
    return a


def _with_params(module: Module, *inputs: Tensor) -> list[Tensor]:
    return [*inputs, *module.parameters()]


def _glu(rng):
    layer, x = GLU(WIDTH, WIDTH, rng), _tensor(rng, 3, WIDTH)
    return lambda: layer(x), _with_params(layer, x)


def _layer_norm(rng):
    layer, x = LayerNorm(WIDTH), _tensor(rng, 3, WIDTH)
    layer.gain.data[:] = rng.normal(size=WIDTH)
    return lambda: layer(x), _with_params(layer, x)


def _group_norm(rng):
    layer, x = GroupNorm(WIDTH, 2), _tensor(rng, 3, WIDTH)
    layer.gain.data[:] = rng.normal(size=WIDTH)
    return lambda: layer(x), _with_params(layer, x)


def _lstm_cell(rng):
    cell = LSTMCell(5, WIDTH, rng)
    x, h, c = _tensor(rng, 2, 5), _tensor(rng, 2, WIDTH), _tensor(rng, 2, WIDTH)

    def fn():
        h_next, c_next = cell(x, h, c)
        return T.concat([h_next, c_next], axis=-1)

    return fn, _with_params(cell, x, h, c)


def _gru_cell(rng):
    cell = GRUCell(5, WIDTH, rng)
    x, h = _tensor(rng, 2, 5), _tensor(rng, 2, WIDTH)
    return lambda: cell(x, h), _with_params(cell, x, h)


def _attention(rng):
    layer = MultiHeadSelfAttention(WIDTH, WIDTH, 2, rng, causal=True)
    x = _tensor(rng, 2, 4, WIDTH)
    key_mask = np.ones((2, 4), dtype=bool)
    key_mask[1, 2] = False
    return lambda: layer(x, key_mask=key_mask), _with_params(layer, x)


def _gcn(rng):
    layer = GCNLayer(WIDTH, WIDTH, rng)
    z = _tensor(rng, 2, 4, WIDTH)
    adjacency = _adjacency(rng, 1, 2, 4)[0]
    return lambda: layer(z, adjacency), _with_params(layer, z)


def _linear_attention(rng):
    q, k, v = _tensor(rng, 6, WIDTH), _tensor(rng, 6, WIDTH), _tensor(rng, 6, WIDTH)
    u, f = rng.normal(size=(6, 3)) / math.sqrt(3), rng.normal(size=(6, 3)) / math.sqrt(3)
    return lambda: linear_attention_head(q, k, v, u, f, WIDTH), [q, k, v]


def _fuse_streams(rng):
    fusion = StreamFusion(WIDTH, 4, rng)
    streams = [_tensor(rng, 1, 2, 3, WIDTH) for _ in range(3)]
    return lambda: fusion(*streams), _with_params(fusion, *streams)


def _aux_tokens(rng):
    tokens = AuxTokens(4, 12, rng)
    e_s, e_b, e_p = (_tensor(rng, 1, 2, 3, 4) for _ in range(3))
    mask = _mask(rng, 1, 2, 3)
    return lambda: T.concat(list(tokens(e_s, e_b, e_p, mask)), axis=-1), _with_params(tokens, e_s, e_b, e_p)


def _leanformer(rng):
    layer = Leanformer(12, WIDTH, 2, 3, 6, rng, projection_seed=11)
    o, l_q, l_k = _tensor(rng, 1, 6, 12), _tensor(rng, 1, 1, 12), _tensor(rng, 1, 1, 12)
    mask = np.array([[True, True, False, True, True, True]])
    return lambda: layer(o, l_q, l_k, mask), _with_params(layer, o, l_q, l_k)


def _safety_encoder(rng):
    encoder = SafetyEncoder(5, WIDTH, 2, rng)
    h = _tensor(rng, 1, 3, 4, 5)
    adjacency, mask = _adjacency(rng, 1, 4, 3), _mask(rng, 1, 3, 4)
    return lambda: encoder(h, adjacency, mask), _with_params(encoder, h)


def _behavior_encoder(rng):
    encoder = BehaviorEncoder(6, WIDTH, 2, rng)
    j, o_safety = _tensor(rng, 1, 3, 4, 6), _tensor(rng, 1, 3, 4, WIDTH)
    mask = _mask(rng, 1, 3, 4)
    return lambda: encoder(j, o_safety, mask), _with_params(encoder, j, o_safety)


def _priority_encoder(rng):
    encoder = PriorityEncoder(6, WIDTH, 2, rng)
    pooled, mask = _tensor(rng, 1, 3, 4, 6), _mask(rng, 1, 3, 4)
    return lambda: encoder(pooled, mask), _with_params(encoder, pooled)


def _maneuver_head(rng):
    head, o_bar = ManeuverHead(WIDTH, rng), _tensor(rng, 2, WIDTH)
    return lambda: head(o_bar), _with_params(head, o_bar)


def _trajectory_head(rng):
    head, o_bar = TrajectoryHead(WIDTH, WIDTH, 2, 3, 9, rng), _tensor(rng, 2, WIDTH)
    anchor = rng.normal(size=(2, 3, 2))

    def fn():
        mu, sigma, rho = head(o_bar, anchor)
        return T.concat([mu.reshape((2, -1)), sigma.reshape((2, -1)), rho.reshape((2, -1))], axis=-1)

    return fn, _with_params(head, o_bar)


def _combined_loss(rng):
    maneuver, trajectory = ManeuverHead(WIDTH, rng), TrajectoryHead(WIDTH, WIDTH, 2, 3, 9, rng)
    o_bar = _tensor(rng, 2, WIDTH)
    future, labels = rng.normal(size=(2, 3, 2)), np.array([4, 7])
    config = TrainConfig(learned_loss_weights=True)
    log_vars = _tensor(rng, 3)

    def fn():
        mu, sigma, rho = trajectory(o_bar)
        output = MixtureOutput(log_weights=maneuver(o_bar), mu=mu, sigma=sigma, rho=rho)
        return combined_loss(output, future, labels, config, log_vars).total.reshape((1,))

    return fn, [o_bar, log_vars, *maneuver.parameters(), *trajectory.parameters()]


def _primitives(rng):
    a, b = _tensor(rng, 3, 4), Tensor(rng.uniform(0.5, 2.0, size=(1, 4)))
    index = (np.array([0, 2, 2]), np.array([1, 3, 1]))

    def fn():
        parts = [
            T.softmax(a, axis=-1),
            T.log_softmax(a, axis=0),
            T.logsumexp(a, axis=-1, keepdims=True),
            a / b,
            T.pow_scalar(b, 1.5),
            T.exp(a) * T.log(b),
            T.tanh(a) @ T.transpose(T.stack([b, b], axis=0).reshape((2, 4)), (1, 0)),
            a[index].reshape((1, 3)),
            T.masked_fill(a, a.data > 1.0, 0.0),
        ]
        return T.concat([p.reshape((1, -1)) for p in parts], axis=-1)

    return fn, [a, b]


CASES: dict[str, Callable[[np.random.Generator], Case]] = {
    "primitives": _primitives,
    "glu": _glu,
    "layer_norm": _layer_norm,
    "group_norm": _group_norm,
    "lstm_cell": _lstm_cell,
    "gru_cell": _gru_cell,
    "multi_head_attention": _attention,
    "gcn": _gcn,
    "linear_attention_head": _linear_attention,
    "fuse_streams": _fuse_streams,
    "aux_tokens": _aux_tokens,
    "leanformer": _leanformer,
    "safety_encoder": _safety_encoder,
    "behavior_encoder": _behavior_encoder,
    "priority_encoder": _priority_encoder,
    "maneuver_head": _maneuver_head,
    "trajectory_head": _trajectory_head,
    "combined_loss": _combined_loss,
}


def run_case(name: str, seed: int = 0, tolerance: float = DEFAULT_TOLERANCE) -> GradCheckResult:
    rng = np.random.default_rng(seed)
    fn, inputs = CASES[name](rng)
    error = grad_check(_probe(fn, rng), inputs, max_elements_per_input=MAX_ELEMENTS, seed=seed)
    return GradCheckResult(name=name, max_error=error, tolerance=tolerance)


def run_gradcheck_suite(seed: int = 0, tolerance: float = DEFAULT_TOLERANCE, names=None) -> list[GradCheckResult]:
    """Run every registered case (or ``names``) and log each result."""
    results = []
    for name in names or CASES:
        result = run_case(name, seed, tolerance)
        tag = "[OK]" if result.passed else "[ERROR]"
        logger.info(f"{tag} gradcheck {name}: max relative error {result.max_error:.2e}")
        results.append(result)
    return results
