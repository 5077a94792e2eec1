"""
The assembled trajectory predictor.
"""

import logging

import numpy as np

from core.config import ExperimentConfig
from core.data.types import NUM_MANEUVERS
from core.features.graph import CRITERIA_CHANNELS
from core.features.pipeline import FeatureBatch
from core.features.pooling import POOLING_CHANNELS
from core.features.safety import SAFETY_CHANNELS
from core.model.decoder import ManeuverHead, MixtureOutput, MixturePrediction, TrajectoryHead
from core.model.encoders import BehaviorEncoder, PriorityEncoder, SafetyEncoder
from core.model.leanformer import AuxTokens, Leanformer, StreamFusion
from core.nn import tensor as T
from core.nn.layers import Linear, Module
from core.nn.tensor import Tensor

logger = logging.getLogger(__name__)


class TrajectoryPredictor(Module):
    """
    Safety, behavior and priority encoders, the interaction module and the
    multimodal decoder, wired according to the ablation switches in ``config.train``.

    Disabled streams are replaced by zeros; their encoders keep their parameters
    so every variant shares one checkpoint layout per configuration.
    """

    def __init__(self, config: ExperimentConfig, seed: int | None = None):
        m, flags = config.model, config.train
        self.config = config
        self.agents = config.windows.n_max + 1
        self.frames = config.windows.t_h + 1
        self.t_f = config.windows.t_f
        self.num_modes = NUM_MANEUVERS if flags.use_multimodal else 1
        rng = np.random.default_rng(flags.seed if seed is None else seed)

        self.safety_encoder = SafetyEncoder(
            len(SAFETY_CHANNELS), m.d_model, m.heads, rng, m.lambda_a, m.causal_attention
        )
        self.behavior_encoder = BehaviorEncoder(len(CRITERIA_CHANNELS), m.d_model, m.heads, rng, m.causal_attention)
        self.priority_encoder = PriorityEncoder(len(POOLING_CHANNELS), m.d_model, m.heads, rng, m.causal_attention)

        if flags.use_interaction:
            d_fused = 3 * m.stream_width
            self.fusion = StreamFusion(m.d_model, m.stream_width, rng)
            self.tokens = AuxTokens(m.stream_width, d_fused, rng)
            self.leanformer = Leanformer(
                d_fused, m.d_z, m.leanformer_heads, m.rank, self.agents * self.frames, rng, m.projection_seed
            )
        else:
            self.bypass = Linear(m.d_model, m.d_z, rng)

        if flags.use_multimodal:
            self.maneuver_head = ManeuverHead(2 * m.d_z, rng)
        self.trajectory_head = TrajectoryHead(
            2 * m.d_z, m.decoder_hidden, m.group_norm_groups, self.t_f, self.num_modes, rng, m.residual_scale
        )

    def _zeros(self, batch: FeatureBatch) -> Tensor:
        return Tensor(np.zeros(batch.mask.shape + (self.config.model.d_model,)))

    def encode(self, batch: FeatureBatch) -> tuple[Tensor, Tensor, Tensor]:
        """Feature streams (B, A, T, d_model): safety, behavior, priority."""
        flags = self.config.train
        mask = batch.mask
        if flags.use_psam:
            o_safety = self.safety_encoder(Tensor(batch.safety), batch.adjacency, mask)
        else:
            o_safety = self._zeros(batch)
        if flags.use_dbp:
            o_behavior = self.behavior_encoder(Tensor(batch.behavior), o_safety, mask)
        else:
            o_behavior = self._zeros(batch)
        o_priority = self.priority_encoder(Tensor(batch.pooling), mask)
        return o_safety, o_behavior, o_priority

    def interact(self, o_safety: Tensor, o_behavior: Tensor, o_priority: Tensor, mask: np.ndarray) -> Tensor:
        """Per-slot interaction vectors (B, A, T, d_z), absent slots zeroed."""
        b, a, t = mask.shape
        if self.config.train.use_interaction:
            e_safety, e_behavior, e_priority = self.fusion.embed(o_safety, o_behavior, o_priority)
            fused = T.concat([e_safety, e_behavior, e_priority], axis=-1).reshape((b, a * t, -1))
            l_q, l_k = self.tokens(e_safety, e_behavior, e_priority, mask)
            z = self.leanformer(fused, l_q, l_k, mask.reshape(b, a * t)).reshape((b, a, t, -1))
        else:
            z = self.bypass(o_safety + o_behavior + o_priority)
        return z * mask[..., None].astype(np.float64)

    @staticmethod
    def readout(z: Tensor, mask: np.ndarray) -> Tensor:
        """Target slot at the reference frame concatenated with the mean over present slots, (B, 2 d_z)."""
        counts = np.maximum(mask.sum(axis=(1, 2)), 1).astype(np.float64)
        pooled = z.sum(axis=(1, 2)) * (1.0 / counts)[:, None]
        return T.concat([z[:, 0, -1, :], pooled], axis=-1)

    def forward(self, batch: FeatureBatch) -> MixtureOutput:
        o_safety, o_behavior, o_priority = self.encode(batch)
        z = self.interact(o_safety, o_behavior, o_priority, batch.mask)
        o_bar = self.readout(z, batch.mask)
        if self.config.train.use_multimodal:
            log_weights = self.maneuver_head(o_bar)
        else:
            log_weights = Tensor(np.zeros((len(batch), 1)))
        mu, sigma, rho = self.trajectory_head(o_bar, batch.anchor)
        return MixtureOutput(log_weights=log_weights, mu=mu, sigma=sigma, rho=rho)

    def predict(self, batch: FeatureBatch) -> MixturePrediction:
        """Forward pass outside any tape."""
        return self.forward(batch).detach()


def count_parameters(model: Module) -> int:
    return int(sum(p.size for p in model.parameters()))
