"""
Multimodal decoder: maneuver probabilities and per-maneuver Gaussian trajectories.
"""

import math
from dataclasses import dataclass

import numpy as np

from core.data.types import LATERAL_ORDER, LONGITUDINAL_ORDER, NUM_MANEUVERS, Lateral, Longitudinal
from core.errors import ShapeError
from core.nn import tensor as T
from core.nn.layers import GroupNorm, Linear, LSTMCell, MLP, Module
from core.nn.tensor import Tensor

LOG_TWO_PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianStep:
    mu: tuple[float, float]
    sigma: tuple[float, float]
    rho: float


@dataclass(frozen=True)
class MixtureOutput:
    """
    Differentiable decoder output.

    ``log_weights`` is (B, M) with M = 9 (lateral-major) or 1 for a single-mode
    decoder; ``mu``/``sigma`` are (B, M, t_f, 2) and ``rho`` (B, M, t_f).
    """

    log_weights: Tensor
    mu: Tensor
    sigma: Tensor
    rho: Tensor

    @property
    def num_modes(self) -> int:
        return self.log_weights.shape[-1]

    def detach(self) -> "MixturePrediction":
        return MixturePrediction(
            weights=np.exp(self.log_weights.data),
            mu=self.mu.data.copy(),
            sigma=self.sigma.data.copy(),
            rho=self.rho.data.copy(),
        )


@dataclass(frozen=True)
class MixturePrediction:
    """Numpy view of a decoded mixture; same axes as MixtureOutput with probabilities instead of logs."""

    weights: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    rho: np.ndarray

    def __len__(self) -> int:
        return self.weights.shape[0]

    @property
    def num_modes(self) -> int:
        return self.weights.shape[-1]

    def maneuver_table(self, i: int) -> np.ndarray:
        """3x3 lateral x longitudinal probabilities of sample ``i`` (single-mode: all mass on keep/constant)."""
        if self.num_modes == NUM_MANEUVERS:
            return self.weights[i].reshape(len(LATERAL_ORDER), len(LONGITUDINAL_ORDER))
        table = np.zeros((len(LATERAL_ORDER), len(LONGITUDINAL_ORDER)))
        table[LATERAL_ORDER.index(Lateral.KEEP), LONGITUDINAL_ORDER.index(Longitudinal.CONSTANT)] = 1.0
        return table

    def steps(self, i: int, mode: int) -> list[GaussianStep]:
        return [
            GaussianStep(
                mu=(float(m[0]), float(m[1])),
                sigma=(float(s[0]), float(s[1])),
                rho=float(r),
            )
            for m, s, r in zip(self.mu[i, mode], self.sigma[i, mode], self.rho[i, mode], strict=True)
        ]

    def most_probable(self) -> np.ndarray:
        """(B, t_f, 2) μ-sequence of each sample's highest-weight mode."""
        best = np.argmax(self.weights, axis=-1)
        return self.mu[np.arange(len(self)), best]


class ManeuverHead(Module):
    """Independent lateral and longitudinal softmax heads; the joint is their product."""

    def __init__(self, d_in: int, rng: np.random.Generator):
        self.lateral = Linear(d_in, len(LATERAL_ORDER), rng)
        self.longitudinal = Linear(d_in, len(LONGITUDINAL_ORDER), rng)

    def forward(self, o_bar: Tensor) -> Tensor:
        """(B, d_in) -> (B, 9) joint log-probabilities, lateral-major."""
        lat = T.log_softmax(self.lateral(o_bar), axis=-1)
        lon = T.log_softmax(self.longitudinal(o_bar), axis=-1)
        b = o_bar.shape[0]
        joint = lat.reshape((b, len(LATERAL_ORDER), 1)) + lon.reshape((b, 1, len(LONGITUDINAL_ORDER)))
        return joint.reshape((b, NUM_MANEUVERS))


class RecurrentBlock(Module):
    """LSTM unrolled over t_f steps, then GroupNorm, MLP and ReLU."""

    def __init__(self, d_in: int, d_hidden: int, groups: int, rng: np.random.Generator):
        self.lstm = LSTMCell(d_in, d_hidden, rng)
        self.norm = GroupNorm(d_hidden, groups)
        self.mlp = MLP(d_hidden, d_hidden, d_hidden, rng)

    def forward(self, inputs: list[Tensor]) -> list[Tensor]:
        lead = inputs[0].shape[:-1]
        h = Tensor(np.zeros(lead + (self.lstm.d_hidden,)))
        c = Tensor(np.zeros(lead + (self.lstm.d_hidden,)))
        outputs = []
        for x in inputs:
            h, c = self.lstm(x, h, c)
            outputs.append(T.relu(self.mlp(self.norm(h))))
        return outputs


class TrajectoryHead(Module):
    """
    Gaussian trajectory per maneuver mode.

    The conditioning vector [o_bar || one-hot(mode)] is fed at every step of the
    first block; the second block consumes the first block's sequence. A final
    linear map gives five raw outputs per step: μ (2), log σ (2), atanh ρ (1).
    """

    def __init__(self, d_in: int, d_hidden: int, groups: int, t_f: int, num_modes: int, rng: np.random.Generator, residual_scale: float = 1.0):
        self.t_f = t_f
        self.num_modes = num_modes
        self.residual_scale = residual_scale
        self.first = RecurrentBlock(d_in + num_modes, d_hidden, groups, rng)
        self.second = RecurrentBlock(d_hidden, d_hidden, groups, rng)
        self.out = Linear(d_hidden, 5, rng)

    def forward(self, o_bar: Tensor, anchor: np.ndarray | None = None) -> tuple[Tensor, Tensor, Tensor]:
        """
        Args:
            o_bar: (B, d_in) composite vector
            anchor: Optional (B, t_f, 2) constant-velocity extrapolation added to μ

        Returns:
            (mu, sigma, rho) with shapes (B, M, t_f, 2), (B, M, t_f, 2), (B, M, t_f)
        """
        b, d = o_bar.shape
        m = self.num_modes
        repeated = o_bar.reshape((b, 1, d)) + Tensor(np.zeros((b, m, d)))
        one_hot = Tensor(np.broadcast_to(np.eye(m), (b, m, m)))
        condition = T.concat([repeated, one_hot], axis=-1)
        hidden = self.second(self.first([condition] * self.t_f))
        raw = self.out(T.stack(hidden, axis=2))
        mu = raw[..., 0:2] * self.residual_scale
        if anchor is not None:
            if anchor.shape != (b, self.t_f, 2):
                raise ShapeError("trajectory_head", anchor.shape, (b, self.t_f, 2))
            mu = mu + anchor[:, None, :, :]
        sigma = T.exp(raw[..., 2:4])
        rho = T.tanh(raw[..., 4])
        return mu, sigma, rho


def bivariate_log_density(points, mu, sigma, rho):
    """
    Log N(points | mu, diag(sigma) R(rho) diag(sigma)); works on Tensors and ndarrays.

    ``points`` and ``mu`` end in a 2-axis, ``rho`` lacks it.
    """
    dx = (points[..., 0] - mu[..., 0]) / sigma[..., 0]
    dy = (points[..., 1] - mu[..., 1]) / sigma[..., 1]
    one_minus = 1.0 - rho * rho
    z = dx * dx + dy * dy - 2.0 * rho * dx * dy
    if isinstance(one_minus, Tensor):
        log_terms = T.log(sigma[..., 0]) + T.log(sigma[..., 1]) + 0.5 * T.log(one_minus)
    else:
        log_terms = np.log(sigma[..., 0]) + np.log(sigma[..., 1]) + 0.5 * np.log(one_minus)
    return -LOG_TWO_PI - log_terms - z / (2.0 * one_minus)


def mixture_log_density_tensor(points: np.ndarray, output: MixtureOutput) -> Tensor:
    """
    Per-step log mixture density of ground-truth points.

    Args:
        points: (B, t_f, 2)
        output: Decoder output

    Returns:
        (B, t_f) log Σ_m w_m N(point_t | μ_mt, Σ_mt)
    """
    component = bivariate_log_density(points[:, None, :, :], output.mu, output.sigma, output.rho)
    b, m = output.log_weights.shape
    return T.logsumexp(component + output.log_weights.reshape((b, m, 1)), axis=1)


def mixture_log_density(point, pred: MixturePrediction, step: int, sample: int = 0) -> float:
    """
    log Σ_m w_m N(point | μ_m, Σ_m) at one step of one sample, via log-sum-exp.
    """
    t_f = pred.mu.shape[2]
    if not 0 <= step < t_f:
        raise IndexError(f"step {step} outside [0, {t_f})")
    point = np.asarray(point, dtype=np.float64)
    with np.errstate(divide="ignore"):
        log_w = np.log(pred.weights[sample])
    component = bivariate_log_density(point, pred.mu[sample, :, step], pred.sigma[sample, :, step], pred.rho[sample, :, step])
    terms = log_w + component
    top = np.max(terms)
    return float(top + np.log(np.sum(np.exp(terms - top))))
