"""
Training losses and the horizon RMSE metric.
"""

from dataclasses import dataclass

import numpy as np

from core.config import TrainConfig
from core.errors import DataError, ShapeError
from core.model.decoder import MixtureOutput, mixture_log_density_tensor
from core.nn import tensor as T
from core.nn.tensor import Tensor


def rmse_metric(preds: np.ndarray, gts: np.ndarray, horizon: float, dt: float) -> float:
    """
    Root mean squared displacement at the single step ``horizon`` seconds ahead.

    Args:
        preds, gts: (N, t_f, 2) trajectories; step s holds time (s + 1) * dt
        horizon: Seconds; must be a whole number of steps within t_f
        dt: Step period in seconds
    """
    preds, gts = np.asarray(preds, dtype=np.float64), np.asarray(gts, dtype=np.float64)
    if preds.shape != gts.shape:
        raise ShapeError("rmse_metric", preds.shape, gts.shape)
    if preds.shape[0] == 0:
        raise DataError("rmse_metric needs at least one sample")
    steps = horizon / dt
    step = int(round(steps))
    if abs(steps - step) > 1e-6 or not 1 <= step <= preds.shape[1]:
        raise DataError(f"horizon {horizon}s is not a multiple of dt={dt} within {preds.shape[1]} steps")
    sq = np.sum((preds[:, step - 1] - gts[:, step - 1]) ** 2, axis=-1)
    return float(np.sqrt(np.mean(sq)))


def nll_loss(output: MixtureOutput, future: np.ndarray) -> Tensor:
    """-(1/t_f) Σ_t log p(gt_t), averaged over the batch."""
    return -mixture_log_density_tensor(future, output).mean()


def mode_msd(output: MixtureOutput, future: np.ndarray, labels: np.ndarray) -> Tensor:
    """Mean squared displacement of the ground-truth maneuver's μ-sequence (mode 0 for a single-mode decoder)."""
    b = output.mu.shape[0]
    modes = labels if output.num_modes > 1 else np.zeros(b, dtype=np.int64)
    chosen = output.mu[np.arange(b), modes]
    diff = chosen - future
    return (diff * diff).sum(axis=-1).mean()


@dataclass(frozen=True)
class LossBreakdown:
    total: Tensor
    nll: float
    msd: float
    maneuver: float

    @property
    def rmse(self) -> float:
        return float(np.sqrt(self.msd))


def combined_loss(
    output: MixtureOutput,
    future: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig,
    log_vars: Tensor | None = None,
) -> LossBreakdown:
    """
    w_nll * NLL + w_rmse * MSD + w_maneuver * CE.

    With ``log_vars`` (three learned log-variances) each weighted term L_i becomes
    exp(-s_i) L_i + s_i. A single-mode decoder has no maneuver term.
    """
    nll = nll_loss(output, future)
    msd = mode_msd(output, future, labels)
    terms = [(config.w_nll, nll), (config.w_rmse, msd)]
    ce_value = 0.0
    if output.num_modes > 1:
        ce = -output.log_weights[np.arange(len(labels)), labels].mean()
        ce_value = ce.item()
        terms.append((config.w_maneuver, ce))

    total = Tensor(0.0)
    for i, (weight, term) in enumerate(terms):
        if weight == 0:
            continue
        if log_vars is not None:
            s = log_vars[i]
            total = total + weight * (T.exp(-s) * term + s)
        else:
            total = total + weight * term
    return LossBreakdown(total=total, nll=nll.item(), msd=msd.item(), maneuver=ce_value)
