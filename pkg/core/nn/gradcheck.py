"""
Central-difference verification of reverse-mode gradients.
"""

import logging
from collections.abc import Callable, Sequence

import numpy as np

from core.nn.tensor import Tape, Tensor

logger = logging.getLogger(__name__)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor), elementwise."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def grad_check(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    epsilon: float = 1e-5,
    max_elements_per_input: int | None = None,
    seed: int = 0,
    floor: float = 1e-8,
) -> float:
    """
    Compare tape gradients of a scalar function with central differences.

    Args:
        fn: Maps the inputs to a scalar Tensor
        inputs: Tensors to differentiate with respect to (requires_grad is set on them)
        epsilon: Perturbation size
        max_elements_per_input: Check only this many randomly chosen entries per input
        seed: Seed for choosing the checked entries
        floor: Gradient magnitude below which the error is measured absolutely

    Returns:
        Maximum relative error over all checked entries
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    for x in inputs:
        x.requires_grad = True
        x.grad = None

    with Tape() as tape:
        out = fn(*inputs)
        if out.size != 1:
            raise ValueError(f"grad_check needs a scalar output, got shape {out.shape}")
        tape.backward(out)
    analytic = [np.zeros_like(x.data) if x.grad is None else x.grad.copy() for x in inputs]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for x, grad in zip(inputs, analytic, strict=True):
        flat = x.data.reshape(-1)
        indices = np.arange(flat.size)
        if max_elements_per_input is not None and flat.size > max_elements_per_input:
            indices = np.sort(rng.choice(flat.size, size=max_elements_per_input, replace=False))
        for i in indices:
            original = flat[i]
            flat[i] = original + epsilon
            plus = float(fn(*inputs).data.sum())
            flat[i] = original - epsilon
            minus = float(fn(*inputs).data.sum())
            flat[i] = original
            numeric = (plus - minus) / (2.0 * epsilon)
            worst = max(worst, float(relative_error(np.asarray(grad.reshape(-1)[i]), np.asarray(numeric), floor)))
    logger.debug(f"[GRADCHECK] max relative error {worst:.3e}")
    return worst
