"""
Linear versus full attention scaling benchmark.
"""

import io
import logging
import time
from collections.abc import Sequence
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from core.model.leanformer import full_attention, linear_attention_head, projection_matrices
from core.nn.tensor import Tensor, count_macs

logger = logging.getLogger(__name__)

DEFAULT_LENGTHS = (32, 64, 128, 256, 512)
BENCHMARK_COLUMNS = ["n", "k", "macs_linear", "macs_full", "seconds_linear", "seconds_full"]


@dataclass(frozen=True)
class BenchmarkRow:
    n: int
    k: int
    macs_linear: int
    macs_full: int
    seconds_linear: float
    seconds_full: float


def _timed_macs(fn, repeats: int) -> tuple[int, float]:
    with count_macs() as counter:
        fn()
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return counter.total, (time.perf_counter() - start) / repeats


def attention_scaling(
    lengths: Sequence[int] = DEFAULT_LENGTHS, k: int = 8, d: int = 64, repeats: int = 3, seed: int = 0
) -> list[BenchmarkRow]:
    """
    Count multiply-accumulates and time one head of each attention form per sequence length.

    Args:
        lengths: Sequence lengths n (each must be >= k)
        k: Projection rank of the linear head
        d: Query/key/value width
        repeats: Timed repetitions per measurement
        seed: Seed for inputs and projections
    """
    rng = np.random.default_rng(seed)
    rows = []
    for n in lengths:
        q, key, v = (Tensor(rng.normal(size=(n, d))) for _ in range(3))
        u, f = projection_matrices(n, k, 1, seed)
        macs_linear, seconds_linear = _timed_macs(lambda: linear_attention_head(q, key, v, u[0], f[0], d), repeats)
        macs_full, seconds_full = _timed_macs(lambda: full_attention(q, key, v, d), repeats)
        rows.append(BenchmarkRow(n, k, macs_linear, macs_full, seconds_linear, seconds_full))
        logger.info(f"[BENCH] n={n} k={k}: linear {macs_linear} MACs, full {macs_full} MACs")
    return rows


def benchmark_csv(rows: Sequence[BenchmarkRow]) -> str:
    buffer = io.StringIO()
    pd.DataFrame([asdict(r) for r in rows], columns=BENCHMARK_COLUMNS).to_csv(buffer, index=False, float_format="%.6g")
    return buffer.getvalue()
