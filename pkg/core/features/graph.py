"""
Behavior profiling on per-frame distance graphs.

Each frame links agents closer than ``r`` with an edge weighted by their
distance. Six centralities are tracked per agent (degree, closeness,
eigenvector, betweenness, power, Katz) and turned into behavior criteria:
their magnitude, rate and rate of change.
"""

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from core.config import FeatureConfig
from core.data.types import AgentState
from core.errors import DataError, NumericError, UsageError

logger = logging.getLogger(__name__)

CENTRALITY_CHANNELS = ("jd", "jc", "je", "jb", "jp", "jk")
CRITERIA_CHANNELS = tuple(f"{kind}_{c}" for kind in ("bmi", "bti", "bci") for c in CENTRALITY_CHANNELS)


@dataclass(frozen=True, eq=False)
class DGG:
    """One frame's distance graph. ``adjacency[i, j]`` is the distance when within ``r``, else 0."""

    adjacency: np.ndarray
    r: float
    agent_ids: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not self.agent_ids:
            object.__setattr__(self, "agent_ids", tuple(range(self.adjacency.shape[0])))

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def normalized(self) -> np.ndarray:
        """Adjacency divided by the radius, entries in (0, 1]."""
        return self.adjacency / self.r

    def index(self, agent: int) -> int:
        try:
            return self.agent_ids.index(agent)
        except ValueError:
            raise DataError(f"agent {agent} not in graph") from None

    def neighbors(self, agent: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[self.index(agent)] > 0)


def adjacency_from_positions(positions: np.ndarray, r: float) -> np.ndarray:
    """Distance-weighted adjacency for (n, 2) positions; coincident agents are an error."""
    if r <= 0:
        raise UsageError(f"graph radius must be positive, got {r}")
    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    off = ~np.eye(len(positions), dtype=bool)
    if np.any(dist[off] == 0):
        i, j = np.argwhere((dist == 0) & off)[0]
        raise DataError(f"coincident agents at index {i} and {j}")
    return np.where(off & (dist <= r), dist, 0.0)


def build_dgg(frame_states: Iterable[AgentState], r: float) -> DGG:
    """Distance graph over the agents of one frame."""
    states = list(frame_states)
    positions = np.array([s.position for s in states]).reshape(-1, 2)
    return DGG(adjacency_from_positions(positions, r), r, tuple(s.agent_id for s in states))


# --- Spectral helper ---


def _power_iteration(adjacency: np.ndarray, tol: float, max_iter: int) -> float:
    n = adjacency.shape[0]
    scale = float(adjacency.sum(axis=1).max()) if n else 0.0
    if scale == 0.0:
        return 0.0
    shift = 0.5 * scale
    shifted = adjacency + shift * np.eye(n)
    x = np.ones(n) / math.sqrt(n)
    residual = math.inf
    for _ in range(max_iter):
        y = shifted @ x
        x = y / np.linalg.norm(y)
        estimate = float(x @ shifted @ x)
        residual = float(np.linalg.norm(shifted @ x - estimate * x))
        if residual <= math.sqrt(tol) * max(1.0, estimate):
            return estimate - shift
    raise NumericError(f"power iteration did not converge in {max_iter} iterations (residual {residual:.3e})")


def largest_eigenvalue(adjacency: np.ndarray, tol: float = 1e-10, max_iter: int = 500) -> float:
    """
    Largest eigenvalue of a symmetric non-negative matrix by shifted power iteration.

    Each connected component is iterated on its own: within a component the top
    eigenvalue is simple, while separate components can tie or nearly tie. The
    shift (half the largest row sum) keeps the iteration from oscillating on
    bipartite graphs where -lambda_max is also an eigenvalue.

    Raises:
        NumericError: no convergence within ``max_iter`` iterations
    """
    if not adjacency.any():
        return 0.0
    components = nx.connected_components(nx.from_numpy_array((adjacency > 0).astype(np.int8)))
    best = 0.0
    for component in components:
        if len(component) < 2:
            continue
        nodes = np.array(sorted(component))
        best = max(best, _power_iteration(adjacency[np.ix_(nodes, nodes)], tol, max_iter))
    return best


# --- Centralities ---


def degree_centrality(dgg_series: Sequence[DGG], agent: int) -> np.ndarray:
    """Cumulative neighbor count over the series, starting from zero."""
    if not dgg_series:
        raise DataError("empty graph series")
    counts = [len(g.neighbors(agent)) if agent in g.agent_ids else 0 for g in dgg_series]
    return np.cumsum(np.asarray(counts, dtype=np.float64))


def closeness_centrality(dgg: DGG, agent: int) -> float:
    """(|N| - 1) / sum of neighbor distances; 0 with at most one neighbor."""
    row = dgg.adjacency[dgg.index(agent)]
    count = int(np.count_nonzero(row))
    if count <= 1:
        return 0.0
    return (count - 1) / float(row.sum())


def eigenvector_centrality(dgg: DGG, agent: int, tol: float = 1e-10, max_iter: int = 500) -> float:
    """Sum of neighbor distances over the adjacency's largest eigenvalue; 0 on edgeless graphs."""
    lam = largest_eigenvalue(dgg.adjacency, tol, max_iter)
    if lam == 0.0:
        return 0.0
    return float(dgg.adjacency[dgg.index(agent)].sum()) / lam


def _distance_graph(adjacency: np.ndarray) -> nx.Graph:
    graph = nx.Graph()
    graph.add_nodes_from(range(adjacency.shape[0]))
    rows, cols = np.nonzero(np.triu(adjacency, k=1))
    graph.add_weighted_edges_from((int(i), int(j), float(adjacency[i, j])) for i, j in zip(rows, cols, strict=True))
    return graph


def betweenness_all(adjacency: np.ndarray) -> np.ndarray:
    """Unnormalized weighted betweenness of every node (unordered pairs counted once)."""
    if adjacency.shape[0] < 3:
        return np.zeros(adjacency.shape[0])
    scores = nx.betweenness_centrality(_distance_graph(adjacency), weight="weight", normalized=False)
    return np.array([scores[i] for i in range(adjacency.shape[0])], dtype=np.float64)


def betweenness_centrality(dgg: DGG, agent: int) -> float:
    """Share of weighted shortest paths between other pairs that pass through ``agent``."""
    return float(betweenness_all(dgg.adjacency)[dgg.index(agent)])


def _matrix_powers(matrix: np.ndarray, k_max: int) -> Iterable[tuple[int, np.ndarray]]:
    power = np.eye(matrix.shape[0])
    for k in range(1, k_max + 1):
        power = power @ matrix
        yield k, power


def power_all(normalized: np.ndarray, k_max: int = 10) -> np.ndarray:
    """sum_k diag(A^k) / k! for k = 1..k_max."""
    if k_max < 1:
        raise UsageError(f"k_max must be >= 1, got {k_max}")
    total = np.zeros(normalized.shape[0])
    for k, power in _matrix_powers(normalized, k_max):
        total += np.diag(power) / math.factorial(k)
    return total


def power_centrality(dgg: DGG, agent: int, k_max: int = 10) -> float:
    """Weighted closed-walk count on the normalized adjacency, truncated at ``k_max``."""
    return float(power_all(dgg.normalized, k_max)[dgg.index(agent)])


def katz_all(
    normalized: np.ndarray,
    alpha: float | None = None,
    beta: float = 0.5,
    k_max: int = 10,
    alpha_scale: float = 0.9,
    tol: float = 1e-10,
    max_iter: int = 500,
) -> np.ndarray:
    """sum_k [alpha^k rowsum(A^k) + beta^k] for k = 1..k_max."""
    if k_max < 1:
        raise UsageError(f"k_max must be >= 1, got {k_max}")
    lam = largest_eigenvalue(normalized, tol, max_iter)
    if alpha is None:
        alpha = 0.5 if lam == 0.0 else alpha_scale / lam
    if alpha <= 0 or not 0 < beta < 1:
        raise UsageError(f"need alpha > 0 and beta in (0, 1), got alpha={alpha}, beta={beta}")
    if lam > 0 and alpha >= 1.0 / lam:
        raise UsageError(f"decay factor violates spectral bound: alpha={alpha} >= 1/lambda_max={1.0 / lam}")
    total = np.zeros(normalized.shape[0])
    for k, power in _matrix_powers(normalized, k_max):
        total += alpha**k * power.sum(axis=1) + beta**k
    return total


def katz_centrality(
    dgg: DGG, agent: int, alpha: float | None = None, beta: float = 0.5, k_max: int = 10
) -> float:
    """Katz score on the normalized adjacency with a per-step constant ``beta^k``."""
    return float(katz_all(dgg.normalized, alpha, beta, k_max)[dgg.index(agent)])


# --- Series and criteria ---


@dataclass(frozen=True, eq=False)
class CentralitySeries:
    """Centralities per agent and frame, (agents, frames, 6) in ``CENTRALITY_CHANNELS`` order."""

    values: np.ndarray
    agent_ids: tuple[int, ...]
    mask: np.ndarray

    def of(self, agent: int) -> np.ndarray:
        return self.values[self.agent_ids.index(agent)]


@dataclass(frozen=True, eq=False)
class BehaviorCriteria:
    """Magnitude, rate and rate-of-change of each centrality channel, each (..., frames, 6)."""

    bmi: np.ndarray
    bti: np.ndarray
    bci: np.ndarray

    def as_channels(self) -> np.ndarray:
        return np.concatenate([self.bmi, self.bti, self.bci], axis=-1)


def centralities_from_arrays(
    positions: np.ndarray,
    mask: np.ndarray,
    config: FeatureConfig | None = None,
    agent_ids: Sequence[int] | None = None,
) -> tuple[CentralitySeries, np.ndarray]:
    """
    All six centralities for dense (agents, frames, 2) positions.

    Returns:
        The series and the per-frame normalized adjacency (frames, agents, agents)
        with rows and columns of absent agents zeroed.
    """
    config = config or FeatureConfig()
    n_agents, n_frames = mask.shape
    values = np.zeros((n_agents, n_frames, len(CENTRALITY_CHANNELS)))
    normalized = np.zeros((n_frames, n_agents, n_agents))
    counts = np.zeros((n_agents, n_frames))

    for k in range(n_frames):
        present = np.flatnonzero(mask[:, k])
        if present.size == 0:
            continue
        adjacency = adjacency_from_positions(positions[present, k], config.graph_radius)
        scaled = adjacency / config.graph_radius
        normalized[k][np.ix_(present, present)] = scaled

        degree = np.count_nonzero(adjacency, axis=1)
        counts[present, k] = degree
        sums = adjacency.sum(axis=1)
        closeness = np.where(degree > 1, (degree - 1) / np.where(sums > 0, sums, 1.0), 0.0)
        lam = largest_eigenvalue(adjacency, config.power_iteration_tol, config.power_iteration_max_iter)
        eigen = sums / lam if lam > 0 else np.zeros(present.size)

        values[present, k, 1] = closeness
        values[present, k, 2] = eigen
        values[present, k, 3] = betweenness_all(adjacency)
        values[present, k, 4] = power_all(scaled, config.k_max)
        values[present, k, 5] = katz_all(
            scaled,
            beta=config.katz_beta,
            k_max=config.k_max,
            alpha_scale=config.katz_alpha_scale,
            tol=config.power_iteration_tol,
            max_iter=config.power_iteration_max_iter,
        )
    values[..., 0] = np.cumsum(counts, axis=1)
    values[~mask] = 0.0

    ids = tuple(agent_ids) if agent_ids is not None else tuple(range(n_agents))
    return CentralitySeries(values, ids, mask.copy()), normalized


def criteria_from_values(values: np.ndarray, dt: float, mask: np.ndarray | None = None) -> BehaviorCriteria:
    """
    Backward differences along the frame axis (second-to-last).

    The rate is 0 at the first frame and the rate-of-change is 0 at the first two.
    With a mask, a difference that would span an absent frame is 0.
    """
    if values.shape[-2] < 1:
        raise DataError("centrality series is empty")
    bmi = np.abs(values)
    bti = np.zeros_like(values)
    bci = np.zeros_like(values)
    bti[..., 1:, :] = np.abs(np.diff(values, axis=-2)) / dt
    if mask is not None:
        valid = np.zeros_like(mask)
        valid[..., 1:] = mask[..., 1:] & mask[..., :-1]
        bti = np.where(valid[..., None], bti, 0.0)
    bci[..., 2:, :] = np.abs(np.diff(bti[..., 1:, :], axis=-2)) / dt
    if mask is not None:
        valid2 = np.zeros_like(mask)
        valid2[..., 2:] = valid[..., 2:] & valid[..., 1:-1]
        bci = np.where(valid2[..., None], bci, 0.0)
    return BehaviorCriteria(bmi=bmi, bti=bti, bci=bci)


def behavior_criteria(centrality_series: CentralitySeries, agent: int, dt: float) -> BehaviorCriteria:
    """Behavior criteria of one agent, each (frames, 6)."""
    row = centrality_series.agent_ids.index(agent)
    return criteria_from_values(centrality_series.values[row], dt, centrality_series.mask[row])


def behavior_from_arrays(
    positions: np.ndarray,
    mask: np.ndarray,
    dt: float,
    config: FeatureConfig | None = None,
    agent_ids: Sequence[int] | None = None,
) -> tuple[CentralitySeries, BehaviorCriteria, np.ndarray]:
    """Centralities, criteria and normalized adjacency for dense arrays."""
    series, normalized = centralities_from_arrays(positions, mask, config, agent_ids)
    criteria = criteria_from_values(series.values, dt, mask)
    return series, criteria, normalized
