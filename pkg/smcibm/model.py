"""Pairwise Boltzmann machine parameters, local fields, conditionals and the exact oracle.

The model over spins x in {-1,+1}^n is

    P(x) ∝ exp( sum_i w_i x_i + sum_{{i,j} in E} w_ij x_i x_j ).
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Mapping, NamedTuple, Optional, Union

import numpy as np
from scipy.special import logsumexp

from .core import (
    DEFAULT_ENUMERATION_CAP,
    DEFAULT_REGION_CAP,
    RegionError,
    check_capacity,
    iter_spin_chunks,
    spin_states,
)
from .graph import Edge, PairwiseGraph, Region, boundary

logger = logging.getLogger(__name__)

# f(x_T): maps an array (..., |T|) of target spins to an array (...) of values.
TargetFunction = Callable[[np.ndarray], np.ndarray]


def spin_product(x_t: np.ndarray) -> np.ndarray:
    """Product of the target spins: x_i for one vertex, x_i x_j for a pair."""
    return np.prod(x_t, axis=-1, dtype=np.float64)


def constant_one(x_t: np.ndarray) -> np.ndarray:
    return np.ones(x_t.shape[:-1], dtype=np.float64)


@dataclass(frozen=True, eq=False)
class PbmParams:
    """Biases ``w_i`` and couplings ``w_ij`` on the edges of ``graph``.

    ``weights[e]`` belongs to ``graph.edges[e]``. Couplings of non-adjacent
    pairs are zero.
    """

    graph: PairwiseGraph
    bias: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        bias = np.array(self.bias, dtype=np.float64).reshape(-1)
        weights = np.array(self.weights, dtype=np.float64).reshape(-1)
        if bias.shape != (self.graph.n,):
            raise ValueError(f"Expected {self.graph.n} biases, got {bias.shape[0]}")
        if weights.shape != (len(self.graph.edges),):
            raise ValueError(f"Expected {len(self.graph.edges)} couplings, got {weights.shape[0]}")
        bias.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "bias", bias)
        object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:
        return self.graph.n

    @classmethod
    def zeros(cls, graph: PairwiseGraph) -> "PbmParams":
        return cls(graph, np.zeros(graph.n), np.zeros(len(graph.edges)))

    @classmethod
    def from_couplings(
        cls, graph: PairwiseGraph, bias, couplings: Mapping[Edge, float]
    ) -> "PbmParams":
        weights = np.zeros(len(graph.edges))
        for (i, j), w in couplings.items():
            weights[graph.edge_index(i, j)] = w
        return cls(graph, bias, weights)

    def coupling(self, i: int, j: int) -> float:
        if i == j or not self.graph.has_edge(i, j):
            return 0.0
        return float(self.weights[self.graph.edge_index(i, j)])

    def couplings(self) -> dict:
        return {edge: float(w) for edge, w in zip(self.graph.edges, self.weights)}

    @cached_property
    def coupling_matrix(self) -> np.ndarray:
        """Dense symmetric (n, n) coupling matrix with a zero diagonal."""
        matrix = np.zeros((self.n, self.n))
        if len(self.weights):
            i, j = self.graph.edge_array.T
            matrix[i, j] = self.weights
            matrix[j, i] = self.weights
        matrix.setflags(write=False)
        return matrix

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.bias, self.weights])

    @classmethod
    def from_vector(cls, graph: PairwiseGraph, vector: np.ndarray) -> "PbmParams":
        return cls(graph, vector[: graph.n], vector[graph.n:])

    def log_weight(self, x: np.ndarray) -> np.ndarray:
        """Unnormalised log-probability of one configuration or of each row of a batch."""
        x = np.asarray(x, dtype=np.float64)
        linear = x @ self.bias
        if not len(self.weights):
            return linear
        i, j = self.graph.edge_array.T
        return linear + (x[..., i] * x[..., j]) @ self.weights

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "bias": [float(b) for b in self.bias],
            "edges": [[i, j, float(w)] for (i, j), w in zip(self.graph.edges, self.weights)],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "PbmParams":
        try:
            n = int(data["n"])
            rows = [(int(e[0]), int(e[1]), float(e[2])) for e in data.get("edges", [])]
            bias = [float(b) for b in data["bias"]]
        except (KeyError, TypeError, IndexError, ValueError) as e:
            raise ValueError(f"Malformed model document: {e}")
        graph = PairwiseGraph(n, tuple((i, j) for i, j, _ in rows))
        return cls.from_couplings(graph, bias, {(i, j): w for i, j, w in rows})


@dataclass(frozen=True, eq=False)
class SampleSet:
    """M configurations, optionally carrying normalised importance weights."""

    points: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.int8)
        if points.ndim != 2:
            raise ValueError(f"Sample points must form a 2-D array, got shape {points.shape}")
        if points.size and not np.all(np.abs(points) == 1):
            raise ValueError("Sample points must contain only -1 and +1")
        object.__setattr__(self, "points", points)
        if self.weights is not None:
            weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
            if weights.shape[0] != points.shape[0]:
                raise ValueError("Need exactly one weight per sample point")
            if np.any(weights < 0) or not np.isfinite(weights).all():
                raise ValueError("Sample weights must be finite and non-negative")
            object.__setattr__(self, "weights", weights / weights.sum())

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[1]

    def average(self, values: np.ndarray) -> float:
        """Sample mean of per-point values, weighted when the set carries weights."""
        if len(self) == 0:
            raise ValueError("Cannot estimate from an empty sample set")
        return float(np.average(values, weights=self.weights))

    def replicate(self, times: int) -> "SampleSet":
        """``times`` copies of the set concatenated in order."""
        if times < 1:
            raise ValueError(f"Replication factor must be positive, got {times}")
        weights = None if self.weights is None else np.tile(self.weights, times)
        return SampleSet(np.tile(self.points, (times, 1)), weights)

    @classmethod
    def exact(cls, params: PbmParams, cap: int = DEFAULT_ENUMERATION_CAP) -> "SampleSet":
        """The whole state space weighted by its exact Gibbs probabilities."""
        check_capacity("exact sample set", params.n, cap)
        states = spin_states(params.n)
        log_w = params.log_weight(states)
        return cls(states, np.exp(log_w - logsumexp(log_w)))


# A sample set of training points
Dataset = SampleSet

SpinConfig = np.ndarray


def local_field(params: PbmParams, i: int, x: SpinConfig) -> float:
    """w_i + sum_{j in N1(i)} w_ij x_j."""
    row = params.coupling_matrix[i]
    return float(params.bias[i] + row @ np.asarray(x, dtype=np.float64))


def cavity_field(params: PbmParams, i: int, j: int, x: SpinConfig) -> float:
    """Local field of ``i`` with the contribution of ``j`` removed."""
    if i == j:
        raise RegionError("Cavity field needs two distinct vertices")
    return local_field(params, i, x) - params.coupling(i, j) * float(x[j])


def boundary_field(params: PbmParams, i: int, a: Region, x: SpinConfig) -> float:
    """Bias of ``i`` plus couplings to the boundary of ``a`` only."""
    if i not in a:
        raise RegionError(f"Vertex {i} is not a member of {a}")
    outside = boundary(params.graph, a).index()
    x = np.asarray(x, dtype=np.float64)
    return float(params.bias[i] + params.coupling_matrix[i, outside] @ x[outside])


class RegionDistribution(NamedTuple):
    """Explicit table over the assignments of a region: ``states[r]`` has probability ``probs[r]``."""

    region: Region
    states: np.ndarray
    probs: np.ndarray


def region_log_potentials(
    params: PbmParams, a: Region, boundary_points: np.ndarray, states: np.ndarray
) -> np.ndarray:
    """Unnormalised conditional log-probabilities of region states, one row per sample.

    ``boundary_points`` are full configurations (M, n); only the coordinates
    on the boundary of ``a`` are read. Returns shape (M, 2**|a|).
    """
    idx = a.index()
    outside = boundary(params.graph, a).index()
    couple = params.coupling_matrix
    fields = params.bias[idx] + boundary_points[:, outside].astype(np.float64) @ couple[np.ix_(outside, idx)]
    s = states.astype(np.float64)
    inner = 0.5 * np.sum((s @ couple[np.ix_(idx, idx)]) * s, axis=1)
    return fields @ s.T + inner


def conditional_on_region(
    params: PbmParams,
    a: Region,
    boundary_values: Union[SpinConfig, Mapping[int, int]],
    cap: int = DEFAULT_REGION_CAP,
) -> RegionDistribution:
    """P(x_a | x_boundary(a)) as a normalised table over all 2**|a| assignments."""
    check_capacity("conditional distribution", len(a), cap)
    x = np.zeros(params.n, dtype=np.int8)
    if isinstance(boundary_values, Mapping):
        for v, s in boundary_values.items():
            x[v] = s
    else:
        x[:] = np.asarray(boundary_values)
    states = spin_states(len(a))
    log_p = region_log_potentials(params, a, x[None, :], states)[0]
    probs = np.exp(log_p - logsumexp(log_p))
    return RegionDistribution(a, states, probs)


class ExactMoments(NamedTuple):
    means: np.ndarray
    pairs: np.ndarray
    log_z: float

    def covariances(self, graph: PairwiseGraph) -> np.ndarray:
        i, j = graph.edge_array.T
        return self.pairs - self.means[i] * self.means[j]


def _log_partition_chunks(params: PbmParams) -> float:
    return float(logsumexp([logsumexp(params.log_weight(chunk)) for chunk in iter_spin_chunks(params.n)]))


def log_partition(params: PbmParams, cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    check_capacity("partition function", params.n, cap)
    return _log_partition_chunks(params)


def exact_expectation(
    params: PbmParams,
    f: TargetFunction,
    t: Region,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> float:
    """Sum over all states of f(x_t) P(x), normalised in the log domain."""
    check_capacity("exact expectation", params.n, cap)
    log_z = _log_partition_chunks(params)
    idx = t.index()
    total = 0.0
    for chunk in iter_spin_chunks(params.n):
        probs = np.exp(params.log_weight(chunk) - log_z)
        total += float(probs @ f(chunk[:, idx]))
    return total


def exact_moments(params: PbmParams, cap: int = DEFAULT_ENUMERATION_CAP) -> ExactMoments:
    """All single-site means and edge pair moments from one enumeration."""
    check_capacity("exact moments", params.n, cap)
    log_weights = [params.log_weight(chunk) for chunk in iter_spin_chunks(params.n)]
    log_z = float(logsumexp(np.concatenate(log_weights)))
    i, j = params.graph.edge_array.T
    means = np.zeros(params.n)
    pairs = np.zeros(len(params.graph.edges))
    for chunk, log_w in zip(iter_spin_chunks(params.n), log_weights):
        probs = np.exp(log_w - log_z)
        means += probs @ chunk
        if len(pairs):
            pairs += probs @ (chunk[:, i] * chunk[:, j])
    return ExactMoments(means, pairs, log_z)
