"""Spatial Monte Carlo estimators of expectations on a pairwise Boltzmann machine.

Every estimator replaces the expectation over a sum region A by its exact
conditional value given the boundary of A, and averages over sample points
only on that boundary. The closed forms below are the single-site and
edge-product cases of that rule for A = T (first order) and A = T ∪ I1(T)
(semi-second order).
"""
import logging
import re
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from .core import (
    DEFAULT_REGION_CAP,
    RegionError,
    check_capacity,
    encode_rows,
    spin_states,
)
from .graph import (
    Edge,
    PairwiseGraph,
    Region,
    boundary,
    closed_region_k,
    greedy_independent_set,
    neighborhood_k,
)
from .model import (
    PbmParams,
    SampleSet,
    TargetFunction,
    exact_expectation,
    exact_moments,
    region_log_potentials,
    spin_product,
)

logger = logging.getLogger(__name__)

ATANH_BOUND = 1.0 - 1e-15

# upper bound on (points x region states) evaluated at once
_CHUNK_CELLS = 2 ** 22


class EstimatorKind(str, Enum):
    MCI = "mci"
    SMCI_K = "smci-k"
    S2_SMCI = "smci-s2"
    GSMCI = "gsmci"
    EXACT = "exact"


_SMCI_K_NAME = re.compile(r"^smci(\d+)$")


def resolve_method(name: str) -> Tuple[EstimatorKind, Optional[int]]:
    """Map a method name (``mci``, ``smci1``, ``smci2``, ``smci-s2``, ``gsmci``, ``exact``) to its kind."""
    key = name.strip().lower()
    if key in ("smci-s2", "s2", "s2-smci"):
        return EstimatorKind.S2_SMCI, None
    match = _SMCI_K_NAME.match(key)
    if match:
        k = int(match.group(1))
        if k < 1:
            raise ValueError(f"SMCI order must be positive, got {k}")
        return EstimatorKind.SMCI_K, k
    try:
        return EstimatorKind(key), None
    except ValueError:
        raise ValueError(
            f"Unknown estimator {name!r}. Supported: mci, smci<k> (e.g. smci1, smci2), smci-s2, gsmci, exact."
        )


@dataclass(frozen=True)
class EstimatorSpec:
    """Which estimator evaluates the expectation over which target region."""

    kind: EstimatorKind
    target: Region
    k: Optional[int] = None
    sum_region: Optional[Region] = None

    def __post_init__(self):
        if self.kind is EstimatorKind.SMCI_K and (self.k is None or self.k < 1):
            raise ValueError(f"SMCI order k must be a positive integer, got {self.k}")
        if self.kind is EstimatorKind.GSMCI:
            if self.sum_region is None:
                raise RegionError("GSMCI needs an explicit sum region")
            if not self.target.issubset(self.sum_region):
                raise RegionError(f"Target {self.target} is not inside sum region {self.sum_region}")

    @classmethod
    def parse(cls, method: str, target: Region, region: Optional[Region] = None) -> "EstimatorSpec":
        kind, k = resolve_method(method)
        return cls(kind, target, k=k, sum_region=region)

    @property
    def label(self) -> str:
        if self.kind is EstimatorKind.SMCI_K:
            return f"smci{self.k}"
        return self.kind.value


@dataclass(frozen=True)
class MomentEstimate:
    value: float
    method: EstimatorSpec
    sample_count: int


def _clamped_atanh(x: np.ndarray) -> np.ndarray:
    hits = int(np.count_nonzero(np.abs(x) > ATANH_BOUND))
    if hits:
        logger.debug("atanh argument clamped at %d of %d entries", hits, np.size(x))
    return np.arctanh(np.clip(x, -ATANH_BOUND, ATANH_BOUND))


def _require_samples(s: Optional[SampleSet]) -> None:
    if s is None or len(s) == 0:
        raise ValueError("Cannot estimate from an empty sample set")


def _average(s: SampleSet, values: np.ndarray) -> np.ndarray:
    return np.average(values, axis=0, weights=s.weights)


def mci_estimate(f: TargetFunction, t: Region, s: SampleSet) -> MomentEstimate:
    """Plain sample average of f over the target coordinates."""
    _require_samples(s)
    values = f(s.points[:, t.index()])
    return MomentEstimate(s.average(values), EstimatorSpec(EstimatorKind.MCI, t), len(s))


def conditional_expectations(
    params: PbmParams,
    f: TargetFunction,
    t: Region,
    a: Region,
    points: np.ndarray,
    cap: int = DEFAULT_REGION_CAP,
) -> np.ndarray:
    """E[f(x_t) | x_boundary(a)] for every row of ``points``."""
    if not t.issubset(a):
        raise RegionError(f"Target {t} is not inside sum region {a}")
    check_capacity("sum region", len(a), cap)
    states = spin_states(len(a))
    position = {v: pos for pos, v in enumerate(a)}
    values = np.asarray(f(states[:, [position[v] for v in t]]), dtype=np.float64)
    rows = max(1, _CHUNK_CELLS // len(states))
    out = np.empty(points.shape[0])
    for start in range(0, points.shape[0], rows):
        log_p = region_log_potentials(params, a, points[start:start + rows], states)
        probs = np.exp(log_p - logsumexp(log_p, axis=1, keepdims=True))
        out[start:start + rows] = probs @ values
    return out


def gsmci_estimate(
    params: PbmParams,
    f: TargetFunction,
    t: Region,
    a: Region,
    s: SampleSet,
    cap: int = DEFAULT_REGION_CAP,
) -> MomentEstimate:
    """Average over sample points of the exact conditional expectation over sum region ``a``."""
    _require_samples(s)
    spec = EstimatorSpec(EstimatorKind.GSMCI, t, sum_region=a)
    rho = conditional_expectations(params, f, t, a, s.points, cap)
    return MomentEstimate(s.average(rho), spec, len(s))


def ksmci_estimate(
    params: PbmParams,
    f: TargetFunction,
    t: Region,
    k: int,
    s: SampleSet,
    cap: int = DEFAULT_REGION_CAP,
) -> MomentEstimate:
    """k-th order SMCI: the sum region covers neighbours up to distance k-1."""
    spec = EstimatorSpec(EstimatorKind.SMCI_K, t, k=k)
    a = closed_region_k(params.graph, t, k - 1)
    estimate = gsmci_estimate(params, f, t, a, s, cap)
    return MomentEstimate(estimate.value, spec, estimate.sample_count)


def run_estimator(
    params: PbmParams,
    spec: EstimatorSpec,
    s: Optional[SampleSet],
    cap: int = DEFAULT_REGION_CAP,
) -> MomentEstimate:
    """Evaluate the spin-product expectation of ``spec.target`` with the estimator ``spec`` names.

    One- and two-vertex targets use the closed forms where the estimator has
    one; larger targets fall back to explicit enumeration of the sum region.
    """
    t = spec.target
    size = len(t)
    if spec.kind is EstimatorKind.EXACT:
        return MomentEstimate(exact_expectation(params, spin_product, t), spec, 0)
    if spec.kind is EstimatorKind.MCI:
        return mci_estimate(spin_product, t, s)
    if spec.kind is EstimatorKind.GSMCI:
        return gsmci_estimate(params, spin_product, t, spec.sum_region, s, cap)
    if spec.kind is EstimatorKind.S2_SMCI:
        a = spec.sum_region or s2_regions(params.graph, params, t)
        if size == 1:
            return s2_mean(params, t.members[0], a, s)
        if size == 2 and params.graph.has_edge(*t.members):
            return s2_pair(params, t.members[0], t.members[1], a, s)
        return gsmci_estimate(params, spin_product, t, a, s, cap)
    if spec.k == 1 and size == 1:
        return smci1_mean(params, t.members[0], s)
    if spec.k == 1 and size == 2 and params.graph.has_edge(*t.members):
        return smci1_pair(params, t.members[0], t.members[1], s)
    return ksmci_estimate(params, spin_product, t, spec.k, s, cap)


def _fields(params: PbmParams, points: np.ndarray) -> np.ndarray:
    return params.bias + points.astype(np.float64) @ params.coupling_matrix


def _smci1_pair_values(params: PbmParams, i: int, j: int, x: np.ndarray, fields: np.ndarray) -> np.ndarray:
    w = params.coupling(i, j)
    g_ij = fields[:, i] - w * x[:, j]
    g_ji = fields[:, j] - w * x[:, i]
    return np.tanh(_clamped_atanh(np.tanh(g_ij) * np.tanh(g_ji)) + w)


def smci1_mean(params: PbmParams, i: int, s: SampleSet) -> MomentEstimate:
    """First-order SMCI estimate of <x_i>: the mean of tanh of the local field."""
    _require_samples(s)
    fields = params.bias[i] + s.points.astype(np.float64) @ params.coupling_matrix[:, i]
    spec = EstimatorSpec(EstimatorKind.SMCI_K, Region.of(i), k=1)
    return MomentEstimate(s.average(np.tanh(fields)), spec, len(s))


def smci1_pair(params: PbmParams, i: int, j: int, s: SampleSet) -> MomentEstimate:
    """First-order SMCI estimate of <x_i x_j> for an edge, built from the two cavity fields."""
    _require_samples(s)
    if not params.graph.has_edge(i, j):
        raise RegionError(f"{{{i}, {j}}} is not an edge of the graph")
    x = s.points.astype(np.float64)
    fields = _fields(params, s.points)
    spec = EstimatorSpec(EstimatorKind.SMCI_K, Region.of(i, j), k=1)
    return MomentEstimate(s.average(_smci1_pair_values(params, i, j, x, fields)), spec, len(s))


def independent_neighbors(params: PbmParams, t: Region) -> Region:
    """I1(t): a greedy independent subset of the first neighbours of ``t``.

    Degree ties are broken towards the neighbour with the largest total
    absolute coupling into ``t``.
    """
    g = params.graph
    shell = neighborhood_k(g, t, 1)
    strength = {j: sum(abs(params.coupling(i, j)) for i in t if g.has_edge(i, j)) for j in shell}
    return greedy_independent_set(g, shell, strength)


def s2_regions(g: PairwiseGraph, params: PbmParams, t: Region) -> Region:
    """Sum region of the semi-second-order estimator: t together with I1(t)."""
    if not len(t):
        raise ValueError("The target region must not be empty")
    if params.graph != g:
        raise ValueError("Parameters belong to a different graph")
    return t | independent_neighbors(params, t)


def _check_s2_region(params: PbmParams, t: Region, a: Region) -> Region:
    if not t.issubset(a):
        raise RegionError(f"Target {t} is not inside sum region {a}")
    rest = a - t
    if not params.graph.is_independent(rest):
        raise RegionError(f"Sum region members outside the target {rest} must be mutually non-adjacent")
    return rest


def _boundary_fields(params: PbmParams, a: Region, points: np.ndarray) -> Dict[int, np.ndarray]:
    idx = a.index()
    outside = boundary(params.graph, a).index()
    couple = params.coupling_matrix
    beta = params.bias[idx] + points[:, outside].astype(np.float64) @ couple[np.ix_(outside, idx)]
    return {v: beta[:, pos] for pos, v in enumerate(a)}


def _s2_mean_values(params: PbmParams, i: int, a: Region, points: np.ndarray) -> np.ndarray:
    rest = _check_s2_region(params, Region.of(i), a)
    beta = _boundary_fields(params, a, points)
    xi = beta[i].copy()
    for j in rest:
        xi += _clamped_atanh(np.tanh(beta[j]) * np.tanh(params.coupling(i, j)))
    return np.tanh(xi)


def _log_ratio(u_plus: np.ndarray, u_minus: np.ndarray, v: np.ndarray) -> np.ndarray:
    """ln[(1 - tanh^2(u+) tanh^2 v) / (1 - tanh^2(u-) tanh^2 v)]."""
    tv = np.tanh(v) ** 2
    return np.log1p(-np.tanh(u_plus) ** 2 * tv) - np.log1p(-np.tanh(u_minus) ** 2 * tv)


def _s2_pair_values(params: PbmParams, i: int, j: int, a: Region, points: np.ndarray) -> np.ndarray:
    if not params.graph.has_edge(i, j):
        raise RegionError(f"{{{i}, {j}}} is not an edge of the graph")
    rest = _check_s2_region(params, Region.of(i, j), a)
    beta = _boundary_fields(params, a, points)
    w_ij = params.coupling(i, j)
    xi_ij = beta[i].copy()
    xi_ji = beta[j].copy()
    omega = np.full(points.shape[0], w_ij)
    for k in rest:
        w_ik = params.coupling(i, k)
        w_jk = params.coupling(j, k)
        b_k = beta[k]
        t_k = np.tanh(b_k)
        xi_ij += _clamped_atanh(t_k * np.tanh(w_ik)) + 0.25 * _log_ratio(b_k + w_ik, b_k - w_ik, w_jk)
        xi_ji += _clamped_atanh(t_k * np.tanh(w_jk)) + 0.25 * _log_ratio(b_k + w_jk, b_k - w_jk, w_ik)
        omega += _clamped_atanh(np.full_like(b_k, np.tanh(w_ik) * np.tanh(w_jk)))
        omega += 0.25 * _log_ratio(np.full_like(b_k, w_ik + w_jk), np.full_like(b_k, w_ik - w_jk), b_k)
    return np.tanh(_clamped_atanh(np.tanh(xi_ij) * np.tanh(xi_ji)) + omega)


def s2_mean(params: PbmParams, i: int, a: Region, s: SampleSet) -> MomentEstimate:
    """Semi-second-order estimate of <x_i> with the independent neighbours summed analytically."""
    _require_samples(s)
    spec = EstimatorSpec(EstimatorKind.S2_SMCI, Region.of(i), sum_region=a)
    return MomentEstimate(s.average(_s2_mean_values(params, i, a, s.points)), spec, len(s))


def s2_pair(params: PbmParams, i: int, j: int, a: Region, s: SampleSet) -> MomentEstimate:
    """Semi-second-order estimate of <x_i x_j> for an edge."""
    _require_samples(s)
    spec = EstimatorSpec(EstimatorKind.S2_SMCI, Region.of(i, j), sum_region=a)
    return MomentEstimate(s.average(_s2_pair_values(params, i, j, a, s.points)), spec, len(s))


def _exact_distribution(params: PbmParams, cap: int) -> Tuple[np.ndarray, np.ndarray]:
    check_capacity("asymptotic variance", params.n, cap)
    states = spin_states(params.n)
    log_w = params.log_weight(states)
    return states, np.exp(log_w - logsumexp(log_w))


def asymptotic_variance(
    params: PbmParams,
    f: TargetFunction,
    t: Region,
    a: Region,
    cap: int = DEFAULT_REGION_CAP,
    region_cap: int = DEFAULT_REGION_CAP,
) -> float:
    """Leading-order variance times M of the estimator with sum region ``a``, computed exactly.

    Equals the variance, under the marginal of the boundary of ``a``, of the
    conditional expectation of f given that boundary.
    """
    if not t.issubset(a):
        raise RegionError(f"Target {t} is not inside sum region {a}")
    states, probs = _exact_distribution(params, cap)
    outside = boundary(params.graph, a).index()
    keys = encode_rows(states[:, outside])
    _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    marginal = np.bincount(inverse.reshape(-1), weights=probs)
    rho = conditional_expectations(params, f, t, a, states[first], region_cap)
    mean = marginal @ rho
    return max(float(marginal @ rho ** 2 - mean ** 2), 0.0)


def mci_variance(params: PbmParams, f: TargetFunction, t: Region, cap: int = DEFAULT_REGION_CAP) -> float:
    """Variance of f(x_t) under the model: the asymptotic variance of plain MCI."""
    states, probs = _exact_distribution(params, cap)
    values = np.asarray(f(states[:, t.index()]), dtype=np.float64)
    mean = probs @ values
    return max(float(probs @ values ** 2 - mean ** 2), 0.0)


def s2_region_table(params: PbmParams) -> Tuple[List[Region], List[Region]]:
    """Semi-second-order sum regions for every vertex and for every edge."""
    g = params.graph
    vertex_regions = [s2_regions(g, params, Region.of(i)) for i in range(g.n)]
    edge_regions = [s2_regions(g, params, Region.of(i, j)) for i, j in g.edges]
    return vertex_regions, edge_regions


def estimate_moments(
    params: PbmParams,
    method: str,
    s: Optional[SampleSet],
    cap: int = DEFAULT_REGION_CAP,
) -> Tuple[np.ndarray, np.ndarray]:
    """Every single-site mean and every edge pair moment by the named estimator.

    Returns ``(means, pairs)`` with ``pairs`` aligned to ``params.graph.edges``.
    """
    kind, k = resolve_method(method)
    g = params.graph
    if kind is EstimatorKind.EXACT:
        moments = exact_moments(params)
        return moments.means, moments.pairs
    _require_samples(s)
    x = s.points.astype(np.float64)
    edges = g.edge_array
    if kind is EstimatorKind.MCI:
        return _average(s, x), _average(s, x[:, edges[:, 0]] * x[:, edges[:, 1]]) if len(edges) else np.zeros(0)
    if kind is EstimatorKind.SMCI_K and k == 1:
        fields = _fields(params, s.points)
        means = _average(s, np.tanh(fields))
        if not len(edges):
            return means, np.zeros(0)
        pair_values = np.stack([_smci1_pair_values(params, i, j, x, fields) for i, j in g.edges], axis=1)
        return means, _average(s, pair_values)
    if kind is EstimatorKind.S2_SMCI:
        vertex_regions, edge_regions = s2_region_table(params)
        means = np.array([s.average(_s2_mean_values(params, i, a, s.points)) for i, a in enumerate(vertex_regions)])
        pairs = np.array(
            [s.average(_s2_pair_values(params, i, j, a, s.points)) for (i, j), a in zip(g.edges, edge_regions)]
        )
        return means, pairs
    if kind is EstimatorKind.SMCI_K:
        means = np.array([ksmci_estimate(params, spin_product, Region.of(i), k, s, cap).value for i in range(g.n)])
        pairs = np.array(
            [ksmci_estimate(params, spin_product, Region.of(i, j), k, s, cap).value for i, j in g.edges]
        )
        return means, pairs
    raise ValueError(f"Estimator {method!r} has no per-moment table; give it an explicit region instead")


def covariance_table(
    params: PbmParams,
    method: str,
    s: Optional[SampleSet],
    cap: int = DEFAULT_REGION_CAP,
) -> Dict[Edge, float]:
    """Estimated covariance <x_i x_j> - <x_i><x_j> for every edge."""
    means, pairs = estimate_moments(params, method, s, cap)
    return {
        (i, j): float(pairs[pos] - means[i] * means[j]) for pos, (i, j) in enumerate(params.graph.edges)
    }
