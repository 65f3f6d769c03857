"""Maximum-likelihood learning of a pairwise Boltzmann machine.

Three loops share the same gradient-ascent step and differ only in where the
model term of the gradient comes from: the exact oracle, an SMCI estimator
over the training data itself, or an SMCI estimator over persistent Gibbs
chains seeded with replicas of the data.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np
from scipy.special import logsumexp

from .core import DEFAULT_ENUMERATION_CAP, DEFAULT_REGION_CAP, ConvergenceError, check_capacity, iter_spin_chunks
from .estimators import estimate_moments, resolve_method
from .graph import PairwiseGraph
from .metrics import mae
from .model import Dataset, PbmParams, SampleSet, exact_moments
from .sampling import ChainState, persistent_update

logger = logging.getLogger(__name__)


class LearnMethod(str, Enum):
    EXACT_MLE = "exact"
    FIXED_SMCI = "fixed"
    PCD_SMCI = "pcd"


@dataclass(frozen=True)
class LearnConfig:
    method: LearnMethod = LearnMethod.PCD_SMCI
    estimator: str = "smci1"
    e: int = 1
    kappa: int = 1
    learning_rate: float = 0.02
    steps: int = 5000
    seed: Optional[int] = None
    record_every: int = 1
    log_every: int = 500
    region_cap: int = DEFAULT_REGION_CAP

    def __post_init__(self):
        object.__setattr__(self, "method", LearnMethod(self.method))
        if self.method is LearnMethod.EXACT_MLE:
            object.__setattr__(self, "estimator", "exact")
        resolve_method(self.estimator)
        if self.e < 1:
            raise ValueError(f"Data-extension rate e must be a positive integer, got {self.e}")
        if self.kappa < 1:
            raise ValueError(f"kappa must be a positive integer, got {self.kappa}")
        if not self.learning_rate > 0:
            raise ValueError(f"Learning rate must be positive, got {self.learning_rate}")
        if self.steps < 1:
            raise ValueError(f"Step count must be positive, got {self.steps}")
        if self.record_every < 1:
            raise ValueError(f"record_every must be positive, got {self.record_every}")

    @classmethod
    def parse(cls, name: str, **kwargs) -> "LearnConfig":
        """Build a config from a method name such as ``fixed-smci1``, ``pcd-s2`` or ``exact``."""
        key = name.strip().lower()
        if key in ("exact", "exact-mle"):
            return cls(method=LearnMethod.EXACT_MLE, estimator="exact", **kwargs)
        prefix, _, estimator = key.partition("-")
        if prefix not in ("fixed", "pcd") or not estimator:
            raise ValueError(f"Unknown learning method {name!r}. Use fixed-<estimator>, pcd-<estimator> or exact.")
        if estimator == "s2":
            estimator = "smci-s2"
        return cls(method=LearnMethod(prefix), estimator=estimator, **kwargs)

    @property
    def label(self) -> str:
        if self.method is LearnMethod.EXACT_MLE:
            return "exact"
        label = f"{self.method.value}-{self.estimator}"
        return f"{label}[e={self.e}]" if self.method is LearnMethod.PCD_SMCI else label


@dataclass(frozen=True)
class Gradient:
    bias: np.ndarray
    weights: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([self.bias, self.weights])

    def norm(self) -> float:
        return float(np.linalg.norm(self.vector()))

    def max_abs(self) -> float:
        vector = self.vector()
        return float(np.max(np.abs(vector))) if vector.size else 0.0


@dataclass(frozen=True)
class TraceRow:
    step: int
    mae: float
    grad_norm: float


@dataclass
class LearnTrace:
    label: str
    rows: List[TraceRow] = field(default_factory=list)
    final: Optional[PbmParams] = None
    steps: int = 0

    def __len__(self) -> int:
        return self.steps

    @property
    def final_mae(self) -> float:
        return self.rows[-1].mae if self.rows else float("nan")


def data_moments(d: Dataset, graph: PairwiseGraph):
    """Empirical means and edge pair moments of the data."""
    if len(d) == 0:
        raise ValueError("The dataset is empty")
    x = d.points.astype(np.float64)
    i, j = graph.edge_array.T
    return (
        np.average(x, axis=0, weights=d.weights),
        np.average(x[:, i] * x[:, j], axis=0, weights=d.weights) if len(i) else np.zeros(0),
    )


def log_likelihood(params: PbmParams, d: Dataset, cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    """Average log-probability of the data under the model, with the exact partition function."""
    check_capacity("log likelihood", params.n, cap)
    log_z = exact_moments(params, cap).log_z
    return float(np.average(params.log_weight(d.points), weights=d.weights)) - log_z


def exact_gradient(params: PbmParams, d: Dataset, cap: int = DEFAULT_ENUMERATION_CAP) -> Gradient:
    """Data moments minus exact model moments."""
    data_means, data_pairs = data_moments(d, params.graph)
    moments = exact_moments(params, cap)
    return Gradient(data_means - moments.means, data_pairs - moments.pairs)


def approx_gradient(
    params: PbmParams,
    d: Dataset,
    s: SampleSet,
    estimator: str,
    cap: int = DEFAULT_REGION_CAP,
) -> Gradient:
    """Data moments minus model moments estimated from ``s`` by ``estimator``."""
    data_means, data_pairs = data_moments(d, params.graph)
    means, pairs = estimate_moments(params, estimator, s, cap)
    return Gradient(data_means - means, data_pairs - pairs)


class _StateTable:
    """Sufficient statistics of every state (spins, then edge products), enumerated once per graph."""

    def __init__(self, graph: PairwiseGraph):
        i, j = graph.edge_array.T
        self.chunks = [np.hstack([chunk, chunk[:, i] * chunk[:, j]]) for chunk in iter_spin_chunks(graph.n)]

    def evaluate(self, theta: np.ndarray, data_vector: np.ndarray):
        """Log-likelihood, its gradient and the feature covariance at ``theta``."""
        log_weights = [chunk @ theta for chunk in self.chunks]
        log_z = float(logsumexp(np.concatenate(log_weights)))
        mean = np.zeros_like(theta)
        second = np.zeros((theta.size, theta.size))
        for chunk, log_w in zip(self.chunks, log_weights):
            probs = np.exp(log_w - log_z)
            features = chunk.astype(np.float64)
            mean += probs @ features
            second += (features * probs[:, None]).T @ features
        ll = float(theta @ data_vector) - log_z
        return ll, data_vector - mean, second - np.outer(mean, mean)


def _natural_direction(covariance: np.ndarray, grad: np.ndarray) -> np.ndarray:
    ridge = 1e-12 * max(float(np.trace(covariance)) / max(grad.size, 1), 1.0)
    try:
        return np.linalg.solve(covariance + ridge * np.eye(grad.size), grad)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(covariance, grad, rcond=None)[0]


def exact_mle(
    graph: PairwiseGraph,
    d: Dataset,
    learning_rate: float = 1.0,
    tol: float = 1e-8,
    max_iter: int = 500,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> PbmParams:
    """Exact maximum-likelihood parameters by natural-gradient ascent from zero.

    Each step follows the gradient preconditioned by the exact covariance of
    the sufficient statistics, scaled by the current rate. A step that lowers
    the likelihood is undone and retried at half the rate; an accepted step
    lets the rate double again, up to ``learning_rate``. The state space is
    enumerated once per call. Stops once every gradient component is below
    ``tol``.
    """
    check_capacity("exact MLE", graph.n, cap)
    if not learning_rate > 0:
        raise ValueError(f"Learning rate must be positive, got {learning_rate}")
    data_means, data_pairs = data_moments(d, graph)
    data_vector = np.concatenate([data_means, data_pairs])
    table = _StateTable(graph)

    theta = np.zeros(graph.n + len(graph.edges))
    ll, grad, covariance = table.evaluate(theta, data_vector)
    rate = learning_rate
    for iteration in range(max_iter):
        if np.max(np.abs(grad), initial=0.0) < tol:
            logger.info("exact MLE converged after %d iterations", iteration)
            return PbmParams.from_vector(graph, theta)
        candidate = theta + rate * _natural_direction(covariance, grad)
        cand_ll, cand_grad, cand_covariance = table.evaluate(candidate, data_vector)
        if cand_ll < ll - 1e-10:
            rate *= 0.5
            continue
        theta, ll, grad, covariance = candidate, cand_ll, cand_grad, cand_covariance
        rate = min(learning_rate, 2.0 * rate)
    raise ConvergenceError(
        f"Exact MLE did not reach tolerance {tol} within {max_iter} iterations",
        float(np.max(np.abs(grad), initial=0.0)),
    )


def coupling_mae(params: PbmParams, ref: PbmParams) -> float:
    """Mean absolute difference of the couplings, edge by edge."""
    return mae(ref.couplings(), params.couplings())


def _ascend(
    graph: PairwiseGraph,
    d: Dataset,
    cfg: LearnConfig,
    ref: PbmParams,
    model_samples,
    after_step=None,
) -> LearnTrace:
    """Run ``cfg.steps`` gradient-ascent steps starting from zero parameters.

    ``model_samples()`` supplies the sample set the model term is estimated
    on; ``after_step(params)`` runs after each parameter update.
    """
    params = PbmParams.zeros(graph)
    trace = LearnTrace(cfg.label)
    for step in range(1, cfg.steps + 1):
        grad = approx_gradient(params, d, model_samples(), cfg.estimator, cfg.region_cap)
        params = PbmParams.from_vector(graph, params.to_vector() + cfg.learning_rate * grad.vector())
        if after_step is not None:
            after_step(params)
        if step % cfg.record_every == 0 or step == cfg.steps:
            trace.rows.append(TraceRow(step, coupling_mae(params, ref), grad.norm()))
        if cfg.log_every and step % cfg.log_every == 0:
            logger.info("%s step %d: MAE %.5f", cfg.label, step, coupling_mae(params, ref))
    trace.final = params
    trace.steps = cfg.steps
    return trace


def fixed_sample_learning(graph: PairwiseGraph, d: Dataset, cfg: LearnConfig, ref: PbmParams) -> LearnTrace:
    """Learning with the sample region fixed to the training data at every step."""
    if cfg.method is not LearnMethod.FIXED_SMCI:
        raise ValueError(f"fixed_sample_learning needs a FIXED_SMCI config, got {cfg.method.value}")
    return _ascend(graph, d, cfg, ref, lambda: d)


def pcd_smci_learning(graph: PairwiseGraph, d: Dataset, cfg: LearnConfig, ref: PbmParams) -> LearnTrace:
    """Learning with persistent chains started from ``e`` replicas of the data.

    Each step updates the parameters with the estimator over the current
    chains, then advances every chain ``kappa`` sweeps under the new
    parameters.
    """
    if cfg.method is not LearnMethod.PCD_SMCI:
        raise ValueError(f"pcd_smci_learning needs a PCD_SMCI config, got {cfg.method.value}")
    holder = {"state": initial_chains(d, cfg.e, cfg.seed)}

    def advance(params: PbmParams) -> None:
        holder["state"] = persistent_update(params, holder["state"], cfg.kappa)

    return _ascend(graph, d, cfg, ref, lambda: holder["state"].samples, advance)


def initial_chains(d: Dataset, e: int, seed: Optional[int] = None) -> ChainState:
    """Chains started at ``e`` copies of the dataset, concatenated in order."""
    return ChainState.start(d.replicate(e).points, seed)


def learn(graph: PairwiseGraph, d: Dataset, cfg: LearnConfig, ref: PbmParams) -> LearnTrace:
    """Run the learning loop selected by ``cfg.method``."""
    if cfg.method is LearnMethod.FIXED_SMCI:
        return fixed_sample_learning(graph, d, cfg, ref)
    if cfg.method is LearnMethod.PCD_SMCI:
        return pcd_smci_learning(graph, d, cfg, ref)
    return _ascend(graph, d, cfg, ref, lambda: None)
