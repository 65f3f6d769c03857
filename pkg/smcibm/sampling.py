"""Gibbs sampling with annealing, persistent chains and annealed importance sampling."""
import logging
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, logsumexp

from .core import chain_generators, spin_states
from .model import PbmParams, SampleSet, SpinConfig

logger = logging.getLogger(__name__)

# uniforms (sweeps x chains x vertices) drawn per block
BLOCK_CELLS = 1 << 21


@dataclass(frozen=True)
class AnnealSchedule:
    """Inverse temperatures visited in order, each held for ``sweeps_per_beta`` sweeps."""

    betas: Tuple[float, ...]
    sweeps_per_beta: int = 1

    def __post_init__(self):
        betas = tuple(float(b) for b in self.betas)
        if not betas:
            raise ValueError("An annealing schedule needs at least one inverse temperature")
        if betas[0] < 0:
            raise ValueError(f"Inverse temperatures must be non-negative, got {betas[0]}")
        if any(b1 < b0 for b0, b1 in zip(betas, betas[1:])):
            raise ValueError("Inverse temperatures must be nondecreasing")
        if betas[-1] != 1.0:
            raise ValueError(f"A schedule must end at beta=1.0, got {betas[-1]}")
        if self.sweeps_per_beta < 1:
            raise ValueError(f"sweeps_per_beta must be positive, got {self.sweeps_per_beta}")
        object.__setattr__(self, "betas", betas)

    @classmethod
    def linear(cls, anneal_sweeps: int = 1000, equilibration_sweeps: int = 100) -> "AnnealSchedule":
        """Linear ramp from beta=0 to 1 over ``anneal_sweeps`` sweeps, then sweeps at beta=1."""
        ramp = list(np.linspace(0.0, 1.0, anneal_sweeps)) if anneal_sweeps > 1 else [1.0] * anneal_sweeps
        return cls(tuple(ramp) + (1.0,) * equilibration_sweeps)

    @classmethod
    def constant(cls, sweeps: int) -> "AnnealSchedule":
        return cls((1.0,) * sweeps)

    def sweep_betas(self) -> np.ndarray:
        return np.repeat(np.asarray(self.betas), self.sweeps_per_beta)

    def __len__(self) -> int:
        return len(self.betas) * self.sweeps_per_beta


@dataclass(frozen=True, eq=False)
class ChainState:
    """M persistent chains and one random stream per chain.

    Advancing the state consumes its streams: the successor shares the
    generator objects.
    """

    samples: SampleSet
    streams: Tuple[np.random.Generator, ...]

    def __post_init__(self):
        if len(self.streams) != len(self.samples):
            raise ValueError(
                f"Need one stream per chain, got {len(self.streams)} streams for {len(self.samples)} chains"
            )

    @classmethod
    def start(cls, points: np.ndarray, seed: Optional[int] = None) -> "ChainState":
        samples = SampleSet(points)
        return cls(samples, tuple(chain_generators(seed, len(samples))))

    def __len__(self) -> int:
        return len(self.samples)


def _uniforms(streams: Sequence[np.random.Generator], sweeps: int, n: int) -> np.ndarray:
    """Uniform draws shaped (sweeps, chains, n), each chain reading its own stream."""
    return np.stack([rng.random((sweeps, n)) for rng in streams], axis=1)


def _sweep(params: PbmParams, x: np.ndarray, beta: float, uniforms: np.ndarray) -> None:
    """One systematic scan over vertices 0..n-1 of every row of ``x``, in place."""
    couple = params.coupling_matrix
    for i in range(params.n):
        field = params.bias[i] + x @ couple[:, i]
        p_up = expit(2.0 * beta * field)
        x[:, i] = np.where(uniforms[:, i] < p_up, 1.0, -1.0)


def _block_sweeps(chains: int, n: int) -> int:
    return max(1, BLOCK_CELLS // max(1, chains * n))


def _run(params: PbmParams, x: np.ndarray, streams, betas: np.ndarray) -> np.ndarray:
    size = _block_sweeps(len(x), params.n)
    for start in range(0, len(betas), size):
        block = betas[start:start + size]
        uniforms = _uniforms(streams, len(block), params.n)
        for beta, u in zip(block, uniforms):
            _sweep(params, x, beta, u)
    return x


def _uniform_start(streams, n: int) -> np.ndarray:
    return np.stack([np.where(rng.random(n) < 0.5, 1.0, -1.0) for rng in streams]) if streams else np.zeros((0, n))


def gibbs_sweep(params: PbmParams, x: SpinConfig, beta: float, rng: np.random.Generator) -> np.ndarray:
    """Resample every vertex once, in ascending order, at inverse temperature ``beta``."""
    if beta < 0:
        raise ValueError(f"Inverse temperature must be non-negative, got {beta}")
    row = np.asarray(x, dtype=np.float64).reshape(1, -1).copy()
    _sweep(params, row, beta, rng.random((1, params.n)))
    return row[0].astype(np.int8)


def draw_sample_set(
    params: PbmParams,
    m: int,
    schedule: Optional[AnnealSchedule] = None,
    seed: Optional[int] = None,
) -> SampleSet:
    """M independent annealed chains, returning each chain's final configuration."""
    if m < 1:
        raise ValueError(f"Sample size must be positive, got {m}")
    schedule = schedule or AnnealSchedule.linear()
    streams = chain_generators(seed, m)
    x = _uniform_start(streams, params.n)
    _run(params, x, streams, schedule.sweep_betas())
    return SampleSet(x.astype(np.int8))


def persistent_update(params: PbmParams, state: ChainState, kappa: int) -> ChainState:
    """Advance every chain by ``kappa`` sweeps at beta=1 from its current configuration."""
    if kappa < 1:
        raise ValueError(f"kappa must be a positive integer, got {kappa}")
    x = state.samples.points.astype(np.float64)
    _run(params, x, state.streams, np.ones(kappa))
    return ChainState(SampleSet(x.astype(np.int8)), state.streams)


class AisResult(NamedTuple):
    log_z: float
    log_weights: np.ndarray
    samples: SampleSet
    rungs: int


def ais_ladder(step: float) -> np.ndarray:
    """0, step, 2*step, ..., 1 with the final rung clipped to exactly 1."""
    if not 0.0 < step <= 1.0:
        raise ValueError(f"AIS step must lie in (0, 1], got {step}")
    rungs = int(math.ceil(1.0 / step - 1e-9))
    betas = np.minimum(np.arange(rungs + 1) * step, 1.0)
    betas[-1] = 1.0
    return betas


def ais_estimate(
    params: PbmParams,
    m: int,
    step: float = 1e-4,
    seed: Optional[int] = None,
) -> AisResult:
    """Annealed importance sampling from the uniform distribution to the model.

    Each chain starts uniform, gains ``(beta_{k+1} - beta_k) * log_weight(x_k)``
    and then takes one Gibbs sweep at ``beta_{k+1}``.
    """
    if m < 1:
        raise ValueError(f"AIS chain count must be positive, got {m}")
    betas = ais_ladder(step)
    logger.debug("AIS ladder with %d rungs over %d chains", len(betas) - 1, m)
    streams = chain_generators(seed, m)
    x = _uniform_start(streams, params.n)
    log_w = np.zeros(m)
    increments = np.diff(betas)
    size = _block_sweeps(m, params.n)
    for start in range(0, len(increments), size):
        block = slice(start, start + size)
        uniforms = _uniforms(streams, len(increments[block]), params.n)
        for delta, beta, u in zip(increments[block], betas[1:][block], uniforms):
            log_w += delta * params.log_weight(x)
            _sweep(params, x, beta, u)
    log_z = params.n * math.log(2.0) + float(logsumexp(log_w)) - math.log(m)
    weights = np.exp(log_w - log_w.max())
    return AisResult(log_z, log_w, SampleSet(x.astype(np.int8), weights), len(increments))


def transition_matrix(params: PbmParams, beta: float = 1.0) -> np.ndarray:
    """Explicit kernel of one systematic-scan sweep over the 2**n states.

    Entry [a, b] is the probability of moving from state a to state b, states
    in ``spin_states`` order.
    """
    states = spin_states(params.n)
    size = len(states)
    kernel = np.eye(size)
    couple = params.coupling_matrix
    bit = 1 << np.arange(params.n - 1, -1, -1)
    codes = np.arange(size)
    for i in range(params.n):
        field = params.bias[i] + states.astype(np.float64) @ couple[:, i]
        p_up = expit(2.0 * beta * field)
        up = codes | bit[i]
        down = codes & ~bit[i]
        site = np.zeros((size, size))
        site[codes, up] += p_up
        site[codes, down] += 1.0 - p_up
        kernel = kernel @ site
    return kernel
