"""Batch experiments: inference accuracy of the estimators and accuracy of the learning loops.

Every random draw of a trial is seeded by ``derive_seed(master_seed, trial,
stage, ...)``, so a raw row depends only on the master seed and its trial
index, whatever the number of trials, the method list or the worker count.
"""
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from functools import partial
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from tqdm import tqdm

from .core import DEFAULT_REGION_CAP, CapacityError, as_generator, derive_seed
from .estimators import covariance_table
from .formats import dump_csv, emit
from .graph import PairwiseGraph, complete_graph, graph_from_spec
from .learning import LearnConfig, exact_mle, learn
from .metrics import mae, mean_and_stderr
from .model import PbmParams
from .sampling import AnnealSchedule, ais_estimate, draw_sample_set

logger = logging.getLogger(__name__)


class Scenario(str, Enum):
    INFERENCE = "inference"
    LEARN_MATCHED = "matched"
    LEARN_MISMATCHED = "mismatched"


INFERENCE_METHODS = ("mci", "smci1", "smci-s2", "smci2", "ais")
LEARNING_METHODS = ("fixed-smci1", "fixed-smci-s2", "pcd-smci1", "pcd-smci-s2")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: Scenario = Scenario.INFERENCE
    graph: str = "grid:4x5"
    generator_graph: Optional[str] = None
    trials: int = 200
    sample_sizes: Tuple[int, ...] = (10, 100, 1000)
    data_size: int = 50
    methods: Optional[Tuple[str, ...]] = None
    e_values: Tuple[int, ...] = (1,)
    bias_range: Tuple[float, float] = (-0.2, 0.2)
    coupling_range: Tuple[float, float] = (-0.3, 0.3)
    seed: int = 0
    anneal_sweeps: int = 1000
    equilibration_sweeps: int = 100
    ais_chains: Optional[int] = None
    ais_step: float = 1e-4
    region_cap: int = DEFAULT_REGION_CAP
    steps: int = 5000
    learning_rate: float = 0.02
    kappa: int = 1
    record_every: int = 50
    mle_rate: float = 1.0
    mle_tol: float = 1e-8
    jobs: int = 1
    output: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        for name in ("sample_sizes", "e_values", "bias_range", "coupling_range"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.methods is not None:
            object.__setattr__(self, "methods", tuple(self.methods))
        if self.trials < 1:
            raise ValueError(f"trials must be positive, got {self.trials}")
        for name in ("bias_range", "coupling_range"):
            interval = getattr(self, name)
            if len(interval) != 2 or interval[0] > interval[1]:
                raise ValueError(f"{name} must be an interval [low, high], got {list(interval)}")
        if any(m < 1 for m in self.sample_sizes) or not self.sample_sizes:
            raise ValueError(f"sample_sizes must be positive integers, got {list(self.sample_sizes)}")
        if any(e < 1 for e in self.e_values) or not self.e_values:
            raise ValueError(f"e_values must be positive integers, got {list(self.e_values)}")
        if self.data_size < 1:
            raise ValueError(f"data_size must be positive, got {self.data_size}")
        if self.ais_chains is not None and self.ais_chains < 1:
            raise ValueError(f"ais_chains must be positive, got {self.ais_chains}")
        if self.jobs < 1:
            raise ValueError(f"jobs must be positive, got {self.jobs}")

    @property
    def method_list(self) -> Tuple[str, ...]:
        if self.methods is not None:
            return self.methods
        return INFERENCE_METHODS if self.scenario is Scenario.INFERENCE else LEARNING_METHODS

    @property
    def schedule(self) -> AnnealSchedule:
        return AnnealSchedule.linear(self.anneal_sweeps, self.equilibration_sweeps)

    @classmethod
    def from_dict(cls, data: Dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"Unknown experiment settings: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["scenario"] = self.scenario.value
        return data


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    trial: int
    method: str
    x: int
    value: float
    note: str = ""


@dataclass(frozen=True)
class AggregateRow:
    scenario: str
    method: str
    x: int
    mean: float
    stderr: float
    count: int


@dataclass
class ResultTable:
    """Raw per-trial rows plus aggregates recomputed from them on demand.

    ``x`` is the sample size for inference rows and the update step for
    learning rows.
    """

    x_label: str
    rows: List[ResultRow] = field(default_factory=list)
    config: Optional[ExperimentConfig] = None

    def canonical(self) -> List[ResultRow]:
        return sorted(self.rows, key=lambda r: (r.trial, r.method, r.x))

    def aggregate(self) -> List[AggregateRow]:
        groups: Dict[Tuple[str, str, int], List[float]] = {}
        for row in self.canonical():
            groups.setdefault((row.scenario, row.method, row.x), []).append(row.value)
        out = []
        for (scenario, method, x), values in sorted(groups.items(), key=lambda item: (item[0][1], item[0][2])):
            mean, stderr = mean_and_stderr(values)
            count = int(np.count_nonzero(~np.isnan(values)))
            out.append(AggregateRow(scenario, method, x, mean, stderr, count))
        return out

    def lookup(self, method: str, x: int) -> AggregateRow:
        for row in self.aggregate():
            if row.method == method and row.x == x:
                return row
        raise KeyError(f"No aggregate for method {method!r} at {self.x_label}={x}")

    def notes(self) -> List[str]:
        return sorted({f"{r.method}: {r.note}" for r in self.rows if r.note})

    def to_csv(self) -> str:
        header = ("scenario", "trial", "method", self.x_label, "value", "note")
        return dump_csv(header, ((r.scenario, r.trial, r.method, r.x, r.value, r.note) for r in self.canonical()))

    def summary(self) -> Dict:
        return {
            "config": self.config.to_dict() if self.config else None,
            "x_label": self.x_label,
            "aggregates": [asdict(row) for row in self.aggregate()],
            "notes": self.notes(),
        }


def generate_model(
    graph: Union[PairwiseGraph, str],
    bias_range: Tuple[float, float] = (-0.2, 0.2),
    coupling_range: Tuple[float, float] = (-0.3, 0.3),
    seed=None,
) -> PbmParams:
    """Biases and couplings drawn independently and uniformly from the given intervals."""
    for name, (low, high) in (("bias_range", bias_range), ("coupling_range", coupling_range)):
        if low > high:
            raise ValueError(f"{name} must satisfy low <= high, got [{low}, {high}]")
    rng = as_generator(seed)
    if isinstance(graph, str):
        graph = graph_from_spec(graph, int(rng.integers(2 ** 32)))
    bias = rng.uniform(bias_range[0], bias_range[1], graph.n)
    weights = rng.uniform(coupling_range[0], coupling_range[1], len(graph.edges))
    return PbmParams(graph, bias, weights)


def _trial_model(cfg: ExperimentConfig, trial: int, graph: PairwiseGraph) -> PbmParams:
    return generate_model(graph, cfg.bias_range, cfg.coupling_range, derive_seed(cfg.seed, trial, "model"))


def _inference_trial(cfg: ExperimentConfig, trial: int) -> List[ResultRow]:
    graph = graph_from_spec(cfg.graph, derive_seed(cfg.seed, trial, "graph"))
    params = _trial_model(cfg, trial, graph)
    exact = covariance_table(params, "exact", None)
    scenario = cfg.scenario.value
    rows = []
    for m in cfg.sample_sizes:
        samples = draw_sample_set(params, m, cfg.schedule, derive_seed(cfg.seed, trial, "samples", m))
        for method in cfg.method_list:
            if method == "ais":
                continue
            try:
                estimate = covariance_table(params, method, samples, cfg.region_cap)
            except CapacityError as e:
                logger.debug("trial %d: %s skipped: %s", trial, method, e)
                rows.append(ResultRow(scenario, trial, method, m, float("nan"), f"skipped, sum region of {e.size} > cap {e.cap}"))
                continue
            rows.append(ResultRow(scenario, trial, method, m, mae(exact, estimate)))
    if "ais" in cfg.method_list:
        # one AIS run per sample size with as many chains, unless a chain count is pinned
        chain_counts = cfg.sample_sizes if cfg.ais_chains is None else (cfg.ais_chains,)
        for m in chain_counts:
            result = ais_estimate(params, m, cfg.ais_step, derive_seed(cfg.seed, trial, "ais", m))
            estimate = covariance_table(params, "mci", result.samples)
            rows.append(ResultRow(scenario, trial, "ais", m, mae(exact, estimate)))
    return rows


def _learning_configs(cfg: ExperimentConfig, trial: int) -> List[LearnConfig]:
    configs = []
    for method in cfg.method_list:
        e_values = cfg.e_values if method.startswith("pcd") else (1,)
        for e in e_values:
            configs.append(
                LearnConfig.parse(
                    method,
                    e=e,
                    kappa=cfg.kappa,
                    learning_rate=cfg.learning_rate,
                    steps=cfg.steps,
                    seed=derive_seed(cfg.seed, trial, "chains", method, e),
                    record_every=cfg.record_every,
                    log_every=0,
                    region_cap=cfg.region_cap,
                )
            )
    return configs


def _learning_trial(cfg: ExperimentConfig, trial: int) -> List[ResultRow]:
    learner = graph_from_spec(cfg.graph, derive_seed(cfg.seed, trial, "graph"))
    if cfg.generator_graph is not None:
        generator = graph_from_spec(cfg.generator_graph, derive_seed(cfg.seed, trial, "generator"))
    elif cfg.scenario is Scenario.LEARN_MISMATCHED:
        generator = complete_graph(learner.n)
    else:
        generator = learner
    if generator.n != learner.n:
        raise ValueError(f"Generator has {generator.n} vertices but the learner has {learner.n}")
    params = _trial_model(cfg, trial, generator)
    data = draw_sample_set(params, cfg.data_size, cfg.schedule, derive_seed(cfg.seed, trial, "data"))
    ref = exact_mle(learner, data, cfg.mle_rate, cfg.mle_tol)
    rows = []
    for learn_cfg in _learning_configs(cfg, trial):
        trace = learn(learner, data, learn_cfg, ref)
        rows.extend(ResultRow(cfg.scenario.value, trial, trace.label, r.step, r.mae) for r in trace.rows)
    return rows


def _run_trials(cfg: ExperimentConfig, worker, progress: bool) -> List[ResultRow]:
    task = partial(worker, cfg)
    trials = range(cfg.trials)
    rows: List[ResultRow] = []
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            for trial_rows in tqdm(pool.map(task, trials), total=cfg.trials, disable=not progress):
                rows.extend(trial_rows)
    else:
        for trial in tqdm(trials, disable=not progress):
            rows.extend(task(trial))
            logger.info("trial %d of %d done", trial + 1, cfg.trials)
    return rows


def _finish(table: ResultTable) -> ResultTable:
    if table.config is not None and table.config.output:
        emit(table.to_csv(), table.config.output)
        logger.info("wrote %d rows to %s", len(table.rows), table.config.output)
    return table


def run_inference_experiment(cfg: ExperimentConfig, progress: bool = False) -> ResultTable:
    """Covariance MAE of every configured estimator for every sample size, per trial."""
    if cfg.scenario is not Scenario.INFERENCE:
        raise ValueError(f"Inference experiment needs scenario 'inference', got {cfg.scenario.value!r}")
    return _finish(ResultTable("M", _run_trials(cfg, _inference_trial, progress), cfg))


def run_learning_experiment(cfg: ExperimentConfig, progress: bool = False) -> ResultTable:
    """Coupling MAE against the exact MLE along every configured learning run, per trial."""
    if cfg.scenario is Scenario.INFERENCE:
        raise ValueError("Learning experiment needs scenario 'matched' or 'mismatched'")
    return _finish(ResultTable("step", _run_trials(cfg, _learning_trial, progress), cfg))
