import logging

from .__version__ import __version__
from .core import CapacityError, ConvergenceError, RegionError, SmciError, derive_seed, spin_states
from .estimators import (
    EstimatorKind,
    EstimatorSpec,
    MomentEstimate,
    asymptotic_variance,
    covariance_table,
    estimate_moments,
    gsmci_estimate,
    independent_neighbors,
    ksmci_estimate,
    mci_estimate,
    mci_variance,
    run_estimator,
    s2_mean,
    s2_pair,
    s2_regions,
    smci1_mean,
    smci1_pair,
)
from .experiments import ExperimentConfig, ResultTable, Scenario, generate_model, run_inference_experiment, run_learning_experiment
from .graph import (
    PairwiseGraph,
    Region,
    boundary,
    closed_region_k,
    complete_graph,
    graph_from_spec,
    greedy_independent_set,
    grid_graph,
    neighborhood_k,
    random_graph,
)
from .learning import LearnConfig, LearnMethod, LearnTrace, exact_gradient, exact_mle, fixed_sample_learning, learn, log_likelihood, pcd_smci_learning
from .metrics import mae
from .model import (
    Dataset,
    PbmParams,
    SampleSet,
    cavity_field,
    conditional_on_region,
    exact_expectation,
    exact_moments,
    local_field,
    log_partition,
    spin_product,
)
from .sampling import AnnealSchedule, ChainState, ais_estimate, draw_sample_set, gibbs_sweep, persistent_update

logging.getLogger(__name__).addHandler(logging.NullHandler())
