import math

import numpy as np
import pytest

import smcibm.learning as learning
from smcibm.core import ConvergenceError, spin_states
from smcibm.experiments import generate_model
from smcibm.graph import PairwiseGraph, grid_graph, path_graph, random_graph
from smcibm.learning import (
    LearnConfig,
    LearnMethod,
    approx_gradient,
    coupling_mae,
    data_moments,
    exact_gradient,
    exact_mle,
    fixed_sample_learning,
    initial_chains,
    learn,
    log_likelihood,
    pcd_smci_learning,
)
from smcibm.model import PbmParams, SampleSet
from smcibm.sampling import AnnealSchedule, draw_sample_set


@pytest.fixture
def small_case():
    params = generate_model(path_graph(4), (-0.4, 0.4), (-0.6, 0.6), seed=17)
    return params, SampleSet.exact(params)


@pytest.fixture
def grid_data():
    params = generate_model(grid_graph(2, 3), seed=5)
    return params, draw_sample_set(params, 30, AnnealSchedule.linear(50, 10), seed=5)


def test_learn_config_parse_and_label():
    cfg = LearnConfig.parse("pcd-smci1", e=2)
    assert cfg.method is LearnMethod.PCD_SMCI
    assert cfg.estimator == "smci1"
    assert cfg.label == "pcd-smci1[e=2]"
    assert LearnConfig.parse("pcd-s2").estimator == "smci-s2"
    assert LearnConfig.parse("fixed-smci1").label == "fixed-smci1"
    exact = LearnConfig.parse("exact")
    assert exact.method is LearnMethod.EXACT_MLE and exact.estimator == "exact"
    with pytest.raises(ValueError):
        LearnConfig.parse("sgd-smci1")
    with pytest.raises(ValueError):
        LearnConfig.parse("pcd-bp")


@pytest.mark.parametrize(
    "kwargs",
    [{"e": 0}, {"kappa": 0}, {"learning_rate": 0.0}, {"steps": 0}, {"record_every": 0}],
)
def test_learn_config_validation(kwargs):
    with pytest.raises(ValueError):
        LearnConfig(**kwargs)


def test_log_likelihood_of_zero_model():
    d = SampleSet(np.random.default_rng(0).choice([-1, 1], size=(10, 5)))
    assert log_likelihood(PbmParams.zeros(path_graph(5)), d) == pytest.approx(-5 * math.log(2))


def test_exact_gradient_all_up_data():
    graph = grid_graph(2, 2)
    d = SampleSet(np.ones((4, 4)))
    grad = exact_gradient(PbmParams.zeros(graph), d)
    assert np.allclose(grad.bias, 1.0)
    assert np.allclose(grad.weights, 1.0)


def test_exact_gradient_vanishes_on_model_moments(small_case):
    params, d = small_case
    assert exact_gradient(params, d).max_abs() < 1e-12


@pytest.mark.parametrize("seed", range(20))
def test_exact_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    graph = random_graph(int(rng.integers(3, 8)), 0.5, rng)
    params = generate_model(graph, (-0.5, 0.5), (-0.8, 0.8), seed=rng)
    d = SampleSet(rng.choice([-1, 1], size=(12, graph.n)))
    grad = exact_gradient(params, d).vector()
    theta = params.to_vector()
    h = 1e-5
    for k in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[k] += h
        down[k] -= h
        numeric = (
            log_likelihood(PbmParams.from_vector(graph, up), d) - log_likelihood(PbmParams.from_vector(graph, down), d)
        ) / (2 * h)
        assert grad[k] == pytest.approx(numeric, abs=1e-6)


def test_small_exact_steps_never_lower_the_likelihood(grid_data):
    _, d = grid_data
    params = PbmParams.zeros(grid_graph(2, 3))
    ll = log_likelihood(params, d)
    for _ in range(20):
        grad = exact_gradient(params, d)
        params = PbmParams.from_vector(params.graph, params.to_vector() + 1e-3 * grad.vector())
        new_ll = log_likelihood(params, d)
        assert new_ll >= ll - 1e-12
        ll = new_ll


def test_exact_mle_recovers_generating_model(small_case):
    params, d = small_case
    theta = exact_mle(params.graph, d)
    assert np.abs(theta.to_vector() - params.to_vector()).max() < 1e-6


def test_exact_mle_of_independent_coins():
    states = spin_states(2)
    p0 = np.where(states[:, 0] > 0, 0.75, 0.25)
    p1 = np.where(states[:, 1] > 0, 0.6, 0.4)
    d = SampleSet(states, p0 * p1)
    theta = exact_mle(path_graph(2), d)
    assert theta.bias[0] == pytest.approx(math.atanh(0.5), abs=1e-6)
    assert theta.bias[1] == pytest.approx(math.atanh(0.2), abs=1e-6)
    assert theta.weights[0] == pytest.approx(0.0, abs=1e-6)


def test_exact_mle_is_deterministic_and_stationary(grid_data):
    _, d = grid_data
    graph = grid_graph(2, 3)
    a = exact_mle(graph, d)
    b = exact_mle(graph, d)
    assert np.array_equal(a.to_vector(), b.to_vector())
    best = log_likelihood(a, d)
    rng = np.random.default_rng(0)
    for _ in range(10):
        nudged = a.to_vector() + rng.choice([-1e-3, 1e-3], size=a.to_vector().size)
        assert log_likelihood(PbmParams.from_vector(graph, nudged), d) <= best + 1e-6


def test_exact_mle_enumerates_once_and_converges_fast(monkeypatch):
    params = generate_model(grid_graph(3, 3), (-0.5, 0.5), (-0.8, 0.8), seed=8)
    d = draw_sample_set(params, 60, AnnealSchedule.linear(50, 10), seed=8)
    calls = []
    original = learning.iter_spin_chunks

    def counting(n, *args, **kwargs):
        calls.append(n)
        return original(n, *args, **kwargs)

    monkeypatch.setattr(learning, "iter_spin_chunks", counting)
    theta = exact_mle(params.graph, d, max_iter=40)
    assert calls == [9]
    assert exact_gradient(theta, d).max_abs() < 1e-8


def test_exact_mle_reports_non_convergence(grid_data):
    _, d = grid_data
    with pytest.raises(ConvergenceError) as info:
        exact_mle(grid_graph(2, 3), d, max_iter=1)
    assert info.value.grad_norm > 0


@pytest.mark.parametrize("estimator", ["smci1", "smci-s2", "mci", "exact"])
def test_approx_gradient_with_exact_samples_is_exact(small_case, estimator):
    params, _ = small_case
    d = SampleSet(np.random.default_rng(1).choice([-1, 1], size=(9, 4)))
    theta = generate_model(params.graph, seed=2)
    approx = approx_gradient(theta, d, SampleSet.exact(theta), estimator)
    exact = exact_gradient(theta, d)
    assert np.abs(approx.vector() - exact.vector()).max() <= 1e-12


def test_data_moments():
    d = SampleSet(np.array([[1, 1, -1], [1, -1, -1]]))
    means, pairs = data_moments(d, path_graph(3))
    assert np.allclose(means, [1.0, 0.0, -1.0])
    assert np.allclose(pairs, [0.0, 0.0])
    with pytest.raises(ValueError):
        data_moments(SampleSet(np.zeros((0, 3))), path_graph(3))


def test_initial_chains_replicate_the_data():
    d = SampleSet(np.random.default_rng(3).choice([-1, 1], size=(7, 5)))
    state = initial_chains(d, 3, seed=1)
    assert len(state) == 21
    rows = [tuple(r) for r in state.samples.points]
    for row in d.points:
        assert rows.count(tuple(row)) >= 3
    assert np.array_equal(state.samples.points[7:14], d.points)


def test_fixed_learning_trace(grid_data):
    _, d = grid_data
    graph = grid_graph(2, 3)
    ref = exact_mle(graph, d)
    cfg = LearnConfig.parse("fixed-smci1", steps=40, record_every=10)
    trace = fixed_sample_learning(graph, d, cfg, ref)
    assert [row.step for row in trace.rows] == [10, 20, 30, 40]
    assert len(trace) == 40
    again = fixed_sample_learning(graph, d, cfg, ref)
    assert np.array_equal(trace.final.to_vector(), again.final.to_vector())
    assert trace.final_mae == pytest.approx(coupling_mae(trace.final, ref))
    with pytest.raises(ValueError):
        fixed_sample_learning(graph, d, LearnConfig.parse("pcd-smci1"), ref)


def test_pcd_learning_is_reproducible(grid_data):
    _, d = grid_data
    graph = grid_graph(2, 3)
    ref = exact_mle(graph, d)
    cfg = LearnConfig.parse("pcd-smci1", e=2, steps=30, seed=4)
    a = pcd_smci_learning(graph, d, cfg, ref)
    b = pcd_smci_learning(graph, d, cfg, ref)
    assert np.array_equal(a.final.to_vector(), b.final.to_vector())
    assert len(a.rows) == 30
    assert all(row.grad_norm >= 0 for row in a.rows)
    with pytest.raises(ValueError):
        pcd_smci_learning(graph, d, LearnConfig.parse("fixed-smci1"), ref)


@pytest.mark.parametrize("method", ["fixed-smci1", "pcd-smci-s2"])
def test_learning_steps_use_approx_gradient(grid_data, monkeypatch, method):
    _, d = grid_data
    graph = grid_graph(2, 3)
    ref = exact_mle(graph, d)
    calls = []
    original = learning.approx_gradient

    def counting(*args, **kwargs):
        calls.append(args[3])
        return original(*args, **kwargs)

    monkeypatch.setattr(learning, "approx_gradient", counting)
    cfg = LearnConfig.parse(method, steps=5, record_every=5, seed=1)
    learn(graph, d, cfg, ref)
    assert calls == [cfg.estimator] * 5


@pytest.mark.parametrize("method", ["fixed-exact", "pcd-exact", "exact"])
def test_exact_model_term_reaches_the_mle(small_case, method):
    params, d = small_case
    ref = exact_mle(params.graph, d)
    cfg = LearnConfig.parse(method, learning_rate=0.5, steps=400, record_every=100, seed=0)
    trace = learn(params.graph, d, cfg, ref)
    assert trace.final_mae < 1e-4


def test_mae_is_invariant_under_relabelling(grid_data):
    _, d = grid_data
    graph = grid_graph(2, 3)
    ref = exact_mle(graph, d)
    cfg = LearnConfig.parse("fixed-smci1", steps=25)
    base = fixed_sample_learning(graph, d, cfg, ref).final_mae

    perm = np.array([5, 3, 1, 0, 2, 4])
    relabel = {old: int(new) for old, new in enumerate(perm)}
    graph2 = PairwiseGraph(graph.n, tuple((relabel[i], relabel[j]) for i, j in graph.edges))
    points = np.empty_like(d.points)
    points[:, perm] = d.points
    d2 = SampleSet(points)
    ref2 = exact_mle(graph2, d2)
    relabelled = fixed_sample_learning(graph2, d2, cfg, ref2).final_mae
    assert relabelled == pytest.approx(base, abs=1e-8)


@pytest.mark.slow
def test_persistent_chains_beat_fixed_samples_on_matched_grid():
    graph = grid_graph(4, 5)
    fixed, pcd = [], []
    for trial in range(10):
        params = generate_model(graph, seed=trial)
        d = draw_sample_set(params, 50, seed=trial)
        ref = exact_mle(graph, d)
        fixed.append(learn(graph, d, LearnConfig.parse("fixed-smci1", steps=2000, record_every=2000), ref).final_mae)
        pcd.append(learn(graph, d, LearnConfig.parse("pcd-smci1", steps=2000, record_every=2000, seed=trial), ref).final_mae)
    assert np.mean(pcd) < np.mean(fixed)
