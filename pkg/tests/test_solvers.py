import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lambdapi import (
    GeneratorSpec,
    NoiseModel,
    SolverConfig,
    counterexample_mdp,
    evaluate_policy,
    greedy,
    random_mdp,
    run_lambda_pi,
    run_modified_policy_iteration,
    run_policy_iteration,
    run_value_iteration,
    span_inf,
    tail_limsup,
)
from lambdapi.bounds import stopping_test
from lambdapi.solvers import stop_threshold


def _mdp(seed, gamma=0.9, n=6):
    return random_mdp(GeneratorSpec(n_states=n, n_actions=3, branching=3, seed=seed, gamma=gamma))


def test_config_validation():
    with pytest.raises(ValueError, match=r"lambda out of \[0,1\]"):
        SolverConfig(lam=-0.1)
    with pytest.raises(ValueError):
        SolverConfig(inner_mode="sparse")
    with pytest.raises(ValueError):
        NoiseModel("laplace", 0.1)
    with pytest.raises(ValueError):
        NoiseModel("uniform_bounded", -1.0)


@pytest.mark.parametrize("seed", range(5))
def test_lambda_zero_is_value_iteration(seed):
    mdp = _mdp(seed)
    cfg = SolverConfig(lam=0.0, max_iterations=40, stop_rule="none")
    a = run_lambda_pi(mdp, np.zeros(mdp.n_states), cfg)
    b = run_value_iteration(mdp, np.zeros(mdp.n_states), cfg)
    assert len(a) == len(b)
    for ra, rb in zip(a.records, b.records):
        assert np.array_equal(ra.v, rb.v)


@pytest.mark.parametrize("seed", range(5))
def test_lambda_one_iterates_are_policy_values(seed):
    mdp = _mdp(seed)
    trace = run_lambda_pi(mdp, np.zeros(mdp.n_states), SolverConfig(lam=1.0, max_iterations=10))
    for rec in trace.records[1:]:
        np.testing.assert_allclose(rec.v, evaluate_policy(mdp, rec.pi), rtol=1e-9, atol=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_lambda_one_shifts_policy_iteration_by_one(seed):
    mdp = _mdp(seed)
    v0 = np.zeros(mdp.n_states)
    cfg = SolverConfig(max_iterations=8, stop_rule="none")
    lpi = run_lambda_pi(mdp, v0, SolverConfig(lam=1.0, max_iterations=8, stop_rule="none"))
    pi = run_policy_iteration(mdp, greedy(mdp, v0), cfg)
    for k in range(min(len(pi), len(lpi) - 1)):
        np.testing.assert_array_equal(lpi.records[k + 1].pi, pi.records[k].pi)
        np.testing.assert_allclose(lpi.records[k + 1].v, pi.records[k].v, rtol=0, atol=1e-12)


def test_mpi_one_step_is_value_iteration():
    mdp = _mdp(4)
    cfg = SolverConfig(max_iterations=20, stop_rule="none", mpi_steps=1)
    a = run_modified_policy_iteration(mdp, np.zeros(mdp.n_states), cfg)
    b = run_value_iteration(mdp, np.zeros(mdp.n_states), cfg)
    for ra, rb in zip(a.records, b.records):
        assert np.array_equal(ra.v, rb.v)


@pytest.mark.parametrize("lam", [0.3, 0.8])
def test_inner_modes_agree(lam):
    mdp = _mdp(2)
    v0 = np.zeros(mdp.n_states)
    dense = run_lambda_pi(mdp, v0, SolverConfig(lam=lam, max_iterations=15, stop_rule="none"))
    mk = run_lambda_pi(mdp, v0, SolverConfig(lam=lam, max_iterations=15, stop_rule="none", inner_mode="mk"))
    for a, b in zip(dense.records, mk.records):
        np.testing.assert_allclose(a.v, b.v, rtol=0, atol=1e-9 * (1 + np.abs(a.v).max()))
    assert all(r.inner_iterations >= 1 for r in mk.records[1:])
    assert all(r.inner_iterations == 0 for r in dense.records)


@given(st.integers(0, 10**6), st.sampled_from(["uniform_bounded", "gaussian_clipped"]), st.floats(1e-4, 1.0))
def test_noise_is_bounded_and_reproducible(seed, kind, amp):
    noise = NoiseModel(kind, amp, seed=seed)
    w = np.zeros(7)
    e1 = noise.sample(3, w)
    assert np.abs(e1).max() <= amp
    assert np.array_equal(e1, NoiseModel(kind, amp, seed=seed).sample(3, w))
    assert not np.array_equal(e1, noise.sample(4, w))


def test_rank_projection_noise_projects():
    noise = NoiseModel("rank_projection", rank=2, seed=1)
    w = np.random.default_rng(0).normal(size=6)
    eps = noise.sample(1, w)
    basis = noise.basis(6)
    # w + eps lies in the span of the basis and eps is orthogonal to it
    coef, *_ = np.linalg.lstsq(basis, w + eps, rcond=None)
    np.testing.assert_allclose(basis @ coef, w + eps, atol=1e-10)
    np.testing.assert_allclose(basis.T @ eps, 0.0, atol=1e-10)
    assert not noise.is_exact


def test_zero_amplitude_noise_is_exact():
    assert NoiseModel("uniform_bounded", 0.0).is_exact
    mdp = _mdp(1)
    a = run_lambda_pi(mdp, np.zeros(mdp.n_states), SolverConfig(max_iterations=10), NoiseModel("uniform_bounded", 0.0))
    b = run_lambda_pi(mdp, np.zeros(mdp.n_states), SolverConfig(max_iterations=10))
    for ra, rb in zip(a.records, b.records):
        assert np.array_equal(ra.v, rb.v)


def test_record_decomposition():
    mdp = _mdp(5)
    trace = run_lambda_pi(mdp, np.zeros(mdp.n_states), SolverConfig(lam=0.5, max_iterations=20),
                          NoiseModel("uniform_bounded", 0.05, seed=2))
    assert trace.records[0].pi is None
    for rec in trace.records[1:]:
        np.testing.assert_allclose(rec.loss, rec.distance + rec.shift, atol=1e-10)
        np.testing.assert_allclose(rec.v, rec.w + rec.eps, atol=0)
    for prev, rec in zip(trace.records, trace.records[1:]):
        assert np.array_equal(rec.pi, greedy(mdp, prev.v))


@pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
def test_stopping_rule_certifies_policy(lam):
    mdp = _mdp(9)
    cfg = SolverConfig(lam=lam, stop_epsilon=0.01, max_iterations=500)
    trace = run_lambda_pi(mdp, np.zeros(mdp.n_states), cfg)
    assert trace.terminal == "converged"
    assert span_inf(trace.last.b) <= stop_threshold(mdp.gamma, 0.01)
    assert stopping_test(mdp, trace.last.v, 0.01)
    assert trace.final_loss() < 0.01


def test_budget_exhaustion():
    mdp = _mdp(9, gamma=0.99)
    trace = run_lambda_pi(mdp, np.zeros(mdp.n_states), SolverConfig(lam=0.0, stop_epsilon=1e-9, max_iterations=3))
    assert trace.terminal == "budget"
    assert len(trace) == 4


def test_counterexample_lambda_one_converges_in_two_steps():
    mdp = counterexample_mdp()
    trace = run_lambda_pi(mdp, np.zeros(2), SolverConfig(lam=1.0, stop_epsilon=0.01))
    assert trace.terminal == "converged"
    assert trace.final_loss() == 0.0


def test_tail_limsup():
    mdp = _mdp(1)
    trace = run_lambda_pi(mdp, np.zeros(mdp.n_states), SolverConfig(max_iterations=30, stop_rule="none"))
    f = lambda r: float(np.abs(r.v).max())  # noqa: E731
    assert tail_limsup(trace, 5, f) == max(f(r) for r in trace.records[-5:])
    with pytest.raises(ValueError):
        tail_limsup(trace, 0, f)
    with pytest.raises(ValueError):
        tail_limsup(trace, 100, f)


def test_stack_marks_undefined_as_nan():
    mdp = _mdp(1)
    trace = run_lambda_pi(mdp, np.zeros(mdp.n_states), SolverConfig(max_iterations=3, stop_rule="none"))
    L = trace.stack("loss")
    assert np.isnan(L[0]).all() and np.isfinite(L[1:]).all()
