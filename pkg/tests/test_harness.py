import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lambdapi import (
    ExperimentSpec,
    GeneratorSpec,
    NoiseModel,
    SolverConfig,
    counterexample_mdp,
    default_campaign,
    lambda_sweep,
    noncontraction_witness,
    random_mdp,
    run_experiment,
)
from lambdapi.harness import RECORD_FIELDS


@given(st.integers(1, 8), st.integers(1, 4), st.data())
def test_generator_is_valid_and_deterministic(n, m, data):
    b = data.draw(st.integers(1, n))
    seed = data.draw(st.integers(0, 10**6))
    spec = GeneratorSpec(n, m, b, seed=seed)
    a, c = random_mdp(spec), random_mdp(spec)
    assert np.array_equal(a.transitions, c.transitions) and np.array_equal(a.rewards, c.rewards)
    np.testing.assert_allclose(a.transitions.sum(axis=2), 1.0, atol=1e-12)
    assert ((a.transitions > 0).sum(axis=2) == b).all()
    assert (a.rewards >= 0).all()


def test_generator_validation():
    with pytest.raises(ValueError, match="branching"):
        GeneratorSpec(n_states=3, branching=4)


@pytest.mark.parametrize("lam", [0.25, 0.5, 0.75, 1.0])
def test_witness_ratio_matches_constant_difference(lam):
    w = noncontraction_witness(lam, 0.9, 1e-3)
    d = w["diff_out"]
    assert d[0] == pytest.approx(d[1], rel=1e-9)
    assert w["ratio"] == pytest.approx(w["predicted_ratio"], rel=1e-9)
    assert w["ratio"] > 1.0


def test_witness_value_at_one_half():
    assert noncontraction_witness(0.5, 0.9, 1e-3)["ratio"] == pytest.approx(818.1818181818, rel=1e-9)


def test_witness_contracts_for_value_iteration():
    assert noncontraction_witness(0.0, 0.9, 1e-3)["ratio"] <= 0.9


def test_experiment_records_are_sorted_and_complete():
    spec = ExperimentSpec(
        generator=GeneratorSpec(seed=3),
        lambdas=(1.0, 0.0),
        gammas=(0.9, 0.5),
        noise=NoiseModel("uniform_bounded", 0.01),
        solver=SolverConfig(max_iterations=40, stop_rule="none"),
        checks=("th.3", "spapi.6"),
        replications=2,
    )
    recs = run_experiment(spec)
    assert len(recs) == 2 * 2 * 2 * 2
    keys = [(r["replication"], r["lambda"], r["gamma"], r["bound_id"]) for r in recs]
    assert keys == sorted(keys)
    assert all(set(r) == set(RECORD_FIELDS) for r in recs)
    assert all(r["satisfied"] for r in recs)
    assert {r["seed"] for r in recs} == {3, 4}


def test_experiment_errors_are_recorded():
    spec = ExperimentSpec(
        generator=GeneratorSpec(seed=0),
        lambdas=(0.5,),
        gammas=(0.9,),
        solver=SolverConfig(max_iterations=3, stop_rule="none"),
        checks=("th.1",),
        window=20,
    )
    recs = run_experiment(spec)
    assert len(recs) == 1 and not recs[0]["satisfied"] and recs[0]["error"]


def test_experiment_validation():
    with pytest.raises(KeyError, match="valid ids"):
        ExperimentSpec(checks=("bogus",))
    with pytest.raises(ValueError, match=r"lambda out of \[0,1\]"):
        ExperimentSpec(lambdas=(1.2,))


def test_default_campaign_shapes():
    exact = default_campaign(0.0)
    noisy = default_campaign(0.01)
    assert exact.replications == 20 and len(exact.lambdas) == 5 and len(exact.gammas) == 2
    assert "thexact.1" in exact.checks and "thexact.1" not in noisy.checks
    assert noisy.solver.max_iterations == 200


def test_lambda_sweep_counts():
    mdp = counterexample_mdp()
    rows = lambda_sweep(mdp, [0.0], SolverConfig(inner_mode="mk", stop_epsilon=0.01))
    lam, outer, inner, loss = rows[0]
    assert inner == outer
    rows = lambda_sweep(mdp, [1.0], SolverConfig(inner_mode="dense", stop_epsilon=0.01))
    assert rows[0][2] == 0
    with pytest.raises(ValueError):
        lambda_sweep(mdp, [])


def test_lambda_sweep_is_deterministic():
    mdp = random_mdp(GeneratorSpec(seed=5))
    cfg = SolverConfig(inner_mode="mk", stop_epsilon=0.01)
    assert lambda_sweep(mdp, [0.0, 0.5, 0.9], cfg) == lambda_sweep(mdp, [0.0, 0.5, 0.9], cfg)
