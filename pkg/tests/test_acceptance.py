"""Acceptance suite: ten end-to-end criteria at their stated tolerances.

Each test prints one ``PASS`` or ``FAIL`` line. Run on its own with
``pytest tests/test_acceptance.py -v`` (the lines are printed even when
output capture is on).
"""

import json
from contextlib import contextmanager
from itertools import combinations

import numpy as np
import pytest

from lambdapi import (
    GeneratorSpec,
    NoiseModel,
    SeminormSpec,
    SolverConfig,
    apply_tlambda,
    appendix_c_violations,
    approx_bound_matrices,
    check_approx_bounds,
    convergence_case_matrices,
    evaluate_policy,
    exact_rate_matrices,
    exact_rate_sweep,
    random_mdp,
    matrix_A,
    noncontraction_witness,
    optimal_value,
    run_lambda_pi,
    run_value_iteration,
    seminorm_bound_suite,
)
from lambdapi.bounds import CALPI_IDS, SPAPI_IDS, is_row_stochastic
from lambdapi.cli import main as cli_main
from lambdapi.io import experiment_to_dict
from lambdapi.harness import ExperimentSpec

from . import oracles

LAMBDAS = (0.0, 0.25, 0.5, 0.75, 1.0)
GAMMAS = (0.5, 0.9)
TRACES = {"exact": [], "noisy": []}  # shared with criterion 8


@contextmanager
def criterion(capsys, number, title):
    with capsys.disabled():
        try:
            yield
        except AssertionError as exc:
            first = str(exc).strip().splitlines()[0] if str(exc).strip() else ""
            print(f"\nFAIL criterion {number}: {title}  [{first}]")
            raise
        print(f"\nPASS criterion {number}: {title}")


def _random_mdp(rng, max_states=20, max_actions=5, gamma=None):
    n = int(rng.integers(1, max_states + 1))
    m = int(rng.integers(1, max_actions + 1))
    b = int(rng.integers(1, n + 1))
    g = float(rng.uniform(0.1, 0.99)) if gamma is None else gamma
    return random_mdp(GeneratorSpec(n, m, b, seed=int(rng.integers(2**31)), gamma=g))


def _exact_traces():
    if not TRACES["exact"]:
        for seed in range(20):
            for lam in LAMBDAS:
                for gamma in GAMMAS:
                    mdp = random_mdp(GeneratorSpec(seed=seed, gamma=gamma))
                    cfg = SolverConfig(lam=lam, max_iterations=30, stop_rule="none")
                    TRACES["exact"].append(((seed, lam, gamma), run_lambda_pi(mdp, np.zeros(mdp.n_states), cfg)))
    return TRACES["exact"]


def _noisy_traces():
    if not TRACES["noisy"]:
        for amp in (0.001, 0.01):
            for seed in range(50):
                lam = LAMBDAS[seed % 5]
                gamma = GAMMAS[(seed // 5) % 2]
                mdp = random_mdp(GeneratorSpec(seed=seed, gamma=gamma))
                cfg = SolverConfig(lam=lam, max_iterations=200, stop_rule="none")
                noise = NoiseModel("uniform_bounded", amp, seed=seed)
                trace = run_lambda_pi(mdp, np.zeros(mdp.n_states), cfg, noise)
                TRACES["noisy"].append(((seed, lam, gamma, amp), trace))
    return TRACES["noisy"]


def test_criterion_01_operator_forms(capsys):
    with criterion(capsys, 1, "four T_lambda forms agree within 1e-10 relative on 200 draws"):
        rng = np.random.default_rng(1)
        worst = 0.0
        for _ in range(200):
            mdp = _random_mdp(rng)
            pi = rng.integers(0, mdp.n_actions, mdp.n_states)
            lam = float(rng.uniform())
            v = rng.normal(scale=10.0, size=mdp.n_states)
            outs = [apply_tlambda(mdp, pi, lam, v, form=f) for f in (1, 2, 3, 4)]
            scale = max(np.abs(o).max() for o in outs)
            for a, b in combinations(outs, 2):
                worst = max(worst, np.abs(a - b).max() / scale)
        assert worst <= 1e-10, f"worst relative gap {worst:.3g}"


def test_criterion_02_endpoint_reduction(capsys):
    with criterion(capsys, 2, "lambda=0 equals VI exactly; lambda=1 iterates are policy values (50 MDPs)"):
        rng = np.random.default_rng(2)
        for _ in range(50):
            mdp = _random_mdp(rng)
            v0 = rng.normal(size=mdp.n_states)
            cfg = SolverConfig(max_iterations=30, stop_rule="none")
            a = run_lambda_pi(mdp, v0, SolverConfig(lam=0.0, max_iterations=30, stop_rule="none"))
            b = run_value_iteration(mdp, v0, cfg)
            assert len(a) == len(b)
            assert all(np.array_equal(x.v, y.v) for x, y in zip(a.records, b.records)), "lambda=0 differs from VI"
            c = run_lambda_pi(mdp, v0, SolverConfig(lam=1.0, max_iterations=30, stop_rule="none"))
            for rec in c.records[1:]:
                ref = evaluate_policy(mdp, rec.pi)
                assert np.abs(rec.v - ref).max() <= 1e-9 * max(1.0, np.abs(ref).max())


def test_criterion_03_stochastic_matrices(capsys):
    with criterion(capsys, 3, "every bound matrix family is row-stochastic on 100 configurations"):
        rng = np.random.default_rng(3)
        families = 0
        for _ in range(100):
            mdp = _random_mdp(rng, gamma=float(rng.choice([0.5, 0.9, 0.99])))
            lam = float(rng.choice([0.0, 1.0, rng.uniform()]))
            noise = NoiseModel("uniform_bounded", float(rng.uniform(0, 0.5)), seed=int(rng.integers(1000)))
            trace = run_lambda_pi(mdp, np.zeros(mdp.n_states),
                                  SolverConfig(lam=lam, max_iterations=12, stop_rule="none"), noise)
            K = len(trace) - 1
            j = int(rng.integers(1, K - 1))
            k = int(rng.integers(j + 1, K))
            mats = {}
            mats["A"] = matrix_A(mdp, trace.records[k].pi, lam)
            mats["E"], mats["E'"], mats["F"] = exact_rate_matrices(trace, j, k)
            names = ("B", "B'", "C", "C'", "D", "D'")
            mats.update(zip(names, approx_bound_matrices(trace, j, k)))
            names = ("B_v", "D*", "A^pi", "A^pi_jk", "B^pi", "B'^pi")
            mats.update(zip(names, convergence_case_matrices(mdp, trace.last.pi, lam, j, k, trace.pi_star)))
            for name, M in mats.items():
                assert M.min() >= -1e-12, f"{name} has entry {M.min():.3g}"
                assert np.abs(M.sum(axis=1) - 1).max() <= 1e-8, f"{name} row sums off"
                assert is_row_stochastic(M)
                families += 1
        assert families == 100 * 16


def test_criterion_04_exact_rates(capsys):
    with criterion(capsys, 4, "exact-rate and span-rate bounds on exact runs, all (k0, k) with k <= 30"):
        failures = []
        for key, trace in _exact_traces():
            spec = SeminormSpec.uniform(trace.mdp.n_states, 2.0)
            for r in exact_rate_sweep(trace, 30, spec):
                if not r.satisfied:
                    failures.append(f"{r.bound_id} seed={key[0]} lam={key[1]} gamma={key[2]} "
                                    f"k0={r.k0} k={r.k} slack={r.slack:.3g}")
        assert not failures, f"{len(failures)} violations: " + "; ".join(failures)


def test_criterion_05_stopping_guarantee(capsys):
    with criterion(capsys, 5, "span stopping test certifies an 0.01-optimal greedy policy (100 runs)"):
        eps = 0.01
        triggered = 0
        for seed in range(10):
            for lam in LAMBDAS:
                for gamma in GAMMAS:
                    mdp = random_mdp(GeneratorSpec(seed=100 + seed, gamma=gamma))
                    cfg = SolverConfig(lam=lam, max_iterations=80, stop_rule="none", stop_epsilon=eps)
                    trace = run_lambda_pi(mdp, np.zeros(mdp.n_states), cfg)
                    v_star, _ = optimal_value(mdp)
                    thr = (1 - gamma) / gamma * eps
                    for i, rec in enumerate(trace.records):
                        if np.ptp(rec.b) <= thr:
                            triggered += 1
                            pi = trace.records[i + 1].pi if i + 1 < len(trace) else trace.final_policy
                            loss = np.abs(v_star - evaluate_policy(mdp, pi)).max()
                            assert loss < eps, f"seed {seed} lam {lam} gamma {gamma} k {i}: loss {loss:.3g}"
        assert triggered > 0


def test_criterion_06_approximate_bounds(capsys):
    with criterion(capsys, 6, "approximate bounds over a 20-iteration tail, 50 seeds, noise 0.001 and 0.01"):
        failures = []
        for (seed, lam, gamma, amp), trace in _noisy_traces():
            n = trace.mdp.n_states
            reps = list(check_approx_bounds(trace, k0=1, window=20))
            nu = np.full(n, 1.0 / n)
            for p in (1.0, 2.0, 4.0):
                reps += seminorm_bound_suite(trace, SeminormSpec.uniform(n, p), nu, window=20,
                                             ids=SPAPI_IDS + CALPI_IDS)
            for r in reps:
                if not r.satisfied:
                    failures.append(f"{r.bound_id} seed={seed} amp={amp} slack={r.slack:.3g}")
            tail = max(np.abs(rec.loss).max() for rec in trace.records[-20:])
            limit = 2 * gamma * amp / (1 - gamma) ** 2 + 1e-8
            if tail > limit:
                failures.append(f"tail loss seed={seed} amp={amp}: {tail:.3g} > {limit:.3g}")
        assert not failures, "; ".join(failures[:10])


def test_criterion_07_noncontraction(capsys):
    with criterion(capsys, 7, "T_lambda expands distances on the two-state MDP"):
        w = noncontraction_witness(0.5, 0.9, 1e-3)
        assert w["ratio"] > 100
        assert w["ratio"] == pytest.approx((1 / (1 - 0.45) - 1) / 1e-3, rel=1e-9)
        assert noncontraction_witness(0.0, 0.9, 1e-3)["ratio"] <= 0.9


def test_criterion_08_recurrence_identities(capsys):
    with criterion(capsys, 8, "loss-decomposition recurrences at every iteration of suites 4 and 6"):
        worst = {}
        for _, trace in _exact_traces() + _noisy_traces():
            for key, val in appendix_c_violations(trace).items():
                worst[key] = max(worst.get(key, 0.0), val)
        bad = {k: v for k, v in worst.items() if v > 1e-9}
        assert not bad, f"violations {bad}"


def test_criterion_09_oracle(capsys):
    with criterion(capsys, 9, "optimal_value matches policy enumeration on 30 MDPs"):
        rng = np.random.default_rng(9)
        for _ in range(30):
            mdp = _random_mdp(rng, max_states=6, max_actions=3)
            v_star, _ = optimal_value(mdp)
            ref = oracles.enumerate_optimal(mdp)
            assert np.abs(v_star - ref).max() <= 1e-9


def test_criterion_10_determinism(capsys, tmp_path):
    with criterion(capsys, 10, "repeated verify runs give byte-identical CSV"):
        spec = ExperimentSpec(
            generator=GeneratorSpec(seed=4),
            lambdas=(0.0, 0.5, 1.0),
            gammas=(0.9,),
            noise=NoiseModel("uniform_bounded", 0.01),
            solver=SolverConfig(max_iterations=60, stop_rule="none"),
            checks=("th.1", "th.2", "th.3", "stopexact", "spapi.1", "calpi.3"),
            replications=2,
        )
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(experiment_to_dict(spec)))
        outs = []
        for i in range(2):
            out = tmp_path / f"run{i}.csv"
            cli_main(["verify", "--experiment", str(path), "--out", str(out)])
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
        assert outs[0].count(b"\n") == 1 + 2 * 3 * 6
