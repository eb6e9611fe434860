"""Problem generators and experiment campaigns.

A campaign crosses lambdas, discount factors and replications, runs lambda
policy iteration on each generated problem, and evaluates a list of bound
checks on the resulting trace. The output is a flat table with one record
per (run, bound id), sorted canonically so that it is byte-for-byte
reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .bounds import BOUND_IDS, run_checks
from .mdp import Mdp, apply_tlambda, greedy
from .seminorms import SeminormSpec
from .solvers import NoiseModel, SolverConfig, run_lambda_pi

__all__ = [
    "GeneratorSpec",
    "ExperimentSpec",
    "random_mdp",
    "counterexample_mdp",
    "noncontraction_witness",
    "run_experiment",
    "default_campaign",
    "lambda_sweep",
    "CHANGE",
    "STAY",
    "RECORD_FIELDS",
]

CHANGE, STAY = 0, 1


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters of :func:`random_mdp`.

    ``branching`` successor states are drawn per (state, action); rewards
    are uniform on ``[0, reward_scale]``.
    """

    n_states: int = 6
    n_actions: int = 3
    branching: int = 3
    reward_scale: float = 1.0
    seed: int = 0
    gamma: float = 0.9

    def __post_init__(self):
        if self.n_states < 1 or self.n_actions < 1:
            raise ValueError("n_states and n_actions must be positive")
        if not 1 <= self.branching <= self.n_states:
            raise ValueError(
                f"branching must lie in [1, n_states={self.n_states}], got {self.branching}"
            )
        if not self.reward_scale >= 0:
            raise ValueError("reward_scale must be nonnegative")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


def random_mdp(spec: GeneratorSpec) -> Mdp:
    """Random sparse MDP, deterministic in ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    n, m, b = spec.n_states, spec.n_actions, spec.branching
    p = np.zeros((m, n, n))
    for a in range(m):
        for i in range(n):
            succ = rng.choice(n, size=b, replace=False)
            w = rng.uniform(size=b) + 1e-3  # keep every chosen successor reachable
            p[a, i, succ] = w / w.sum()
    # exact renormalization so rows sum to one within a few ulps
    p /= p.sum(axis=2, keepdims=True)
    r = rng.uniform(0.0, spec.reward_scale, size=(n, m, n))
    return Mdp(p, r, spec.gamma)


def counterexample_mdp(gamma: float = 0.9) -> Mdp:
    """Two-state, two-action MDP on which ``T_lambda`` expands distances.

    State 0 pays 0 and state 1 pays 1. Action ``CHANGE`` moves to the other
    state and ``STAY`` stays put.
    """
    change = np.array([[0.0, 1.0], [1.0, 0.0]])
    stay = np.eye(2)
    return Mdp.from_state_rewards(np.stack([change, stay]), [0.0, 1.0], gamma)


def noncontraction_witness(lam: float, gamma: float = 0.9, eps: float = 1e-3) -> dict:
    """Evaluate ``T_lambda`` at ``v = (eps, 0)`` and ``v' = (0, eps)`` on the counterexample.

    Each point is backed up with its own greedy policy, as in one step of
    lambda policy iteration.

    Returns
    -------
    dict
        ``v``, ``v_prime``, their greedy policies, the two backups, the
        input and output differences, and the max-norm expansion ratio.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    mdp = counterexample_mdp(gamma)
    v = np.array([eps, 0.0])
    vp = np.array([0.0, eps])
    pi, pip = greedy(mdp, v), greedy(mdp, vp)
    tv = apply_tlambda(mdp, pi, lam, v)
    tvp = apply_tlambda(mdp, pip, lam, vp)
    diff_in = vp - v
    diff_out = tvp - tv
    ratio = float(np.max(np.abs(diff_out)) / np.max(np.abs(diff_in)))
    return dict(
        mdp=mdp,
        lam=float(lam),
        gamma=float(gamma),
        eps=float(eps),
        v=v,
        v_prime=vp,
        pi=pi,
        pi_prime=pip,
        t_v=tv,
        t_v_prime=tvp,
        diff_in=diff_in,
        diff_out=diff_out,
        ratio=ratio,
        predicted_ratio=(1.0 / (1.0 - lam * gamma) - 1.0) / eps if lam > 0 else math.nan,
    )


@dataclass(frozen=True)
class ExperimentSpec:
    """A campaign: problems x lambdas x gammas x replications, plus checks.

    Parameters
    ----------
    generator : GeneratorSpec or "counterexample"
        Problem source; the replication index is added to the seed.
    lambdas, gammas : tuples of float
    noise : NoiseModel
        Its seed is offset by the replication index.
    solver : SolverConfig
        Its ``lam`` is overridden by each entry of ``lambdas``.
    checks : tuple of str
        Bound ids to evaluate; empty means metadata only.
    replications : int
    window : int
        Trailing window of the asymptotic checks.
    k_max : int
        Largest ``k`` of the exact-rate pair sweep.
    p : float
        Exponent of the weighted span bounds (uniform weights).
    """

    generator: GeneratorSpec | str = field(default_factory=GeneratorSpec)
    lambdas: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    gammas: tuple = (0.5, 0.9)
    noise: NoiseModel = field(default_factory=NoiseModel)
    solver: SolverConfig = field(
        default_factory=lambda: SolverConfig(max_iterations=60, stop_rule="none")
    )
    checks: tuple = ()
    replications: int = 1
    window: int = 20
    k_max: int = 30
    p: float = 2.0

    def __post_init__(self):
        if not self.lambdas or not self.gammas:
            raise ValueError("lambdas and gammas must be non-empty")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if isinstance(self.generator, str) and self.generator != "counterexample":
            raise ValueError(f"unknown fixture {self.generator!r}")
        object.__setattr__(self, "lambdas", tuple(float(x) for x in self.lambdas))
        object.__setattr__(self, "gammas", tuple(float(x) for x in self.gammas))
        object.__setattr__(self, "checks", tuple(self.checks))
        bad = [c for c in self.checks if c not in BOUND_IDS]
        if bad:
            raise KeyError(f"unknown bound ids {bad}; valid ids: {', '.join(BOUND_IDS)}")
        for lam in self.lambdas:
            if not 0.0 <= lam <= 1.0:
                raise ValueError(f"lambda out of [0,1]: {lam}")


RECORD_FIELDS = (
    "replication",
    "lambda",
    "gamma",
    "seed",
    "bound_id",
    "applicable",
    "satisfied",
    "slack",
    "lhs_norm",
    "rhs_norm",
    "k0",
    "k",
    "terminal",
    "iterations",
    "final_loss",
    "error",
)


def _norm(x) -> float:
    x = np.asarray(x, dtype=float)
    if x.size == 0 or np.all(np.isnan(x)):
        return math.nan
    return float(np.max(np.abs(x)))


def _problem(spec: ExperimentSpec, rep: int, gamma: float) -> tuple[Mdp, int]:
    if spec.generator == "counterexample":
        return counterexample_mdp(gamma), rep
    gen = replace(spec.generator, seed=spec.generator.seed + rep, gamma=gamma)
    return random_mdp(gen), gen.seed


def run_experiment(spec: ExperimentSpec) -> list[dict]:
    """Run every (replication, lambda, gamma) combination and evaluate the checks.

    A run that raises is recorded with its error message and
    ``satisfied=False`` instead of aborting the campaign.
    """
    records = []
    for rep in range(spec.replications):
        for lam in spec.lambdas:
            for gamma in spec.gammas:
                records += _one_run(spec, rep, lam, gamma)
    records.sort(key=lambda r: (r["replication"], r["lambda"], r["gamma"], r["bound_id"]))
    return records


def _one_run(spec, rep, lam, gamma):
    base = dict(replication=rep, **{"lambda": lam}, gamma=gamma)
    try:
        mdp, seed = _problem(spec, rep, gamma)
        base["seed"] = seed
        config = replace(spec.solver, lam=lam, seed=seed)
        noise = replace(spec.noise, seed=spec.noise.seed + rep)
        trace = run_lambda_pi(mdp, np.zeros(mdp.n_states), config, noise)
        meta = dict(
            terminal=trace.terminal,
            iterations=len(trace) - 1,
            final_loss=trace.final_loss(),
            error="",
        )
        if not spec.checks:
            return [dict(base, bound_id="", applicable=True, satisfied=True, slack=math.nan,
                         lhs_norm=math.nan, rhs_norm=math.nan, k0=-1, k=-1, **meta)]
        sspec = SeminormSpec.uniform(mdp.n_states, spec.p)
        nu = np.full(mdp.n_states, 1.0 / mdp.n_states)
        reports = run_checks(trace, spec.checks, sspec, nu, spec.window, spec.k_max)
        out = []
        for r in reports:
            out.append(
                dict(
                    base,
                    bound_id=r.bound_id,
                    applicable=r.applicable,
                    satisfied=r.satisfied,
                    slack=r.slack,
                    lhs_norm=_norm(r.lhs),
                    rhs_norm=_norm(r.rhs),
                    k0=-1 if r.k0 is None else r.k0,
                    k=-1 if r.k is None else r.k,
                    **meta,
                )
            )
        return out
    except Exception as exc:  # recorded, the campaign goes on
        base.setdefault("seed", -1)
        ids = spec.checks or ("",)
        return [
            dict(base, bound_id=i, applicable=True, satisfied=False, slack=math.nan,
                 lhs_norm=math.nan, rhs_norm=math.nan, k0=-1, k=-1, terminal="error",
                 iterations=-1, final_loss=math.nan, error=f"{type(exc).__name__}: {exc}")
            for i in ids
        ]


def default_campaign(noise_amplitude: float = 0.0, replications: int = 20, seed: int = 0) -> ExperimentSpec:
    """Five lambdas, two discounts, every applicable check.

    Exact campaigns (zero amplitude) run 40 iterations and sweep the
    exact-rate pairs up to ``k = 30``; noisy campaigns run 200 iterations
    with uniform errors and a 20-iteration tail window.
    """
    exact = noise_amplitude == 0.0
    noise = NoiseModel("none") if exact else NoiseModel("uniform_bounded", noise_amplitude, seed=seed)
    iters = 40 if exact else 200
    checks = tuple(BOUND_IDS) if exact else tuple(
        i for i in BOUND_IDS if not i.startswith(("thexact", "croclpi"))
    )
    return ExperimentSpec(
        generator=GeneratorSpec(seed=seed),
        lambdas=(0.0, 0.25, 0.5, 0.75, 1.0),
        gammas=(0.5, 0.9),
        noise=noise,
        solver=SolverConfig(max_iterations=iters, stop_rule="none"),
        checks=checks,
        replications=replications,
    )


def lambda_sweep(mdp: Mdp, lambdas, config: SolverConfig = SolverConfig(), noise: NoiseModel = NoiseModel()):
    """Outer and inner iteration counts of lambda policy iteration across lambdas.

    Returns
    -------
    list of tuple
        ``(lam, outer_iterations, inner_iterations_total, final_loss)`` per
        lambda, where ``final_loss`` is ``|v_* - v^{greedy(v_K)}|_inf``.
    """
    lambdas = list(lambdas)
    if not lambdas:
        raise ValueError("lambdas must be non-empty")
    rows = []
    for lam in lambdas:
        trace = run_lambda_pi(mdp, np.zeros(mdp.n_states), replace(config, lam=float(lam)), noise)
        inner = sum(r.inner_iterations for r in trace.records)
        rows.append((float(lam), len(trace) - 1, int(inner), trace.final_loss()))
    return rows

