"""Iteration drivers: value, policy, modified policy and lambda policy iteration.

Every driver returns an :class:`IterationTrace` with one
:class:`IterationRecord` per iterate. Index conventions follow the algorithm
statements: for value iteration and lambda policy iteration, record ``k``
holds ``v_k`` and the policy ``pi_k = greedy(v_{k-1})`` that produced it
(``pi_0`` is undefined). For policy iteration, record ``k`` holds ``pi_k``
and ``v_k = v^{pi_k} + eps_k`` with ``pi_0`` the starting policy.

With these conventions ``run_lambda_pi(lam=1).records[k + 1]`` and
``run_policy_iteration(pi0=greedy(v0)).records[k]`` describe the same
iterate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mdp import (
    Mdp,
    apply_bellman_policy,
    apply_tlambda,
    as_policy,
    evaluate_policy,
    greedy_backup,
    mk_fixed_point,
    optimal_value,
)
from .seminorms import span_inf

__all__ = [
    "SolverConfig",
    "NoiseModel",
    "IterationRecord",
    "IterationTrace",
    "run_value_iteration",
    "run_policy_iteration",
    "run_modified_policy_iteration",
    "run_lambda_pi",
    "tail_limsup",
    "stop_threshold",
]

INNER_MODES = ("dense", "mk")
STOP_RULES = ("span", "none")
NOISE_KINDS = ("none", "uniform_bounded", "gaussian_clipped", "rank_projection")


@dataclass(frozen=True)
class SolverConfig:
    """Settings shared by the iteration drivers.

    Parameters
    ----------
    lam : float
        The lambda of lambda policy iteration, in [0, 1].
    max_iterations : int
        Budget of outer iterations.
    stop_epsilon : float
        Target suboptimality of the greedy policy when ``stop_rule="span"``.
    inner_mode : {"dense", "mk"}
        Compute ``T_lambda`` by a dense solve or by iterating ``M_k``.
    inner_tol : float
        Tolerance of the ``M_k`` iteration.
    mpi_steps : int
        Number of ``T^pi`` applications per modified policy iteration step.
    seed : int
        Seed recorded in the trace; noise seeds live on :class:`NoiseModel`.
    stop_rule : {"span", "none"}
        ``"none"`` always spends the full budget.
    """

    lam: float = 0.5
    max_iterations: int = 200
    stop_epsilon: float = 1e-6
    inner_mode: str = "dense"
    inner_tol: float = 1e-12
    mpi_steps: int = 1
    seed: int = 0
    stop_rule: str = "span"

    def __post_init__(self):
        lam = float(self.lam)
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f"lambda out of [0,1]: {lam}")
        object.__setattr__(self, "lam", lam)
        if int(self.max_iterations) < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.stop_epsilon > 0:
            raise ValueError("stop_epsilon must be positive")
        if self.inner_mode not in INNER_MODES:
            raise ValueError(f"inner_mode must be one of {INNER_MODES}")
        if not self.inner_tol > 0:
            raise ValueError("inner_tol must be positive")
        if int(self.mpi_steps) < 1:
            raise ValueError("mpi_steps must be at least 1")
        if self.stop_rule not in STOP_RULES:
            raise ValueError(f"stop_rule must be one of {STOP_RULES}")


@dataclass(frozen=True)
class NoiseModel:
    """Generator of the approximation errors ``eps_k``.

    Noise at iteration ``k`` comes from a Philox stream keyed by ``seed``
    whose counter is offset by ``k``, so it does not depend on the path the
    iteration took before ``k``.

    Parameters
    ----------
    kind : {"none", "uniform_bounded", "gaussian_clipped", "rank_projection"}
    amplitude : float
        Bound on ``|eps_k|_inf`` for the two random kinds.
    rank : int
        Number of random basis vectors for ``rank_projection``; the constant
        vector is always added to the basis.
    seed : int
    """

    kind: str = "none"
    amplitude: float = 0.0
    rank: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if not (self.amplitude >= 0 and math.isfinite(self.amplitude)):
            raise ValueError("noise amplitude must be finite and nonnegative")
        if int(self.rank) < 0:
            raise ValueError("rank must be nonnegative")
        if int(self.seed) < 0:
            raise ValueError("noise seed must be nonnegative")

    @property
    def is_exact(self) -> bool:
        if self.kind == "none":
            return True
        if self.kind == "rank_projection":
            return False
        return self.amplitude == 0.0

    def _rng(self, k: int, stream: int = 0) -> np.random.Generator:
        # draws advance counter word 0, so k and stream sit in the high words
        bitgen = np.random.Philox(key=int(self.seed), counter=[0, 0, int(stream), int(k)])
        return np.random.Generator(bitgen)

    def basis(self, n_states: int) -> np.ndarray:
        """Fixed projection basis ``[e, phi_1, ..., phi_rank]``."""
        phi = self._rng(0, stream=1).standard_normal((n_states, int(self.rank)))
        return np.column_stack([np.ones(n_states), phi])

    def sample(self, k: int, w: np.ndarray) -> np.ndarray:
        """Error ``eps_k`` added to the pre-noise iterate ``w``."""
        n = w.shape[0]
        if self.kind == "none":
            return np.zeros(n)
        if self.kind == "rank_projection":
            basis = self.basis(n)
            coef, *_ = np.linalg.lstsq(basis, w, rcond=None)
            return basis @ coef - w
        if self.amplitude == 0.0:
            return np.zeros(n)
        rng = self._rng(k)
        if self.kind == "uniform_bounded":
            return rng.uniform(-self.amplitude, self.amplitude, n)
        draw = rng.normal(0.0, self.amplitude / 3.0, n)
        return np.clip(draw, -self.amplitude, self.amplitude)


NO_NOISE = NoiseModel()


@dataclass(frozen=True, eq=False)
class IterationRecord:
    """One iterate and the quantities derived from it.

    ``b`` is ``T v - v`` and ``b_policy`` is ``T^{pi_k} v - v``. ``loss``,
    ``shift`` and ``b_policy`` are ``None`` when ``pi`` is undefined.
    """

    k: int
    v: np.ndarray
    pi: np.ndarray | None
    eps: np.ndarray
    w: np.ndarray
    b: np.ndarray
    b_policy: np.ndarray | None
    loss: np.ndarray | None
    distance: np.ndarray
    shift: np.ndarray | None
    inner_iterations: int = 0


@dataclass(eq=False)
class IterationTrace:
    """Output of an iteration driver.

    Attributes
    ----------
    records : list of IterationRecord
    mdp : Mdp
    v_star, pi_star : arrays
        Optimal value and policy from exact policy iteration.
    lam : float
        The lambda used (0 for value iteration, 1 for policy iteration).
    algorithm : str
    terminal : {"converged", "budget"}
    final_policy : array
        Greedy policy with respect to the last iterate.
    noise : NoiseModel
    config : SolverConfig
    """

    records: list
    mdp: Mdp
    v_star: np.ndarray
    pi_star: np.ndarray
    lam: float
    algorithm: str
    terminal: str
    final_policy: np.ndarray
    noise: NoiseModel
    config: SolverConfig
    cache: dict = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def last(self) -> IterationRecord:
        return self.records[-1]

    @property
    def is_exact(self) -> bool:
        return self.noise.is_exact

    def stack(self, name: str) -> np.ndarray:
        """Stack one record attribute into an array; undefined entries become NaN."""
        n = self.mdp.n_states
        rows = []
        for rec in self.records:
            x = getattr(rec, name)
            rows.append(np.full(n, np.nan) if x is None else np.asarray(x, dtype=float))
        return np.vstack(rows)

    def max_norm_losses(self) -> np.ndarray:
        return np.array(
            [np.nan if r.loss is None else float(np.max(np.abs(r.loss))) for r in self.records]
        )

    def final_loss(self) -> float:
        """``|v_* - v^{greedy(v_K)}|_inf``."""
        return float(np.max(np.abs(self.v_star - evaluate_policy(self.mdp, self.final_policy))))


def stop_threshold(gamma: float, epsilon: float) -> float:
    """Span threshold on ``T v - v`` that certifies an ``epsilon``-optimal greedy policy."""
    return (1.0 - gamma) / gamma * epsilon


def _make_record(mdp, v_star, k, v, pi, eps, w, inner=0):
    pi_next, tv = greedy_backup(mdp, v)
    b = tv - v
    if pi is None:
        b_policy = loss = shift = None
    else:
        v_pi = evaluate_policy(mdp, pi)
        b_policy = apply_bellman_policy(mdp, pi, v) - v
        loss = v_star - v_pi
        shift = w - v_pi
    rec = IterationRecord(
        k=k,
        v=v,
        pi=pi,
        eps=eps,
        w=w,
        b=b,
        b_policy=b_policy,
        loss=loss,
        distance=v_star - w,
        shift=shift,
        inner_iterations=inner,
    )
    return rec, pi_next


def _should_stop(mdp, rec, config) -> bool:
    if config.stop_rule == "none":
        return False
    return span_inf(rec.b) <= stop_threshold(mdp.gamma, config.stop_epsilon)


def _drive(mdp, v0, config, noise, step, lam, algorithm):
    """Shared loop for the drivers that start from a value function."""
    v_star, pi_star = optimal_value(mdp)
    v = np.array(v0, dtype=float)
    if v.shape != (mdp.n_states,) or not np.all(np.isfinite(v)):
        raise ValueError(f"v0 must be a finite vector of length {mdp.n_states}")
    zeros = np.zeros(mdp.n_states)
    rec, pi_next = _make_record(mdp, v_star, 0, v, None, zeros, v.copy())
    records = [rec]
    terminal = "budget"
    for k in range(1, config.max_iterations + 1):
        if _should_stop(mdp, rec, config):
            terminal = "converged"
            break
        w, inner = step(rec.v, pi_next)
        eps = noise.sample(k, w)
        rec, pi_next = _make_record(mdp, v_star, k, w + eps, pi_next, eps, w, inner)
        records.append(rec)
    else:
        if _should_stop(mdp, rec, config):
            terminal = "converged"
    return IterationTrace(
        records=records,
        mdp=mdp,
        v_star=v_star,
        pi_star=pi_star,
        lam=lam,
        algorithm=algorithm,
        terminal=terminal,
        final_policy=pi_next,
        noise=noise,
        config=config,
    )


def run_value_iteration(
    mdp: Mdp, v0, config: SolverConfig = SolverConfig(), noise: NoiseModel = NO_NOISE
) -> IterationTrace:
    """Value iteration ``v_{k+1} = T v_k + eps_{k+1}``; ``config.lam`` is ignored."""

    def step(v, pi):
        # T v evaluated along the greedy path, identical to greedy_backup
        return apply_bellman_policy(mdp, pi, v), 0

    return _drive(mdp, v0, config, noise, step, 0.0, "vi")


def run_lambda_pi(
    mdp: Mdp, v0, config: SolverConfig = SolverConfig(), noise: NoiseModel = NO_NOISE
) -> IterationTrace:
    """Lambda policy iteration ``v_{k+1} = T_lambda^{pi_{k+1}} v_k + eps_{k+1}``.

    With ``config.inner_mode == "mk"`` the backup is computed as the fixed
    point of ``M_k`` and the inner iteration counts are recorded.
    """
    lam = config.lam

    def step(v, pi):
        if config.inner_mode == "dense":
            return apply_tlambda(mdp, pi, lam, v, form=3), 0
        u, iters, _ = mk_fixed_point(mdp, pi, lam, v, tol=config.inner_tol)
        return u, iters

    return _drive(mdp, v0, config, noise, step, lam, "lpi")


def run_modified_policy_iteration(
    mdp: Mdp, v0, config: SolverConfig = SolverConfig(), noise: NoiseModel = NO_NOISE
) -> IterationTrace:
    """Modified policy iteration ``v_{k+1} = (T^{pi_{k+1}})^n v_k`` with ``n = config.mpi_steps``."""
    n = int(config.mpi_steps)

    def step(v, pi):
        u = v
        for _ in range(n):
            u = apply_bellman_policy(mdp, pi, u)
        return u, n

    return _drive(mdp, v0, config, noise, step, float("nan"), "mpi")


def run_policy_iteration(
    mdp: Mdp, pi0, config: SolverConfig = SolverConfig(), noise: NoiseModel = NO_NOISE
) -> IterationTrace:
    """Policy iteration ``v_k = v^{pi_k} + eps_k``, ``pi_{k+1} = greedy(v_k)``.

    Stops when the span test passes (exact evaluations give a zero residual
    once the policy is stable) or when the budget runs out.
    """
    v_star, pi_star = optimal_value(mdp)
    pi = as_policy(mdp, pi0)
    records = []
    terminal = "budget"
    for k in range(0, config.max_iterations + 1):
        w = evaluate_policy(mdp, pi)
        eps = noise.sample(k, w)
        rec, pi_next = _make_record(mdp, v_star, k, w + eps, pi, eps, w)
        records.append(rec)
        if _should_stop(mdp, rec, config):
            terminal = "converged"
            break
        pi = pi_next
    return IterationTrace(
        records=records,
        mdp=mdp,
        v_star=v_star,
        pi_star=pi_star,
        lam=1.0,
        algorithm="pi",
        terminal=terminal,
        final_policy=pi_next,
        noise=noise,
        config=config,
    )


def tail_limsup(trace: IterationTrace, window: int, f: Callable[[IterationRecord], float]) -> float:
    """Maximum of ``f`` over the last ``window`` records, a finite stand-in for limsup."""
    window = int(window)
    if window < 1:
        raise ValueError("window must be at least 1")
    if len(trace.records) < window:
        raise ValueError(f"trace has {len(trace.records)} records, shorter than window {window}")
    return max(float(f(rec)) for rec in trace.records[-window:])
