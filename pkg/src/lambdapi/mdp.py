"""Finite Markov decision processes and their Bellman operators.

Conventions
-----------
``transitions[a, i, j]`` is the probability of moving from state ``i`` to
state ``j`` under action ``a``; ``rewards[i, a, j]`` is the reward collected
on that transition. Policies are integer arrays of length ``n_states`` and
value functions are float arrays of the same length.

Every Bellman backup in this module goes through :func:`_backups`, so the
greedy policy, the optimal backup and the policy backup evaluated at the
greedy policy agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "InvalidPolicyError",
    "NonConvergenceError",
    "LinearSolveError",
    "Mdp",
    "as_policy",
    "policy_transition_matrix",
    "policy_reward",
    "apply_bellman_policy",
    "apply_bellman_optimal",
    "greedy",
    "greedy_backup",
    "evaluate_policy",
    "optimal_value",
    "apply_tlambda",
    "td_increment",
    "mk_apply",
    "mk_fixed_point",
    "solve_checked",
]

STOCHASTIC_ATOL = 1e-12


class InvalidPolicyError(ValueError):
    """Raised when a policy does not fit the MDP it is used with."""


class NonConvergenceError(RuntimeError):
    """Raised when an inner fixed-point iteration exceeds its budget."""


class LinearSolveError(RuntimeError):
    """Raised when a dense solve fails its post-solve residual check."""


@dataclass(frozen=True, eq=False)
class Mdp:
    """A finite discounted MDP.

    Parameters
    ----------
    transitions : array, shape (n_actions, n_states, n_states)
        Row-stochastic transition tensor ``p[a, i, j]``.
    rewards : array, shape (n_states, n_actions, n_states)
        Transition rewards ``r[i, a, j]``.
    gamma : float
        Discount factor, strictly inside (0, 1).
    """

    transitions: np.ndarray
    rewards: np.ndarray
    gamma: float

    def __post_init__(self):
        p = np.array(self.transitions, dtype=float)
        r = np.array(self.rewards, dtype=float)
        if p.ndim != 3 or p.shape[1] != p.shape[2]:
            raise ValueError("transitions must have shape (n_actions, n_states, n_states)")
        n_actions, n_states, _ = p.shape
        if n_states < 1 or n_actions < 1:
            raise ValueError("an MDP needs at least one state and one action")
        if r.shape != (n_states, n_actions, n_states):
            raise ValueError(
                f"rewards must have shape {(n_states, n_actions, n_states)}, got {r.shape}"
            )
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(r))):
            raise ValueError("transitions and rewards must be finite")
        if np.any(p < 0):
            raise ValueError("transition probabilities must be nonnegative")
        row_err = np.max(np.abs(p.sum(axis=2) - 1.0))
        if row_err > STOCHASTIC_ATOL:
            raise ValueError(f"transition rows must sum to 1 (max deviation {row_err:.3g})")
        gamma = float(self.gamma)
        if not 0.0 < gamma < 1.0:
            raise ValueError(f"gamma must lie strictly inside (0, 1), got {gamma}")
        p.flags.writeable = False
        r.flags.writeable = False
        object.__setattr__(self, "transitions", p)
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "gamma", gamma)

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_states(self) -> int:
        return self.transitions.shape[1]

    @cached_property
    def expected_rewards(self) -> np.ndarray:
        """One-step expected reward table, shape (n_actions, n_states)."""
        out = np.einsum("aij,iaj->ai", self.transitions, self.rewards)
        out.flags.writeable = False
        return out

    @classmethod
    def from_state_rewards(cls, transitions, state_rewards, gamma) -> "Mdp":
        """Build an MDP whose reward only depends on the current state."""
        p = np.asarray(transitions, dtype=float)
        n_actions, n_states, _ = p.shape
        r_state = np.asarray(state_rewards, dtype=float)
        if r_state.shape != (n_states,):
            raise ValueError(f"state_rewards must have length {n_states}")
        r = np.broadcast_to(r_state[:, None, None], (n_states, n_actions, n_states))
        return cls(p, r, gamma)

    def with_gamma(self, gamma: float) -> "Mdp":
        return Mdp(self.transitions, self.rewards, gamma)


def as_policy(mdp: Mdp, pi) -> np.ndarray:
    """Validate ``pi`` against ``mdp`` and return it as an int array."""
    arr = np.asarray(pi)
    if arr.shape != (mdp.n_states,):
        raise InvalidPolicyError(
            f"policy must have length {mdp.n_states}, got shape {arr.shape}"
        )
    if arr.dtype.kind not in "iu":
        if arr.dtype.kind == "f" and np.all(arr == np.round(arr)):
            arr = arr.astype(np.int64)
        else:
            raise InvalidPolicyError("policy entries must be integer action indices")
    if np.any(arr < 0) or np.any(arr >= mdp.n_actions):
        raise InvalidPolicyError(
            f"policy actions must lie in [0, {mdp.n_actions - 1}], got {arr.tolist()}"
        )
    return arr.astype(np.int64, copy=False)


def _as_value(mdp: Mdp, v) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.shape != (mdp.n_states,):
        raise ValueError(f"value vector must have length {mdp.n_states}, got {arr.shape}")
    return arr


def policy_transition_matrix(mdp: Mdp, pi) -> np.ndarray:
    """Return ``P^pi``, the transition matrix of a deterministic policy."""
    pi = as_policy(mdp, pi)
    return mdp.transitions[pi, np.arange(mdp.n_states), :]


def policy_reward(mdp: Mdp, pi) -> np.ndarray:
    """Return ``r^pi``, the expected one-step reward of each state under ``pi``."""
    pi = as_policy(mdp, pi)
    return mdp.expected_rewards[pi, np.arange(mdp.n_states)]


def _backups(mdp: Mdp, v: np.ndarray) -> np.ndarray:
    # Q[a, i] = r(i, a) + gamma * sum_j p[a, i, j] v[j]
    return mdp.expected_rewards + mdp.gamma * (mdp.transitions @ v)


def apply_bellman_policy(mdp: Mdp, pi, v) -> np.ndarray:
    """Linear backup ``T^pi v = r^pi + gamma P^pi v``."""
    pi = as_policy(mdp, pi)
    q = _backups(mdp, _as_value(mdp, v))
    return q[pi, np.arange(mdp.n_states)]


def apply_bellman_optimal(mdp: Mdp, v) -> np.ndarray:
    """Nonlinear backup ``T v = max_pi T^pi v`` (componentwise max over actions)."""
    return _backups(mdp, _as_value(mdp, v)).max(axis=0)


def greedy(mdp: Mdp, v) -> np.ndarray:
    """Greedy policy with respect to ``v``; ties go to the lowest action index."""
    return _backups(mdp, _as_value(mdp, v)).argmax(axis=0)


def greedy_backup(mdp: Mdp, v) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(greedy(v), T v)`` from a single backup evaluation."""
    q = _backups(mdp, _as_value(mdp, v))
    pi = q.argmax(axis=0)
    return pi, q[pi, np.arange(mdp.n_states)]


def solve_checked(matrix: np.ndarray, rhs: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Dense LU solve of ``matrix @ x = rhs`` followed by a residual check."""
    x = np.linalg.solve(matrix, rhs)
    resid = np.max(np.abs(matrix @ x - rhs)) if x.size else 0.0
    scale = 1.0 + np.max(np.abs(rhs)) + np.max(np.abs(matrix)) * np.max(np.abs(x))
    if not np.isfinite(resid) or resid > rtol * scale:
        raise LinearSolveError(f"linear solve residual {resid:.3g} exceeds tolerance")
    return x


def evaluate_policy(mdp: Mdp, pi) -> np.ndarray:
    """Exact value ``v^pi = (I - gamma P^pi)^{-1} r^pi``."""
    pi = as_policy(mdp, pi)
    p = policy_transition_matrix(mdp, pi)
    r = policy_reward(mdp, pi)
    return solve_checked(np.eye(mdp.n_states) - mdp.gamma * p, r)


def optimal_value(mdp: Mdp, max_iterations: int = 10_000) -> tuple[np.ndarray, np.ndarray]:
    """Optimal value and an optimal policy, computed by exact policy iteration.

    Starts from the greedy policy of the zero vector and stops as soon as the
    policy is stable or the value stops improving.
    """
    pi = greedy(mdp, np.zeros(mdp.n_states))
    v = evaluate_policy(mdp, pi)
    for _ in range(max_iterations):
        new_pi = greedy(mdp, v)
        if np.array_equal(new_pi, pi):
            break
        new_v = evaluate_policy(mdp, new_pi)
        # float ties can make the argmax flip between equally good actions
        if np.max(new_v - v) <= 1e-13 * (1.0 + np.max(np.abs(v))):
            break
        pi, v = new_pi, new_v
    else:
        raise NonConvergenceError("policy iteration did not terminate")
    return v, pi


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda out of [0,1]: {lam}")
    return lam


def apply_tlambda(mdp: Mdp, pi, lam: float, v, form: int = 3) -> np.ndarray:
    """The lambda-geometric backup ``T_lambda^pi v``.

    ``form`` selects one of four algebraically equivalent expressions:

    1. ``v + (I - lam*g*P)^{-1} (T^pi v - v)``
    2. ``(I - lam*g*P)^{-1} (T^pi v - lam*g*P v)``
    3. ``(I - lam*g*P)^{-1} (r + (1 - lam) g P v)``
    4. ``(I - lam*g*P)^{-1} (lam r + (1 - lam) T^pi v)``

    Form 3 is the production path; at ``lam == 0`` it returns ``T^pi v`` and
    at ``lam == 1`` it returns ``v^pi`` through the same code as
    :func:`apply_bellman_policy` and :func:`evaluate_policy`.
    """
    lam = _check_lambda(lam)
    pi = as_policy(mdp, pi)
    v = _as_value(mdp, v)
    g = mdp.gamma
    if form == 3:
        if lam == 0.0:
            return apply_bellman_policy(mdp, pi, v)
        if lam == 1.0:
            return evaluate_policy(mdp, pi)
    p = policy_transition_matrix(mdp, pi)
    r = policy_reward(mdp, pi)
    lhs = np.eye(mdp.n_states) - (lam * g) * p
    if form == 1:
        return v + solve_checked(lhs, apply_bellman_policy(mdp, pi, v) - v)
    if form == 2:
        return solve_checked(lhs, apply_bellman_policy(mdp, pi, v) - (lam * g) * (p @ v))
    if form == 3:
        return solve_checked(lhs, r + ((1.0 - lam) * g) * (p @ v))
    if form == 4:
        return solve_checked(lhs, lam * r + (1.0 - lam) * apply_bellman_policy(mdp, pi, v))
    raise ValueError(f"form must be 1, 2, 3 or 4, got {form}")


def td_increment(mdp: Mdp, pi, lam: float, v) -> np.ndarray:
    """Temporal-difference increment ``(I - lam*g*P^pi)^{-1} (T^pi v - v)``."""
    lam = _check_lambda(lam)
    pi = as_policy(mdp, pi)
    v = _as_value(mdp, v)
    p = policy_transition_matrix(mdp, pi)
    lhs = np.eye(mdp.n_states) - (lam * mdp.gamma) * p
    return solve_checked(lhs, apply_bellman_policy(mdp, pi, v) - v)


def mk_apply(mdp: Mdp, pi, lam: float, v_anchor, v) -> np.ndarray:
    """One application of ``M v = (1 - lam) T^pi v_anchor + lam T^pi v``."""
    lam = _check_lambda(lam)
    return (1.0 - lam) * apply_bellman_policy(mdp, pi, v_anchor) + lam * apply_bellman_policy(
        mdp, pi, v
    )


def mk_fixed_point(
    mdp: Mdp,
    pi,
    lam: float,
    v_anchor,
    tol: float = 1e-12,
    max_iterations: int = 10**6,
) -> tuple[np.ndarray, int, float]:
    """Fixed point of ``v -> mk_apply(mdp, pi, lam, v_anchor, v)`` by plain iteration.

    Returns
    -------
    value : array
        The fixed point, equal to ``apply_tlambda(mdp, pi, lam, v_anchor)``
        up to ``lam * gamma * tol / (1 - lam * gamma)`` in max-norm (relative
        to ``max(1, |value|_inf)``).
    iterations : int
        Number of applications of the operator.
    measured_modulus : float
        Largest ratio ``|M u - M w|_inf / |u - w|_inf`` seen over successive
        iterates whose step is above the floating-point noise floor.
    """
    lam = _check_lambda(lam)
    if tol <= 0:
        raise ValueError("tol must be positive")
    pi = as_policy(mdp, pi)
    v_anchor = _as_value(mdp, v_anchor)
    anchor_backup = apply_bellman_policy(mdp, pi, v_anchor)
    if lam == 0.0:
        return anchor_backup, 1, 0.0
    base = (1.0 - lam) * anchor_backup
    u = anchor_backup  # M(v_anchor) == T^pi v_anchor
    iterations = 1
    prev_step = np.max(np.abs(u - v_anchor))
    modulus = 0.0
    while iterations < max_iterations:
        u_next = base + lam * apply_bellman_policy(mdp, pi, u)
        iterations += 1
        step = np.max(np.abs(u_next - u))
        scale = max(1.0, np.max(np.abs(u_next)))
        # below ~1e-6 relative the ratio is dominated by rounding in the backup
        if prev_step > 1e-6 * scale:
            modulus = max(modulus, step / prev_step)
        u, prev_step = u_next, step
        if step < tol * scale:
            return u, iterations, modulus
    raise NonConvergenceError(
        f"M_k iteration did not reach tol={tol:g} within {max_iterations} iterations"
    )
