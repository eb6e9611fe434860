"""Bound matrices and numerical certification of performance bounds.

This module builds the row-stochastic matrices that appear in the
componentwise loss bounds of lambda policy iteration and evaluates each
bound on a concrete :class:`~lambdapi.solvers.IterationTrace`.

Notation: ``P_k`` is the transition matrix of ``pi_k``, ``P_*`` that of the
optimal policy, ``G_k = (I - g P_k)^{-1}``, ``beta = (1 - lam) g / (1 - lam g)``
and ``A_k = (1 - lam g) (I - lam g P_k)^{-1} P_k``.

Bounds stated for a limit superior are checked on a trailing window of the
trace: both sides are replaced by their maxima over the window. Where a
finite-horizon version of an asymptotic bound can be written exactly (the
transient from the starting index is kept instead of dropped) that version
is used, so a violation means a genuine error rather than an unlucky
window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .mdp import (
    Mdp,
    apply_bellman_optimal,
    apply_bellman_policy,
    optimal_value,
    policy_transition_matrix,
)
from .seminorms import (
    SeminormSpec,
    _lp_rows,
    check_distribution,
    mixed_distribution,
    span_inf,
    span_p_rows,
    weighted_lp_norm,
)
from .solvers import IterationTrace, stop_threshold

__all__ = [
    "BOUND_IDS",
    "SLACK_RTOL",
    "BoundReport",
    "ConcentrationCoefficient",
    "TraceContext",
    "beta",
    "matrix_A",
    "bellman_residual",
    "policy_bellman_residual",
    "concentration",
    "stopping_test",
    "is_row_stochastic",
    "exact_rate_matrices",
    "check_exact_rate_bounds",
    "exact_rate_sweep",
    "approx_bound_matrices",
    "check_approx_bounds",
    "convergence_case_matrices",
    "check_convergence_case_bounds",
    "seminorm_bound_suite",
    "appendix_c_violations",
    "run_checks",
    "worst_report",
]

SLACK_RTOL = 1e-8

EXACT_IDS = ("thexact.1", "thexact.2", "thexact.3")
CROC_IDS = tuple(f"croclpi.{i}" for i in range(1, 7))
APPROX_IDS = ("th.1", "th.2", "th.3", "appendixA.policy", "appendixA.greedy")
CONV_IDS = ("vconverges", "vconverges.span", "piconverges", "piconverges.span")
SPAPI_IDS = tuple(f"spapi.{i}" for i in range(1, 7))
CALPI_IDS = ("calpi.1", "calpi.2", "calpi.3")
BOUND_IDS = EXACT_IDS + APPROX_IDS + CONV_IDS + CROC_IDS + ("stopexact",) + SPAPI_IDS + CALPI_IDS


@dataclass(frozen=True, eq=False)
class BoundReport:
    """Outcome of evaluating one inequality ``lhs <= rhs``.

    ``slack`` is the smallest component of ``rhs - lhs`` and ``satisfied``
    holds when ``slack >= -SLACK_RTOL * (1 + |rhs|_inf)``. Reports with
    ``applicable=False`` (hypothesis not met) or ``vacuous=True`` (infinite
    right-hand side) count as satisfied. ``margin`` is the slack plus that
    tolerance, negative exactly when the report is unsatisfied.
    """

    bound_id: str
    lhs: np.ndarray | float
    rhs: np.ndarray | float
    slack: float
    satisfied: bool
    k0: int | None = None
    k: int | None = None
    applicable: bool = True
    vacuous: bool = False
    note: str = ""
    margin: float = math.inf


def _sup(x) -> float:
    if isinstance(x, float):
        return abs(x)
    x = np.asarray(x, dtype=float)
    return float(np.abs(x).max()) if x.size else 0.0


def make_report(bound_id, lhs, rhs, k0=None, k=None, note="") -> BoundReport:
    if isinstance(rhs, float) and isinstance(lhs, float):
        if rhs == math.inf:
            return BoundReport(bound_id, lhs, rhs, math.inf, True, k0, k, True, True, note or "infinite rhs")
        slack = rhs - lhs
        sup = abs(rhs)
    else:
        lhs_a = np.asarray(lhs, dtype=float)
        rhs_a = np.asarray(rhs, dtype=float)
        if np.isposinf(rhs_a).any():
            return BoundReport(bound_id, lhs, rhs, math.inf, True, k0, k, True, True, note or "infinite rhs")
        slack = float((rhs_a - lhs_a).min())
        sup = float(np.abs(rhs_a).max())
    margin = slack + SLACK_RTOL * (1.0 + sup)
    return BoundReport(bound_id, lhs, rhs, slack, bool(margin >= 0), k0, k, True, False, note, margin)


def not_applicable(bound_id, note) -> BoundReport:
    return BoundReport(bound_id, math.nan, math.nan, math.nan, True, applicable=False, note=note)


def worst_report(reports) -> BoundReport:
    """The report with the smallest margin (the first one on ties)."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to choose from")
    return min(reports, key=lambda r: r.margin)


@dataclass(frozen=True)
class ConcentrationCoefficient:
    nu: np.ndarray
    value: float


# ---------------------------------------------------------------- primitives


def beta(lam: float, gamma: float) -> float:
    """``(1 - lam) gamma / (1 - lam gamma)``."""
    lam, gamma = float(lam), float(gamma)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda out of [0,1]: {lam}")
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    return (1.0 - lam) * gamma / (1.0 - lam * gamma)


def _resolvent(P: np.ndarray, coef: float) -> np.ndarray:
    n = P.shape[0]
    return np.linalg.solve(np.eye(n) - coef * P, np.eye(n))


def _A_from_P(P: np.ndarray, lam: float, gamma: float) -> np.ndarray:
    if lam == 0.0:
        return P.copy()
    return (1.0 - lam * gamma) * (_resolvent(P, lam * gamma) @ P)


def matrix_A(mdp: Mdp, pi, lam: float) -> np.ndarray:
    """``A = (1 - lam g) (I - lam g P^pi)^{-1} P^pi``."""
    beta(lam, mdp.gamma)  # validates lam
    return _A_from_P(policy_transition_matrix(mdp, pi), float(lam), mdp.gamma)


def bellman_residual(mdp: Mdp, v) -> np.ndarray:
    """``T v - v``."""
    v = np.asarray(v, dtype=float)
    return apply_bellman_optimal(mdp, v) - v


def policy_bellman_residual(mdp: Mdp, pi, v) -> np.ndarray:
    """``T^pi v - v`` (the negative of the residual ``v - T^pi v``)."""
    v = np.asarray(v, dtype=float)
    return apply_bellman_policy(mdp, pi, v) - v


def concentration(mdp: Mdp, nu) -> ConcentrationCoefficient:
    """``C(nu) = max_{i,j,a} p_ij(a) / nu(j)``, infinite if ``nu`` misses a reachable state."""
    nu = check_distribution(nu, mdp.n_states)
    reach = mdp.transitions.max(axis=(0, 1))  # max_{a,i} p_ij(a), per j
    if np.any((reach > 0) & (nu == 0)):
        return ConcentrationCoefficient(nu, math.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(reach > 0, reach / np.where(nu > 0, nu, 1.0), 0.0)
    return ConcentrationCoefficient(nu, float(ratio.max()))


def stopping_test(mdp: Mdp, v, epsilon: float) -> bool:
    """True when ``span_inf(T v - v) <= (1 - g) / g * epsilon``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return span_inf(bellman_residual(mdp, v)) <= stop_threshold(mdp.gamma, epsilon)


def is_row_stochastic(M, atol: float = 1e-8, neg_tol: float = 1e-12) -> bool:
    M = np.asarray(M, dtype=float)
    return bool(
        M.ndim == 2
        and np.all(M >= -neg_tol)
        and np.all(np.abs(M.sum(axis=1) - 1.0) <= atol)
    )


# ------------------------------------------------------------ trace context


class TraceContext:
    """Per-trace cache of transition matrices, resolvents and stacked vectors.

    Index ``k`` of each list follows the trace records; entries whose policy
    is undefined are ``None``.
    """

    def __init__(self, trace: IterationTrace):
        if trace.algorithm == "mpi" or not 0.0 <= trace.lam <= 1.0:
            raise ValueError("bound checks need a value, policy or lambda policy iteration trace")
        mdp = trace.mdp
        self.trace = trace
        self.mdp = mdp
        self.gamma = g = mdp.gamma
        self.lam = lam = float(trace.lam)
        self.beta = beta(lam, g)
        self.c = lam * g / (1.0 - lam * g)
        self.w1 = (1.0 - g) * lam / (1.0 - lam * g)
        self.w2 = (1.0 - lam) / (1.0 - lam * g)
        self.K = len(trace.records) - 1
        self.n = mdp.n_states
        self.eye = np.eye(self.n)
        self.P, self.A, self.G = [], [], []
        memo = {}
        for rec in trace.records:
            if rec.pi is None:
                self.P.append(None)
                self.A.append(None)
                self.G.append(None)
                continue
            key = rec.pi.tobytes()
            if key not in memo:
                P = policy_transition_matrix(mdp, rec.pi)
                memo[key] = (P, _A_from_P(P, lam, g), _resolvent(P, g))
            P, A, G = memo[key]
            self.P.append(P)
            self.A.append(A)
            self.G.append(G)
        self.Pst = policy_transition_matrix(mdp, trace.pi_star)
        self.Gst = _resolvent(self.Pst, g)
        self._pst_pow = [self.eye, self.Pst]
        self.V = trace.stack("v")
        self.W = trace.stack("w")
        self.EPS = trace.stack("eps")
        self.B = trace.stack("b")
        self.BP = trace.stack("b_policy")
        self.L = trace.stack("loss")
        self.D = trace.stack("distance")
        self.S = trace.stack("shift")
        self.v_star = trace.v_star
        self._loss_inf = np.abs(np.nan_to_num(self.L, nan=0.0)).max(axis=1)
        self._loss_lp = {}

    @classmethod
    def of(cls, trace: IterationTrace) -> "TraceContext":
        ctx = trace.cache.get("ctx")
        if ctx is None:
            ctx = trace.cache["ctx"] = cls(trace)
        return ctx

    def pst_pow(self, m: int) -> np.ndarray:
        while len(self._pst_pow) <= m:
            self._pst_pow.append(self._pst_pow[-1] @ self.Pst)
        return self._pst_pow[m]

    def first_policy_index(self) -> int:
        return 0 if self.P[0] is not None else 1

    def b_chain(self, k: int, j_min: int) -> dict:
        """``{j: B_jk}`` for ``j_min <= j < k``, by backward recursion in ``j``.

        ``B_j = (w1 P_*^{k-1-j} + w2 B_{j+1}) A_{j+1}`` with
        ``B_k = (1 - g) G_k``; the weights ``w1 + w2 = 1`` keep every step a
        convex combination of stochastic matrices.
        """
        if not (0 <= j_min < k <= self.K):
            raise IndexError(f"need 0 <= j_min < k <= {self.K}, got j_min={j_min}, k={k}")
        if self.P[j_min + 1] is None:
            raise IndexError("policy undefined inside the requested range")
        cur = (1.0 - self.gamma) * self.G[k]
        out = {}
        for j in range(k - 1, j_min - 1, -1):
            cur = (self.w1 * self.pst_pow(k - 1 - j) + self.w2 * cur) @ self.A[j + 1]
            out[j] = cur
        return out

    def window(self, window: int) -> range:
        window = int(window)
        if window < 1:
            raise ValueError("window must be at least 1")
        if self.K < window:
            raise ValueError(f"trace of {self.K} iterations is shorter than window {window}")
        return range(self.K - window + 1, self.K + 1)

    def loss_norm(self, k: int) -> float:
        return float(self._loss_inf[k])

    def loss_lp(self, k: int, p: float, mu: np.ndarray) -> float:
        key = (p, mu.tobytes())
        if key not in self._loss_lp:
            L = np.nan_to_num(self.L, nan=0.0)
            self._loss_lp[key] = _lp_rows(L, p, np.broadcast_to(mu, L.shape))
        return float(self._loss_lp[key][k])


# ----------------------------------------------------------- exact rates


def exact_rate_matrices(trace: IterationTrace, k0: int, k: int):
    """Matrices ``(E, E', F)`` of the exact-rate bounds for indices ``k0 < k``."""
    ctx = TraceContext.of(trace)
    if not 0 <= k0 < k <= ctx.K:
        raise IndexError(f"need 0 <= k0 < k <= {ctx.K}, got k0={k0}, k={k}")
    g = ctx.gamma
    m = k - k0
    Ep = ctx.b_chain(k, k0)[k0]
    Pm = ctx.pst_pow(m)
    E = (1.0 - g) * Pm @ ctx.Gst
    F = (1.0 - g) * Pm + g * Ep @ ctx.Pst
    return E, Ep, F


def _exact_pair_reports(ctx, k0, k, Ep, spec, want_exact, want_croc):
    g = ctx.gamma
    m = k - k0
    Pm = ctx.pst_pow(m)
    E = (1.0 - g) * Pm @ ctx.Gst
    F = (1.0 - g) * Pm + g * Ep @ ctx.Pst
    gm = g**m
    d0 = ctx.v_star - ctx.V[k0]
    b0 = ctx.B[k0]
    lk = ctx.L[k]
    next_loss = ctx.loss_norm(k0 + 1)
    out = []
    if want_exact:
        out.append(make_report("thexact.1", lk, gm / (1 - g) * ((F - Ep) @ d0), k0, k))
        out.append(make_report("thexact.2", lk, gm / (1 - g) * ((E - Ep) @ b0), k0, k))
        rhs3 = gm * (Pm @ (d0 - d0.min())) + next_loss
        out.append(make_report("thexact.3", lk, rhs3, k0, k))
    rows = None
    if want_croc:
        lk_inf = ctx.loss_norm(k)
        out.append(make_report("croclpi.2", lk_inf, gm / (1 - g) * span_inf(d0), k0, k))
        out.append(make_report("croclpi.4", lk_inf, gm / (1 - g) * span_inf(b0), k0, k))
        out.append(make_report("croclpi.6", lk_inf, gm * (span_inf(d0) + next_loss), k0, k))
        if spec is not None:
            mu = spec.weights
            muEp = mu @ Ep
            rows = dict(
                w1=np.clip(0.5 * (mu @ F + muEp), 0.0, None),
                w3=np.clip(0.5 * (mu @ E + muEp), 0.0, None),
                w5=np.clip(mu @ Pm, 0.0, None),
                d0=d0,
                b0=b0,
                gm=gm,
                lk=ctx.loss_lp(k, spec.p, spec.weights),
                next_loss=next_loss,
            )
    return out, rows


def _finish_weighted_croc(rows_list, spec, g):
    """Batch the weighted span evaluations of croclpi.1, .3 and .5."""
    if not rows_list:
        return []
    p = spec.p
    keys = [key for key, _ in rows_list]
    R = [r for _, r in rows_list]
    s1 = span_p_rows(np.array([r["d0"] for r in R]), p, np.array([r["w1"] for r in R]))
    s3 = span_p_rows(np.array([r["b0"] for r in R]), p, np.array([r["w3"] for r in R]))
    out = []
    shifted = np.array([r["d0"] - r["d0"].min() for r in R])
    W5 = np.array([r["w5"] / r["w5"].sum() for r in R])
    n5 = _lp_rows(shifted, p, W5)
    for (k0, k), r, a, b, c in zip(keys, R, s1, s3, n5):
        out.append(make_report("croclpi.1", r["lk"], float(r["gm"] / (1 - g) * a), k0, k))
        out.append(make_report("croclpi.3", r["lk"], float(r["gm"] / (1 - g) * b), k0, k))
        out.append(make_report("croclpi.5", r["lk"], float(r["gm"] * (c + r["next_loss"])), k0, k))
    return out


def check_exact_rate_bounds(trace: IterationTrace, k0: int, k: int, spec: SeminormSpec | None = None):
    """Evaluate the three exact-rate inequalities (and the span versions if ``spec`` is given).

    Only pairs with ``k > k0`` are evaluated; at ``k == k0`` the bounds
    reduce to statements about ``v_{k0}`` that the rate matrices do not
    cover.
    """
    ctx = TraceContext.of(trace)
    if not trace.is_exact:
        return [not_applicable(i, "trace has approximation errors") for i in EXACT_IDS]
    _, Ep, _ = exact_rate_matrices(trace, k0, k)
    reports, rows = _exact_pair_reports(ctx, k0, k, Ep, spec, True, spec is not None)
    if rows is not None:
        reports += _finish_weighted_croc([((k0, k), rows)], spec, ctx.gamma)
    return reports


def exact_rate_sweep(
    trace: IterationTrace,
    k_max: int | None = None,
    spec: SeminormSpec | None = None,
    ids=EXACT_IDS + CROC_IDS,
    reduce: bool = True,
):
    """Exact-rate and span-rate bounds over every pair ``k0 < k <= k_max``.

    Parameters
    ----------
    k_max : int, optional
        Largest ``k``; defaults to the trace length.
    spec : SeminormSpec, optional
        ``(p, mu)`` for the weighted span bounds; those bounds are skipped
        when omitted.
    reduce : bool
        Return only the worst report per bound id.
    """
    ids = tuple(ids)
    want_exact = any(i in EXACT_IDS for i in ids)
    want_croc = any(i in CROC_IDS for i in ids)
    if not trace.is_exact:
        return [not_applicable(i, "trace has approximation errors") for i in ids]
    ctx = TraceContext.of(trace)
    k_max = ctx.K if k_max is None else min(int(k_max), ctx.K)
    j_min = 0
    reports, rows_list = [], []
    for k in range(j_min + 1, k_max + 1):
        chain = ctx.b_chain(k, j_min)
        for k0 in range(j_min, k):
            reps, rows = _exact_pair_reports(ctx, k0, k, chain[k0], spec, want_exact, want_croc)
            reports += reps
            if rows is not None:
                rows_list.append(((k0, k), rows))
    reports += _finish_weighted_croc(rows_list, spec, ctx.gamma)
    reports = [r for r in reports if r.bound_id in ids]
    if not reduce:
        return reports
    return _reduce(reports, ids)


def _reduce(reports, ids):
    out = []
    for i in ids:
        mine = [r for r in reports if r.bound_id == i]
        if mine:
            out.append(worst_report(mine))
    return out


# ------------------------------------------------------- approximate bounds


def approx_bound_matrices(trace: IterationTrace, j: int, k: int):
    """Matrices ``(B_jk, B'_jk, C_k, C'_k, D, D'_k)`` for ``1 <= j < k < K``."""
    ctx = TraceContext.of(trace)
    if not (j < k < ctx.K) or ctx.P[j] is None:
        raise IndexError(f"need pi_j defined and j < k < {ctx.K}, got j={j}, k={k}")
    g = ctx.gamma
    Bjk = ctx.b_chain(k, j)[j]
    Bp = g * Bjk @ ctx.P[j] + (1.0 - g) * ctx.pst_pow(k - j)
    C = (1.0 - g) ** 2 * ctx.Gst @ ctx.Pst @ ctx.G[k]
    Cp = (1.0 - g) ** 2 * ctx.Gst @ ctx.P[k + 1] @ ctx.G[k + 1]
    D = (1.0 - g) * ctx.Pst @ ctx.Gst
    Dp = (1.0 - g) * ctx.P[k] @ ctx.G[k]
    return Bjk, Bp, C, Cp, D, Dp


def error_sum_bound(trace: IterationTrace, k0: int = 1) -> dict:
    """Finite-horizon error-sum bound on the loss, ``{k: rhs_k}`` for ``k0 < k <= K``.

    The bound is ``d_bar_k + s_bar_k`` where the distance and shift bounds
    are propagated from index ``k0`` with the Bellman residual at ``k0 - 1``
    as the initial condition. It equals the weighted error sum with
    matrices ``B_jk`` plus a transient that decays like ``g^(k - k0)``.
    """
    ctx = TraceContext.of(trace)
    if k0 < 1 or ctx.P[k0] is None:
        raise IndexError("k0 must be at least 1 with pi_k0 defined")
    g, bt, c = ctx.gamma, ctx.beta, ctx.c
    nb = -ctx.B[k0 - 1]
    dbar = ctx.D[k0].copy()
    out = {}
    for i in range(k0, ctx.K):
        eps = ctx.EPS[i]
        nb = bt * (ctx.A[i] @ nb) + (eps - g * (ctx.P[i] @ eps))
        Anb = ctx.A[i + 1] @ nb
        dbar = g * (ctx.Pst @ dbar) + c * Anb - g * (ctx.Pst @ eps)
        out[i + 1] = dbar + bt * (ctx.G[i + 1] @ Anb)
    return out


def policy_residual_bound(trace: IterationTrace, k0: int = 1) -> dict:
    """Finite-horizon bound on the loss through the policy Bellman residuals.

    ``u_{k0} = l_{k0}``, ``u_{i+1} = g P_* u_i + g (P_* G_i - P_{i+1} G_{i+1}) b'_i``.
    """
    ctx = TraceContext.of(trace)
    if k0 < 0 or ctx.P[k0] is None:
        raise IndexError("pi_k0 must be defined")
    g = ctx.gamma
    u = ctx.L[k0].copy()
    out = {}
    for i in range(k0, ctx.K):
        bp = ctx.BP[i]
        z = g * (ctx.Pst @ (ctx.G[i] @ bp) - ctx.P[i + 1] @ (ctx.G[i + 1] @ bp))
        u = g * (ctx.Pst @ u) + z
        out[i + 1] = u
    return out


def _tail_max_report(bound_id, ctx, ks, lhs_of, rhs_of, k0=None, note=""):
    lhs = np.max([lhs_of(k) for k in ks], axis=0)
    rhs = np.max([rhs_of(k) for k in ks], axis=0)
    return make_report(bound_id, lhs, rhs, k0, ks[-1], note)


def check_approx_bounds(trace: IterationTrace, k0: int = 1, window: int = 20):
    """Error-sum, policy-residual and greedy-residual loss bounds.

    ``th.1`` and ``th.2`` compare tail-window maxima of ``l_k`` with
    tail-window maxima of the finite-horizon bounds started at ``k0``.
    ``th.3`` and the two one-step residual bounds hold at every ``k`` and are
    checked at all indices; the worst index is reported.
    """
    ctx = TraceContext.of(trace)
    ks = ctx.window(window)
    if ks.start <= k0:
        raise ValueError(f"trace too short for k0={k0} and window={window}")
    g = ctx.gamma
    reports = []
    th1 = error_sum_bound(trace, k0)
    reports.append(_tail_max_report("th.1", ctx, ks, lambda k: ctx.L[k], th1.get, k0))
    th2 = policy_residual_bound(trace, k0)
    reports.append(_tail_max_report("th.2", ctx, ks, lambda k: ctx.L[k], th2.get, k0))

    D = (1.0 - g) * ctx.Pst @ ctx.Gst
    first = max(ctx.first_policy_index(), 1)
    per_k3, greedy_k, pol_k = [], [], []
    for k in range(first, ctx.K + 1):
        bk = ctx.B[k - 1]
        Dk = (1.0 - g) * ctx.P[k] @ ctx.G[k]
        per_k3.append(make_report("th.3", ctx.L[k], g / (1 - g) * ((D - Dk) @ bk), k=k))
        rhs = g * (ctx.Pst @ (ctx.Gst @ bk) - ctx.P[k] @ (ctx.G[k] @ bk))
        greedy_k.append(make_report("appendixA.greedy", ctx.L[k], rhs, k=k))
    for k in range(max(ctx.first_policy_index(), 1), ctx.K):
        bp = ctx.BP[k]
        z = g * (ctx.Pst @ (ctx.G[k] @ bp) - ctx.P[k + 1] @ (ctx.G[k + 1] @ bp))
        pol_k.append(make_report("appendixA.policy", ctx.L[k + 1], g * (ctx.Pst @ ctx.L[k]) + z, k=k + 1))
    reports.append(worst_report(per_k3))
    reports.append(worst_report(pol_k))
    reports.append(worst_report(greedy_k))
    return reports


# ------------------------------------------------------- convergence cases


def convergence_case_matrices(mdp: Mdp, pi, lam: float, j: int, k: int, pi_star=None):
    """Matrices ``(B_v, D, A^pi, A^pi_jk, B^pi_jk, B'^pi_jk)`` for a limit policy ``pi``."""
    if not k > j:
        raise IndexError(f"need k > j, got j={j}, k={k}")
    g = mdp.gamma
    beta(lam, g)  # validates lam
    lam = float(lam)
    if pi_star is None:
        pi_star = optimal_value(mdp)[1]
    P = policy_transition_matrix(mdp, pi)
    Pst = policy_transition_matrix(mdp, pi_star)
    G = _resolvent(P, g)
    Gst = _resolvent(Pst, g)
    Bv = (1.0 - g) * ((1.0 - lam) * G @ P + lam * Gst @ P)
    D = (1.0 - g) * Pst @ Gst
    Api = _A_from_P(P, lam, g)
    Ajk = _api_chain(Api, G, Pst, lam, g, j, k)[j]
    Bpi = Ajk @ P
    m = k - j
    Bppi = (1.0 - g) / (1.0 - lam * g) * (
        g * (1.0 - lam) / (1.0 - g) * Ajk @ Api @ P + np.linalg.matrix_power(Pst, m)
    )
    return Bv, D, Api, Ajk, Bpi, Bppi


def _api_chain(Api, G, Pst, lam, g, j_min, k, pst_pow=None):
    """``{j: A^pi_jk}`` for ``j_min <= j < k`` by backward recursion."""
    w1 = (1.0 - g) * lam / (1.0 - lam * g)
    w2 = (1.0 - lam) / (1.0 - lam * g)
    n = G.shape[0]
    if pst_pow is None:
        pows = [np.eye(n)]

        def pst_pow(m):
            while len(pows) <= m:
                pows.append(pows[-1] @ Pst)
            return pows[m]

    cur = w1 * np.eye(n) + w2 * (1.0 - g) * G
    out = {k - 1: cur}
    for jj in range(k - 2, j_min - 1, -1):
        cur = w1 * pst_pow(k - 1 - jj) + w2 * cur @ Api
        out[jj] = cur
    return out


def _value_converged(ctx, run=5, tol=1e-8) -> bool:
    if ctx.K < run:
        return False
    return all(span_inf(ctx.V[k] - ctx.V[k - 1]) < tol for k in range(ctx.K - run + 1, ctx.K + 1))


def _policy_stretch_start(ctx) -> int:
    """First index ``s`` such that ``pi_i == pi_K`` for all ``i >= s``."""
    pis = [rec.pi for rec in ctx.trace.records]
    last = pis[-1]
    s = ctx.K
    while s - 1 >= 0 and pis[s - 1] is not None and np.array_equal(pis[s - 1], last):
        s -= 1
    return s


def check_convergence_case_bounds(trace: IterationTrace, window: int = 20):
    """Sharper loss bounds that apply once the value or the policy has converged.

    Value convergence means ``span_inf(v_k - v_{k-1}) < 1e-8`` over the last
    five iterations; the bound is evaluated at the last iterate with the
    limit error estimated as ``eps_K - (v_K - v_{K-1})``, which makes it an
    identity-level consequence of the greedy residual bound. Policy
    convergence means ``pi_k`` is constant over the last ``window``
    iterations; the error-sum bound is then rebuilt from the limit-policy
    matrices.
    """
    ctx = TraceContext.of(trace)
    g, lam = ctx.gamma, ctx.lam
    reports = []
    if _value_converged(ctx) and ctx.P[ctx.K] is not None:
        K = ctx.K
        pi = trace.records[K].pi
        Bv, D, *_ = convergence_case_matrices(trace.mdp, pi, lam, 0, 1, trace.pi_star)
        eps_hat = ctx.EPS[K] - (ctx.V[K] - ctx.V[K - 1])
        lK = ctx.L[K]
        reports.append(make_report("vconverges", lK, g / (1 - g) * ((Bv - D) @ eps_hat), k=K))
        reports.append(
            make_report("vconverges.span", float(np.max(np.abs(lK))), g / (1 - g) * span_inf(eps_hat), k=K)
        )
    else:
        note = "value has not converged"
        reports += [not_applicable("vconverges", note), not_applicable("vconverges.span", note)]

    s = _policy_stretch_start(ctx)
    k0 = max(s, 1)
    if ctx.K - k0 + 1 >= window and ctx.P[ctx.K] is not None and ctx.window(window).start > k0:
        reports += _piconverges_reports(ctx, k0, window)
    else:
        note = "policy has not converged over the window"
        reports += [not_applicable("piconverges", note), not_applicable("piconverges.span", note)]
    return reports


def _piconverges_reports(ctx, k0, window):
    g, lam, bt = ctx.gamma, ctx.lam, ctx.beta
    P = ctx.P[ctx.K]
    G = ctx.G[ctx.K]
    Api = ctx.A[ctx.K]
    scale = (1.0 - lam * g) / (1.0 - g)
    ks = ctx.window(window)
    rhs_all = []
    for k in ks:
        chain = _api_chain(Api, G, ctx.Pst, lam, g, k0, k, ctx.pst_pow)
        total = np.zeros(ctx.n)
        for j in range(k0, k):
            m = k - j
            Ajk = chain[j]
            Bpi = Ajk @ P
            Bppi = (1.0 - g) / (1.0 - lam * g) * (
                g * (1.0 - lam) / (1.0 - g) * Ajk @ Api @ P + ctx.pst_pow(m)
            )
            total += scale * g**m * ((Bpi - Bppi) @ ctx.EPS[j])
        m = k - k0
        transient = bt * g**m / (1.0 - g) * (chain[k0] @ (Api @ (Api @ -ctx.B[k0 - 1])))
        transient += g**m * (ctx.pst_pow(m) @ ctx.D[k0])
        rhs_all.append(total + transient)
    lhs = np.max([ctx.L[k] for k in ks], axis=0)
    reports = [make_report("piconverges", lhs, np.max(rhs_all, axis=0), k0, ks[-1])]
    eps_span = max(span_inf(ctx.EPS[j]) for j in ks)
    lhs_inf = max(ctx.loss_norm(k) for k in ks)
    rhs_inf = g * (1.0 - lam * g) / (1.0 - g) ** 2 * eps_span
    reports.append(make_report("piconverges.span", lhs_inf, rhs_inf, k0, ks[-1]))
    return reports


# ------------------------------------------------------- seminorm bounds


def seminorm_bound_suite(
    trace: IterationTrace,
    spec: SeminormSpec,
    nu=None,
    k0: int = 0,
    window: int = 20,
    k_max: int | None = None,
    ids=None,
):
    """Span-seminorm bounds: exact rates, stopping rule and approximate bounds.

    Parameters
    ----------
    spec : SeminormSpec
        Supplies ``p`` and the weighting ``mu`` of the weighted bounds.
    nu : array, optional
        Reference distribution of the concentration-coefficient bounds;
        those bounds are skipped when omitted.
    k0 : int
        Smallest starting index of the exact-rate pairs.
    window : int
        Trailing window standing in for the limit superior.
    k_max : int, optional
        Largest ``k`` of the exact-rate pairs.
    ids : iterable of str, optional
        Subset of bound ids to evaluate.
    """
    if spec.kind not in ("span_p_weighted", "lp_weighted"):
        raise ValueError("seminorm_bound_suite needs a weighted spec")
    want = set(CROC_IDS + ("stopexact",) + SPAPI_IDS + CALPI_IDS) if ids is None else set(ids)
    ctx = TraceContext.of(trace)
    reports = []
    croc = [i for i in CROC_IDS if i in want]
    if croc:
        if trace.is_exact:
            reps = exact_rate_sweep(trace, k_max, spec, ids=croc, reduce=False)
            reps = [r for r in reps if r.k0 is None or r.k0 >= k0]
            reports += _reduce(reps, croc)
        else:
            reports += [not_applicable(i, "trace has approximation errors") for i in croc]
    if "stopexact" in want:
        reports.append(_stopexact(ctx))
    sp = [i for i in SPAPI_IDS if i in want]
    if sp:
        reports += _reduce(_spapi(ctx, spec, window), sp)
    ca = [i for i in CALPI_IDS if i in want]
    if ca and nu is not None:
        reports += _reduce(_calpi(ctx, spec.p, nu, window), ca)
    return reports


def _stopexact(ctx):
    eps = ctx.trace.config.stop_epsilon
    thr = stop_threshold(ctx.gamma, eps)
    reps = []
    for k in range(0, ctx.K):
        if span_inf(ctx.B[k]) <= thr:
            reps.append(make_report("stopexact", ctx.loss_norm(k + 1), eps, k0=k, k=k + 1))
    if span_inf(ctx.B[ctx.K]) <= thr:
        final = ctx.trace.final_loss()
        reps.append(make_report("stopexact", final, eps, k0=ctx.K, k=ctx.K + 1))
    if not reps:
        return not_applicable("stopexact", "stopping test never passed")
    worst = worst_report(reps)
    if worst.slack <= 0:  # the guarantee is strict
        return replace(worst, satisfied=False, margin=min(worst.margin, worst.slack))
    return worst


def _spapi(ctx, spec, window):
    g = ctx.gamma
    p, mu = spec.p, spec.weights
    ks = list(ctx.window(window))
    lo = ks[0]
    K2 = g / (1.0 - g) ** 2
    out = []
    lhs_p = max(weighted_lp_norm(ctx.L[k], p, mu) for k in ks)
    lhs_inf = max(ctx.loss_norm(k) for k in ks)

    # spapi.1: sup over in-window pairs j < k of the mixed-weight span of eps_j
    rows_u, rows_w = [], []
    for k in ks[1:]:
        chain = ctx.b_chain(k, lo)
        for j in range(lo, k):
            Bjk = chain[j]
            Bp = g * Bjk @ ctx.P[j] + (1.0 - g) * ctx.pst_pow(k - j)
            rows_w.append(mixed_distribution(mu, Bjk, Bp))
            rows_u.append(ctx.EPS[j])
    sup1 = float(np.max(span_p_rows(np.array(rows_u), p, np.array(rows_w)))) if rows_u else 0.0
    out.append(make_report("spapi.1", lhs_p, K2 * sup1, k=ks[-1]))
    out.append(make_report("spapi.2", lhs_inf, K2 * max(span_inf(ctx.EPS[j]) for j in ks), k=ks[-1]))

    # spapi.3/4: policy Bellman residual, weights from C_k and C'_k
    ks3 = [k for k in ks if k < ctx.K]
    if ks3:
        W3 = []
        for k in ks3:
            C = (1.0 - g) ** 2 * ctx.Gst @ ctx.Pst @ ctx.G[k]
            Cp = (1.0 - g) ** 2 * ctx.Gst @ ctx.P[k + 1] @ ctx.G[k + 1]
            W3.append(mixed_distribution(mu, C, Cp))
        s3 = span_p_rows(np.array([ctx.BP[k] for k in ks3]), p, np.array(W3))
        out.append(make_report("spapi.3", lhs_p, K2 * float(np.max(s3)), k=ks[-1]))
        out.append(make_report("spapi.4", lhs_inf, K2 * max(span_inf(ctx.BP[k]) for k in ks3), k=ks[-1]))

    # spapi.5/6 hold at every k
    D = (1.0 - g) * ctx.Pst @ ctx.Gst
    first = max(ctx.first_policy_index(), 1)
    kk = list(range(first, ctx.K + 1))
    W5 = [mixed_distribution(mu, D, (1.0 - g) * ctx.P[k] @ ctx.G[k]) for k in kk]
    s5 = span_p_rows(np.array([ctx.B[k - 1] for k in kk]), p, np.array(W5))
    for k, s in zip(kk, s5):
        out.append(make_report("spapi.5", weighted_lp_norm(ctx.L[k], p, mu), g / (1 - g) * s, k=k))
        out.append(make_report("spapi.6", ctx.loss_norm(k), g / (1 - g) * span_inf(ctx.B[k - 1]), k=k))
    return out


def _calpi(ctx, p, nu, window):
    g = ctx.gamma
    cc = concentration(ctx.mdp, nu)
    nu = cc.nu
    if math.isinf(cc.value):
        return [
            BoundReport(i, math.nan, math.inf, math.inf, True, vacuous=True, note="C(nu) is infinite")
            for i in CALPI_IDS
        ]
    cp = cc.value ** (1.0 / p) if not math.isinf(p) else 1.0
    ks = list(ctx.window(window))
    K2 = g / (1.0 - g) ** 2
    lhs_inf = max(ctx.loss_norm(k) for k in ks)
    nu_rows = lambda m: np.broadcast_to(nu, (m, nu.shape[0]))  # noqa: E731
    out = []
    s1 = span_p_rows(np.array([ctx.EPS[j] for j in ks]), p, nu_rows(len(ks)))
    out.append(make_report("calpi.1", lhs_inf, K2 * cp * float(np.max(s1)), k=ks[-1]))
    ks2 = [k for k in ks if ctx.P[k] is not None]
    s2 = span_p_rows(np.array([ctx.BP[k] for k in ks2]), p, nu_rows(len(ks2)))
    out.append(make_report("calpi.2", lhs_inf, K2 * cp * float(np.max(s2)), k=ks[-1]))
    first = max(ctx.first_policy_index(), 1)
    kk = list(range(first, ctx.K + 1))
    s3 = span_p_rows(np.array([ctx.B[k - 1] for k in kk]), p, nu_rows(len(kk)))
    for k, s in zip(kk, s3):
        out.append(make_report("calpi.3", ctx.loss_norm(k), g / (1 - g) * cp * s, k=k))
    return out


# ------------------------------------------------- recurrence identities


def appendix_c_violations(trace: IterationTrace) -> dict:
    """Worst violations of the loss-decomposition recurrences along a trace.

    Returns
    -------
    dict
        ``"lbg"``: max abs gap in ``s_k = beta G_k A_k (-b_{k-1})``;
        ``"lrecg"``, ``"lrecd"``, ``"dg"``: largest amount by which the
        corresponding inequality fails (0 when it holds everywhere);
        ``"decomposition"``: max abs gap in ``l_k = d_k + s_k``.
        ``dg`` is checked in the form ``b_k >= (I - g P_*)(v_* - v_k)``,
        which is what the greedy argument gives when errors are present.
    """
    ctx = TraceContext.of(trace)
    g, bt, c = ctx.gamma, ctx.beta, ctx.c
    out = dict(lbg=0.0, lrecg=0.0, lrecd=0.0, dg=0.0, decomposition=0.0)
    for k in range(0, ctx.K + 1):
        # b_k - (I - g P_*)(v_* - v_k)
        dgap = ctx.B[k] - ((ctx.v_star - ctx.V[k]) - g * (ctx.Pst @ (ctx.v_star - ctx.V[k])))
        out["dg"] = max(out["dg"], float(-dgap.min()))
        if ctx.P[k] is not None:
            out["decomposition"] = max(
                out["decomposition"], float(np.max(np.abs(ctx.L[k] - ctx.D[k] - ctx.S[k])))
            )
        if k >= 1 and ctx.P[k] is not None:
            pred = bt * (ctx.G[k] @ (ctx.A[k] @ -ctx.B[k - 1]))
            out["lbg"] = max(out["lbg"], float(np.max(np.abs(ctx.S[k] - pred))))
        if k < ctx.K and ctx.P[k + 1] is not None:
            e1 = ctx.EPS[k + 1]
            low = bt * (ctx.A[k + 1] @ ctx.B[k]) + g * (ctx.P[k + 1] @ e1) - e1
            out["lrecg"] = max(out["lrecg"], float(-(ctx.B[k + 1] - low).min()))
            up = g * (ctx.Pst @ ctx.D[k]) + c * (ctx.A[k + 1] @ -ctx.B[k]) - g * (ctx.Pst @ ctx.EPS[k])
            out["lrecd"] = max(out["lrecd"], float((ctx.D[k + 1] - up).max()))
    return {key: max(val, 0.0) for key, val in out.items()}


# ------------------------------------------------------------- dispatcher


def run_checks(
    trace: IterationTrace,
    ids,
    spec: SeminormSpec | None = None,
    nu=None,
    window: int = 20,
    k_max: int | None = 30,
    k0: int = 1,
):
    """Evaluate the requested bound ids, one worst-case report per id.

    Exact-rate bounds are swept over every pair ``k0 < k <= k_max``; the
    asymptotic bounds use the trailing ``window`` and start their
    finite-horizon recursions at ``k0``.
    """
    ids = list(ids)
    unknown = [i for i in ids if i not in BOUND_IDS]
    if unknown:
        raise KeyError(f"unknown bound ids {unknown}; valid ids: {', '.join(BOUND_IDS)}")
    if spec is None:
        spec = SeminormSpec.uniform(trace.mdp.n_states, 2.0)
    got = {}
    exact = [i for i in ids if i in EXACT_IDS]
    croc = [i for i in ids if i in CROC_IDS]
    if exact or croc:
        for r in exact_rate_sweep(trace, k_max, spec, ids=tuple(exact + croc)):
            got[r.bound_id] = r
    if any(i in APPROX_IDS for i in ids):
        for r in check_approx_bounds(trace, k0, window):
            got[r.bound_id] = r
    if any(i in CONV_IDS for i in ids):
        for r in check_convergence_case_bounds(trace, window):
            got[r.bound_id] = r
    rest = [i for i in ids if i == "stopexact" or i in SPAPI_IDS or i in CALPI_IDS]
    if rest:
        for r in seminorm_bound_suite(trace, spec, nu, window=window, ids=rest):
            got[r.bound_id] = r
    return [got[i] for i in ids if i in got]

