"""Weighted L_p norms and span seminorms on finite state spaces.

The span seminorm of ``u`` under ``(p, mu)`` is ``2 * min_a |u - a e|_{p,mu}``.
It vanishes exactly on constant vectors (restricted to the support of
``mu``), which is what lets error bounds ignore constant offsets in value
functions.

Closed forms are used for the shift minimizer when ``p`` is 1, 2 or
infinity. Other exponents go through a golden-section search that is
vectorized over rows, since the bound checker evaluates thousands of spans
of the same vector under different weightings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SeminormSpec",
    "weighted_lp_norm",
    "max_norm",
    "span_inf",
    "span_p",
    "span_p_rows",
    "shift_minimizer",
    "mixed_distribution",
    "check_distribution",
]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
SHIFT_ATOL = 1e-10


def check_distribution(mu, n: int | None = None, atol: float = 1e-12) -> np.ndarray:
    """Validate a probability vector and return it as a float array."""
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1:
        raise ValueError("a distribution must be a 1-D vector")
    if n is not None and mu.shape[0] != n:
        raise ValueError(f"distribution has length {mu.shape[0]}, expected {n}")
    if np.any(mu < 0) or not np.all(np.isfinite(mu)):
        raise ValueError("distribution entries must be finite and nonnegative")
    if abs(mu.sum() - 1.0) > atol:
        raise ValueError(f"distribution must sum to 1, got {mu.sum()!r}")
    return mu


def _check_p(p) -> float:
    p = float(p)
    if not p >= 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    return p


@dataclass(frozen=True)
class SeminormSpec:
    """Selector for one of the norms or seminorms in this module.

    Parameters
    ----------
    kind : {"lp_weighted", "max", "span_inf", "span_p_weighted"}
    p : float
        Exponent, at least 1; ``math.inf`` is allowed.
    mu : tuple of float, optional
        Weighting distribution, required by the weighted kinds.
    """

    kind: str = "span_p_weighted"
    p: float = 2.0
    mu: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("lp_weighted", "max", "span_inf", "span_p_weighted"):
            raise ValueError(f"unknown seminorm kind {self.kind!r}")
        _check_p(self.p)
        if self.kind in ("lp_weighted", "span_p_weighted"):
            if self.mu is None:
                raise ValueError(f"{self.kind} needs a weighting distribution")
            object.__setattr__(self, "mu", tuple(check_distribution(self.mu).tolist()))

    @classmethod
    def uniform(cls, n_states: int, p: float = 2.0) -> "SeminormSpec":
        return cls("span_p_weighted", p, tuple(np.full(n_states, 1.0 / n_states)))

    @property
    def weights(self) -> np.ndarray:
        return np.asarray(self.mu, dtype=float)

    def __call__(self, u) -> float:
        if self.kind == "max":
            return max_norm(u)
        if self.kind == "span_inf":
            return span_inf(u)
        if self.kind == "lp_weighted":
            return weighted_lp_norm(u, self.p, self.weights)
        return span_p(u, self.p, self.weights)


def _lp_rows(U: np.ndarray, p: float, W: np.ndarray) -> np.ndarray:
    # row-wise (sum_x w(x) |u(x)|^p)^(1/p), scaled to keep large p finite
    # entries off the support are dropped before scaling so they cannot overflow
    A = np.where(W > 0, np.abs(U), 0.0)
    if math.isinf(p):
        return A.max(axis=1)
    scale = A.max(axis=1)
    safe = np.where(scale > 0, scale, 1.0)
    inner = (W * (A / safe[:, None]) ** p).sum(axis=1)
    return np.where(scale > 0, safe * inner ** (1.0 / p), 0.0)


def weighted_lp_norm(u, p: float, mu) -> float:
    """``(sum_x mu(x) |u(x)|^p)^(1/p)``; with ``p = inf``, the max over the support of ``mu``."""
    u = np.asarray(u, dtype=float)
    p = _check_p(p)
    mu = check_distribution(mu, u.shape[0])
    return float(_lp_rows(u[None, :], p, mu[None, :])[0])


def max_norm(u) -> float:
    """``max_x |u(x)|``."""
    u = np.asarray(u, dtype=float)
    return float(np.max(np.abs(u))) if u.size else 0.0


def span_inf(u) -> float:
    """``max_x u(x) - min_x u(x)``."""
    u = np.asarray(u, dtype=float)
    return float(u.max() - u.min()) if u.size else 0.0


def _weighted_median_rows(U: np.ndarray, W: np.ndarray) -> np.ndarray:
    order = np.argsort(U, axis=1, kind="stable")
    us = np.take_along_axis(U, order, axis=1)
    cw = np.cumsum(np.take_along_axis(W, order, axis=1), axis=1)
    # first sorted point whose cumulative weight reaches one half
    idx = (cw < 0.5 * cw[:, -1:]).sum(axis=1)
    idx = np.minimum(idx, U.shape[1] - 1)
    return us[np.arange(U.shape[0]), idx]


def _golden_rows(U: np.ndarray, p: float, W: np.ndarray) -> np.ndarray:
    """Row-wise golden-section search for ``argmin_a sum_x w(x) |u(x) - a|^p``."""
    lo = U.min(axis=1)
    hi = U.max(axis=1)
    width = hi - lo
    scale = np.where(width > 0, width, 1.0)
    center = 0.5 * (lo + hi)
    Z = (U - center[:, None]) / scale[:, None]  # lives in [-1/2, 1/2]

    def f(a):
        return (W * np.abs(Z - a[:, None]) ** p).sum(axis=1)

    a, b = np.full(U.shape[0], -0.5), np.full(U.shape[0], 0.5)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    tol = SHIFT_ATOL / np.maximum(scale, 1.0)
    n_iter = int(math.ceil(math.log(float(np.min(tol))) / math.log(_GOLDEN))) + 2
    for _ in range(max(n_iter, 1)):
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c_new = b - _GOLDEN * (b - a)
        d_new = a + _GOLDEN * (b - a)
        # reuse the surviving interior point, evaluate only the new one
        keep_c = np.where(left, c_new, d)
        keep_d = np.where(left, c, d_new)
        f_new = f(np.where(left, c_new, d_new))
        fc, fd = np.where(left, f_new, fd), np.where(left, fc, f_new)
        c, d = keep_c, keep_d
    return center + scale * 0.5 * (a + b)


def _shift_rows(U: np.ndarray, p: float, W: np.ndarray) -> np.ndarray:
    if math.isinf(p):
        masked_hi = np.where(W > 0, U, -np.inf).max(axis=1)
        masked_lo = np.where(W > 0, U, np.inf).min(axis=1)
        return 0.5 * (masked_hi + masked_lo)
    if p == 1.0:
        return _weighted_median_rows(U, W)
    if p == 2.0:
        return (W * U).sum(axis=1) / W.sum(axis=1)
    return _golden_rows(U, p, W)


def shift_minimizer(u, p: float, mu, method: str = "auto") -> float:
    """Constant ``a`` minimizing ``|u - a e|_{p,mu}``.

    Parameters
    ----------
    method : {"auto", "golden"}
        ``"auto"`` uses the closed forms for p in {1, 2, inf}; ``"golden"``
        forces the generic search (used to cross-check the closed forms).
    """
    u = np.asarray(u, dtype=float)
    p = _check_p(p)
    mu = check_distribution(mu, u.shape[0])
    if method == "golden" and not math.isinf(p):
        return float(_golden_rows(u[None, :], p, mu[None, :])[0])
    if method not in ("auto", "golden"):
        raise ValueError(f"unknown method {method!r}")
    return float(_shift_rows(u[None, :], p, mu[None, :])[0])


def span_p_rows(U, p: float, W) -> np.ndarray:
    """Span seminorms of many vectors at once.

    Parameters
    ----------
    U : array, shape (m, n) or (n,)
        Vectors, one per row. A single vector is broadcast against ``W``.
    p : float
    W : array, shape (m, n)
        One weighting distribution per row.

    Returns
    -------
    array, shape (m,)
    """
    p = _check_p(p)
    W = np.atleast_2d(np.asarray(W, dtype=float))
    U = np.asarray(U, dtype=float)
    if U.ndim == 1:
        U = np.broadcast_to(U, W.shape)
    if U.shape != W.shape:
        raise ValueError(f"shape mismatch between vectors {U.shape} and weights {W.shape}")
    a = _shift_rows(U, p, W)
    return 2.0 * _lp_rows(U - a[:, None], p, W)


def span_p(u, p: float, mu) -> float:
    """``2 * min_a |u - a e|_{p,mu}``."""
    u = np.asarray(u, dtype=float)
    mu = check_distribution(mu, u.shape[0])
    return float(span_p_rows(u, p, mu[None, :])[0])


def mixed_distribution(mu, X, Xp) -> np.ndarray:
    """The distribution ``mu (X + X') / 2`` for row-stochastic ``X`` and ``X'``."""
    X = np.asarray(X, dtype=float)
    Xp = np.asarray(Xp, dtype=float)
    if X.shape != Xp.shape or X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError(f"X and X' must be square and of equal shape, got {X.shape}, {Xp.shape}")
    mu = check_distribution(mu, X.shape[0])
    out = 0.5 * (mu @ X + mu @ Xp)
    # rounding in products of stochastic matrices can leave -1e-17 entries
    return np.clip(out, 0.0, None)
