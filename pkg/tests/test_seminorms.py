import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import minimize_scalar

from lambdapi import SeminormSpec, max_norm, mixed_distribution, span_inf, span_p, weighted_lp_norm
from lambdapi.seminorms import shift_minimizer, span_p_rows

finite = st.floats(-1e3, 1e3, allow_nan=False)
exponents = st.sampled_from([1.0, 1.5, 2.0, 3.0, 4.0, math.inf])


@st.composite
def vector_and_weights(draw, n_min=1, n_max=8):
    n = draw(st.integers(n_min, n_max))
    u = draw(arrays(float, n, elements=finite))
    w = draw(arrays(float, n, elements=st.floats(0.0, 1.0)))
    if w.sum() == 0:
        w[draw(st.integers(0, n - 1))] = 1.0
    return u, w / w.sum()


def _brute_span(u, p, mu):
    # dense grid plus local refinement of the shift
    grid = np.linspace(u.min(), u.max(), 2001)
    vals = [weighted_lp_norm(u - a, p, mu) for a in grid]
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    fine = np.linspace(lo, hi, 2001)
    return 2.0 * min(weighted_lp_norm(u - a, p, mu) for a in fine)


def test_weighted_lp_norm_values():
    mu = np.array([0.5, 0.5])
    assert weighted_lp_norm([3.0, -4.0], 1, mu) == pytest.approx(3.5)
    assert weighted_lp_norm([3.0, -4.0], 2, mu) == pytest.approx(math.sqrt(12.5))
    assert weighted_lp_norm([3.0, -4.0], math.inf, mu) == 4.0
    # entries outside the support are ignored
    assert weighted_lp_norm([3.0, -40.0], math.inf, [1.0, 0.0]) == 3.0


def test_large_exponent_does_not_overflow():
    assert weighted_lp_norm([1e200, 1e200], 8.0, [0.5, 0.5]) == pytest.approx(1e200)


def test_span_inf_and_max_norm():
    assert span_inf([1.0, -2.0, 5.0]) == 7.0
    assert max_norm([1.0, -7.0, 5.0]) == 7.0


@pytest.mark.parametrize("mu", [[0.5, 0.6], [-0.1, 1.1], [1.0]])
def test_invalid_distribution(mu):
    with pytest.raises(ValueError):
        weighted_lp_norm([1.0, 2.0], 2.0, mu)


def test_invalid_exponent():
    with pytest.raises(ValueError, match="p must be"):
        span_p([1.0, 2.0], 0.5, [0.5, 0.5])


@given(vector_and_weights(), exponents, finite)
def test_span_ignores_constants(uw, p, c):
    u, mu = uw
    a, b = span_p(u, p, mu), span_p(u + c, p, mu)
    assert b == pytest.approx(a, rel=1e-7, abs=1e-7)


@given(vector_and_weights(), exponents)
def test_span_is_at_most_twice_the_norm(uw, p):
    u, mu = uw
    assert span_p(u, p, mu) <= 2.0 * weighted_lp_norm(u, p, mu) + 1e-9


@given(vector_and_weights(), exponents)
def test_span_is_at_most_span_inf(uw, p):
    u, mu = uw
    assert span_p(u, p, mu) <= span_inf(u) * (1 + 1e-9) + 1e-9


@given(vector_and_weights(), st.sampled_from([1.0, 1.5, 3.0, 4.0]))
def test_shift_minimizer_is_optimal(uw, p):
    u, mu = uw
    a = shift_minimizer(u, p, mu)
    best = weighted_lp_norm(u - a, p, mu)
    for da in (-1e-3, 1e-3):
        assert best <= weighted_lp_norm(u - (a + da * (1 + span_inf(u))), p, mu) + 1e-9 * (1 + max_norm(u))


@given(vector_and_weights(n_min=2), st.sampled_from([1.0, 2.0]))
def test_closed_forms_match_golden_search(uw, p):
    u, mu = uw
    fa = weighted_lp_norm(u - shift_minimizer(u, p, mu), p, mu)
    fg = weighted_lp_norm(u - shift_minimizer(u, p, mu, method="golden"), p, mu)
    assert fa == pytest.approx(fg, rel=1e-8, abs=1e-8)


@pytest.mark.parametrize("p", [1.0, 2.0, 3.0, 4.0])
def test_span_matches_brute_force(p):
    rng = np.random.default_rng(int(p * 10))
    for _ in range(5):
        u = rng.normal(size=6)
        mu = rng.dirichlet(np.ones(6))
        assert span_p(u, p, mu) == pytest.approx(_brute_span(u, p, mu), rel=1e-6)


@given(vector_and_weights(n_min=2), st.sampled_from([1.5, 2.5, 3.0, 6.0]))
def test_span_matches_scipy_minimizer(uw, p):
    u, mu = uw
    lo, hi = float(u.min()), float(u.max())
    if hi - lo < 1e-9:
        assert span_p(u, p, mu) == pytest.approx(0.0, abs=1e-9)
        return
    res = minimize_scalar(lambda a: weighted_lp_norm(u - a, p, mu), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-12 * (1 + hi - lo)})
    # the span is a value of the objective, so it can only lose to scipy by rounding
    assert span_p(u, p, mu) <= 2.0 * res.fun * (1 + 1e-9) + 1e-9 * (1 + max_norm(u))


def test_span_inf_weighted_uses_support():
    assert span_p([0.0, 10.0, 4.0], math.inf, [0.5, 0.0, 0.5]) == pytest.approx(4.0)
    assert span_p([0.0, 10.0, 4.0], math.inf, [1 / 3] * 3) == pytest.approx(span_inf([0.0, 10.0, 4.0]))


def test_span_p_rows_matches_single():
    rng = np.random.default_rng(3)
    U = rng.normal(size=(7, 5))
    W = rng.dirichlet(np.ones(5), size=7)
    rows = span_p_rows(U, 3.0, W)
    for u, w, s in zip(U, W, rows):
        assert s == pytest.approx(span_p(u, 3.0, w), rel=1e-12)


def test_span_p_rows_shape_mismatch():
    with pytest.raises(ValueError, match="shape mismatch"):
        span_p_rows(np.zeros((2, 3)), 2.0, np.full((3, 3), 1 / 3))


def test_mixed_distribution():
    X = np.array([[1.0, 0.0], [0.0, 1.0]])
    Y = np.array([[0.0, 1.0], [0.0, 1.0]])
    np.testing.assert_allclose(mixed_distribution([0.5, 0.5], X, Y), [0.25, 0.75])
    with pytest.raises(ValueError):
        mixed_distribution([0.5, 0.5], X, np.eye(3))


def test_seminorm_spec_dispatch():
    u = np.array([1.0, 3.0])
    assert SeminormSpec("max")(u) == 3.0
    assert SeminormSpec("span_inf")(u) == 2.0
    assert SeminormSpec.uniform(2, 2.0)(u) == pytest.approx(2.0)
    assert SeminormSpec("lp_weighted", 1.0, (0.5, 0.5))(u) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        SeminormSpec("span_p_weighted", 2.0)
    with pytest.raises(ValueError):
        SeminormSpec("nope")
