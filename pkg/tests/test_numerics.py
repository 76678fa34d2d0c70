import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from discofit.errors import EmptyInput, InvalidBaseline, LengthMismatch, NoConvergenceWarning
from discofit.numerics import (
    Box,
    ErrorReport,
    QuadratureConfig,
    integrate_cells,
    l2_norm,
    ratio_metrics,
    rmse,
)

GAUSS_NORM_1D = (math.pi / 2) ** 0.25


def gauss(x):
    return np.exp(-np.sum(x ** 2, axis=1))


def test_gaussian_norm_closed_form_matches_scipy():
    # independent oracle for the closed form (pi/2)^(1/4)
    val, _ = integrate.quad(lambda t: math.exp(-2 * t * t), -10, 10, epsabs=0, epsrel=1e-13, limit=200)
    np.testing.assert_allclose(math.sqrt(val), GAUSS_NORM_1D, rtol=1e-13)
    # frozen from the independent quadrature above
    np.testing.assert_allclose(GAUSS_NORM_1D, 1.1195151349, atol=1e-10)


def test_gaussian_norm():
    np.testing.assert_allclose(l2_norm(gauss, Box((-10.0,), (10.0,))), GAUSS_NORM_1D, rtol=1e-10)


def test_zero_function():
    assert l2_norm(lambda x: np.zeros(len(x)), Box((0.0, 0.0), (1.0, 2.0))) == 0.0


def test_unit_constant_unit_square():
    np.testing.assert_allclose(l2_norm(lambda x: np.ones(len(x)), Box((0.0, 0.0), (1.0, 1.0))), 1.0, rtol=1e-14)


def test_gaussian_norm_3d():
    box = Box((-6.0,) * 3, (6.0,) * 3)
    np.testing.assert_allclose(l2_norm(gauss, box), GAUSS_NORM_1D ** 3, rtol=1e-9)


def test_monotone_convergence_8_16_32():
    f2 = lambda x: gauss(x) ** 2
    lo, hi = np.array([[-10.0]]), np.array([[10.0]])
    errs = [abs(math.sqrt(integrate_cells(f2, lo, hi, n)) - GAUSS_NORM_1D) for n in (8, 16, 32)]
    assert errs[1] <= errs[0]
    assert errs[2] <= errs[1]


def test_breakpoints_resolve_narrow_bump():
    A = 1e4
    f = lambda x: np.exp(-(A * (x[:, 0] - 0.3)) ** 2)
    bp = [0.3 + np.array([-5, -1, 0, 1, 5]) / A]
    exact = GAUSS_NORM_1D / math.sqrt(A)
    np.testing.assert_allclose(l2_norm(f, Box((0.0,), (1.0,)), breakpoints=bp), exact, rtol=1e-10)


def test_no_convergence_warns():
    cfg = QuadratureConfig(points_per_axis=4, refinement_limit=1, rel_tol=1e-14)
    step = lambda x: (x[:, 0] > 0.123).astype(float)
    with pytest.warns(NoConvergenceWarning):
        res = l2_norm(step, Box((0.0,), (1.0,)), cfg, full_output=True)
    assert not res.converged
    assert res.value > 0


def test_qmc_four_dims():
    box = Box((-3.0,) * 4, (3.0,) * 4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NoConvergenceWarning)
        res = l2_norm(gauss, box, full_output=True)
    exact = GAUSS_NORM_1D ** 4
    assert res.error_estimate < 1e-3 * exact
    assert abs(res.value - exact) < 4 * res.error_estimate


def _poly(coef, x):
    # sum_k coef[k, i] * x_i ** k over axes, plus a cross term
    powers = np.stack([x ** k for k in range(coef.shape[0])])
    return np.einsum("kni,ki->n", powers, coef) + coef[0, 0] * np.prod(x, axis=1)


cases = st.tuples(
    st.integers(1, 3),
    st.integers(0, 2 ** 32 - 1),
    st.floats(-50, 50).filter(lambda c: abs(c) > 1e-6),
)
POLY_CFG = QuadratureConfig(points_per_axis=8, refinement_limit=1, rel_tol=1e-9)


def _random_box_and_poly(d, seed):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(-2, 1, d)
    box = Box(tuple(lo), tuple(lo + rng.uniform(0.1, 3, d)))
    coef = rng.normal(size=(4, d))
    return rng, box, coef


@settings(max_examples=1000, deadline=None)
@given(cases)
def test_homogeneity(case):
    d, seed, c = case
    _, box, coef = _random_box_and_poly(d, seed)
    f = lambda x: _poly(coef, x)
    base = l2_norm(f, box, POLY_CFG)
    scaled = l2_norm(lambda x: c * f(x), box, POLY_CFG)
    np.testing.assert_allclose(scaled, abs(c) * base, rtol=POLY_CFG.rel_tol)


@settings(max_examples=1000, deadline=None)
@given(cases)
def test_triangle_inequality(case):
    d, seed, _ = case
    rng, box, coef = _random_box_and_poly(d, seed)
    coef2 = rng.normal(size=(4, d))
    f = lambda x: _poly(coef, x)
    g = lambda x: _poly(coef2, x)
    lhs = l2_norm(lambda x: f(x) + g(x), box, POLY_CFG)
    rhs = l2_norm(f, box, POLY_CFG) + l2_norm(g, box, POLY_CFG)
    assert lhs <= rhs * (1 + 2 * POLY_CFG.rel_tol)


def test_box_validation():
    with pytest.raises(ValueError):
        Box((0.0, 1.0), (1.0, 1.0))
    with pytest.raises(ValueError):
        Box((0.0,), (1.0, 2.0))
    b = Box.around(np.array([[0.0, 1.0], [2.0, -1.0]]), 0.5)
    assert b.lower == (-0.5, -1.5) and b.upper == (2.5, 1.5)
    assert b.volume == pytest.approx(9.0)


def test_quadrature_config_validation():
    with pytest.raises(ValueError):
        QuadratureConfig(points_per_axis=1)
    with pytest.raises(ValueError):
        QuadratureConfig(rel_tol=0.0)


@pytest.mark.parametrize(
    "p, a, expected",
    [([1, 2, 3], [1, 2, 3], 0.0), ([0, 0], [3, 4], math.sqrt(25 / 2)), ([-0.7], [0], 0.7)],
)
def test_rmse_examples(p, a, expected):
    np.testing.assert_allclose(rmse(p, a), expected, rtol=1e-15)


def test_rmse_hand_value():
    np.testing.assert_allclose(rmse([0, 0], [3, 4]), 3.5355339, atol=5e-8)


def test_rmse_errors():
    with pytest.raises(LengthMismatch):
        rmse([1, 2], [1])
    with pytest.raises(EmptyInput):
        rmse([], [])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30), st.integers(0, 2 ** 32 - 1))
def test_rmse_symmetric_nonnegative(p, seed):
    a = np.random.default_rng(seed).normal(size=len(p))
    assert rmse(p, a) == rmse(a, p)
    assert rmse(p, a) >= 0


def test_ratio_identity_and_scaling():
    a = ErrorReport(0.5, 1e-3, 2e-3, 4, 10)
    assert ratio_metrics(a, a) == {"rtt": 1.0, "rtrr": 1.0, "rter": 1.0}
    b = ErrorReport(1.0, 2e-3, 4e-3, 4, 10)
    assert ratio_metrics(a, b) == {"rtt": 2.0, "rtrr": 2.0, "rter": 2.0}


def test_ratio_printed_table_rows():
    a = ErrorReport(0.234, 9.2318e-7, 0.00026123, 4, 0)
    b = ErrorReport(5.8968, 0.012537, 0.0057322, 4, 0)
    r = ratio_metrics(a, b)
    np.testing.assert_allclose([r["rtt"], r["rtrr"], r["rter"]], [25.2, 13580, 21.943], rtol=2e-4)


def test_ratio_invalid_baseline():
    with pytest.raises(InvalidBaseline):
        ratio_metrics(ErrorReport(0.0, 1.0, 1.0, 1, 1), ErrorReport(1.0, 1.0, 1.0, 1, 1))
    with pytest.raises(InvalidBaseline):
        ratio_metrics(ErrorReport(1.0, 1.0, None, 1, 1), ErrorReport(1.0, 1.0, 1.0, 1, 1))


def test_error_report_nonnegative():
    with pytest.raises(ValueError):
        ErrorReport(-1.0, 0.0, 0.0, 1, 1)
