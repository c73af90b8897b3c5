import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special as sps

from pfrelay._quadrature import adaptive_gk_1d, adaptive_gk_2d
from pfrelay.special_functions import (
    BivariateGSpec,
    ContourSpec,
    ContourWarning,
    MeijerGSpec,
    PoleCollisionError,
    PoleError,
    QuadratureError,
    auto_contour_bivariate,
    auto_contour_univariate,
    bivariate_meijer_g,
    bivariate_meijer_g_sum,
    digamma,
    gamma_prod,
    log_gamma_prod,
    meijer_g,
    modified_bessel_k,
    saddle_contour_bivariate,
    saddle_contour_univariate,
    with_contour,
)

# Reference values, computed once with mpmath at 30 digits and frozen.
K0_AT_2 = 0.11389387274953343565
TWO_K1_AT_2 = 0.27973176363304485457
# First capacity-series term (k = l = n = 0, n_s = n_r = 2, x = y = 1), from
# the one-dimensional Bessel-integral representation integrated by scipy.
FIRST_CAPACITY_TERM = 0.40709382107854114

EXP_SPEC = MeijerGSpec(1, 0, (), (0,))
LOG_SPEC = MeijerGSpec(1, 2, (1, 1), (1, 0))


def bessel_spec(nu):
    return MeijerGSpec(2, 0, (), (nu / 2, -nu / 2))


# ---------------------------------------------------------------------------
# gamma products
# ---------------------------------------------------------------------------

@given(st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False))
def test_gamma_prod_empty_is_exactly_one(z):
    assert gamma_prod([], z) == 1


def test_gamma_prod_small_values():
    assert gamma_prod([1], 1) == pytest.approx(1.0, abs=1e-14)
    assert gamma_prod([2, 3], 0) == pytest.approx(2.0, abs=1e-13)


def test_gamma_prod_matches_scipy_off_axis():
    z = 0.3 + 2.1j
    ref = sps.gamma(1.5 + z) * sps.gamma(-0.7 + z)
    assert gamma_prod([1.5, -0.7], z) == pytest.approx(ref, rel=1e-12)


def test_gamma_prod_pole_raises():
    with pytest.raises(PoleError):
        gamma_prod([1], -1)
    with pytest.raises(PoleError):
        log_gamma_prod([0.5, -2], 2)


def test_log_gamma_prod_large_arguments_stay_finite():
    # Gamma(300) overflows a double; its log does not
    val = log_gamma_prod([150, 150], 150)
    assert val.real == pytest.approx(2 * math.lgamma(300), rel=1e-13)


def test_log_gamma_prod_broadcasts():
    z = np.array([1.0 + 0j, 2.0, 3.0])
    np.testing.assert_allclose(log_gamma_prod([1], z).real,
                               [math.lgamma(2), math.lgamma(3), math.lgamma(4)], rtol=1e-13)


# ---------------------------------------------------------------------------
# Bessel K and digamma
# ---------------------------------------------------------------------------

def test_bessel_k0_reference_value():
    assert modified_bessel_k(0, 2.0) == pytest.approx(K0_AT_2, rel=1e-13)


@pytest.mark.parametrize("nu", range(0, 12))
def test_bessel_k_against_scipy(nu):
    x = np.geomspace(1e-4, 600, 400)
    np.testing.assert_allclose(modified_bessel_k(nu, x), sps.kv(nu, x), rtol=1e-12)


@given(st.integers(0, 15), st.floats(1e-3, 300))
def test_bessel_k_order_symmetry(nu, x):
    assert modified_bessel_k(-nu, x) == modified_bessel_k(nu, x)


def test_bessel_k1_small_argument_limit():
    for x in (1e-3, 1e-5, 1e-7):
        assert x * modified_bessel_k(1, x) == pytest.approx(1.0, abs=10 * x)


def test_bessel_k_rejects_bad_input():
    with pytest.raises(ValueError):
        modified_bessel_k(0, 0.0)
    with pytest.raises(ValueError):
        modified_bessel_k(0.5, 1.0)


def test_bessel_k_scalar_and_array_types():
    assert isinstance(modified_bessel_k(1, 1.5), float)
    assert modified_bessel_k(1, [1.5, 2.5]).shape == (2,)


def test_digamma_small_values():
    assert digamma(1) == pytest.approx(-0.5772156649, abs=1e-10)
    assert digamma(2) == pytest.approx(0.4227843351, abs=1e-10)
    assert digamma(4) == pytest.approx(-0.5772156649015329 + 1 + 1 / 2 + 1 / 3, abs=1e-14)


@given(st.integers(1, 500))
def test_digamma_matches_scipy(n):
    assert digamma(n) == pytest.approx(sps.digamma(n), rel=1e-13, abs=1e-15)


def test_digamma_rejects_non_positive():
    with pytest.raises(ValueError):
        digamma(0)


# ---------------------------------------------------------------------------
# specs and contours
# ---------------------------------------------------------------------------

def test_meijer_spec_index_checks():
    with pytest.raises(ValueError):
        MeijerGSpec(2, 0, (), (0,))
    with pytest.raises(ValueError):
        MeijerGSpec(0, 1, (), (0,))
    spec = MeijerGSpec(1, 2, (1, 1), (1, 0))
    assert (spec.p, spec.q) == (2, 2)


def test_meijer_spec_pole_collision():
    with pytest.raises(PoleCollisionError):
        MeijerGSpec(1, 1, (3,), (1,))


def test_auto_contour_single_family_offset():
    # Only the right family {0, 1, 2, ...} from Gamma(-s): the line is 1 to its left.
    c = auto_contour_univariate(EXP_SPEC)
    assert c.cs == -1.0


def test_auto_contour_separates_families():
    c = auto_contour_univariate(LOG_SPEC)
    assert 0.0 < c.cs < 1.0


def test_auto_contour_no_gap():
    # a - 1 = 1.5 is right of b = 1, but the difference is not an integer
    spec = MeijerGSpec(1, 1, (2.5,), (1,))
    with pytest.raises(PoleCollisionError):
        auto_contour_univariate(spec)


def test_contour_spec_validation():
    with pytest.raises(ValueError):
        ContourSpec(cs=0, W=0)
    with pytest.raises(ValueError):
        ContourSpec(cs=0, abs_tol=0)
    with pytest.raises(ValueError):
        ContourSpec(cs=0, max_evals=0)


def test_auto_contour_bivariate_rules():
    spec = BivariateGSpec(cm2=(1, 1), dn2=(1, 0), fn3=(0,))
    c = auto_contour_bivariate(spec, 1.0, 1.0)
    assert (c.cs, c.W) == (0.0, 10.0)

    # Supt = 0, Inft = em3 - 1 = -1
    spec = BivariateGSpec(cm2=(1,), dn2=(1,), em3=(0,), fn3=(0, 2))
    c = auto_contour_bivariate(spec, 1.0, 1.0)
    assert c.ct == pytest.approx(-0.1)


def test_auto_contour_bivariate_on_pole_is_caught_at_evaluation():
    # dn2 = {1, 0} with cm2 = {1, 1} puts the s-line on the pole at 0
    spec = BivariateGSpec(cm2=(1, 1), dn2=(1, 0), fn3=(0,))
    with pytest.raises(PoleCollisionError):
        bivariate_meijer_g(spec, 1.0, 1.0)


def test_auto_contour_bivariate_empty_groups():
    with pytest.raises(ValueError, match="s group"):
        auto_contour_bivariate(BivariateGSpec(fn3=(0,)), 1.0, 1.0)
    with pytest.raises(ValueError, match="t group"):
        auto_contour_bivariate(BivariateGSpec(dn2=(1,)), 1.0, 1.0)
    c = auto_contour_bivariate(BivariateGSpec(dn2=(1,), fn3=(0,)), 1.0, 1.0)
    assert (c.cs, c.ct) == (0.0, -1.0)


def test_bivariate_spec_rejects_non_finite():
    with pytest.raises(ValueError):
        BivariateGSpec(am1=(math.inf,))


def test_nudge_near_pole_warns():
    contour = with_contour(auto_contour_univariate(LOG_SPEC), cs=0.9995)
    with pytest.warns(ContourWarning):
        val = meijer_g(LOG_SPEC, 1.0, contour)
    assert val == pytest.approx(math.log(2), abs=1e-8)


def test_contour_outside_strip_raises():
    contour = with_contour(auto_contour_univariate(LOG_SPEC), cs=1.5)
    with pytest.raises(PoleCollisionError):
        meijer_g(LOG_SPEC, 1.0, contour)


# ---------------------------------------------------------------------------
# univariate Meijer G
# ---------------------------------------------------------------------------

def test_meijer_g_exp_example():
    assert meijer_g(EXP_SPEC, 2.0) == pytest.approx(0.1353352832, abs=1e-9)


def test_meijer_g_log_example():
    assert meijer_g(LOG_SPEC, 1.0) == pytest.approx(0.6931471806, abs=1e-9)


def test_meijer_g_bessel_example():
    assert meijer_g(bessel_spec(1), 1.0) == pytest.approx(TWO_K1_AT_2, abs=1e-10)


@pytest.mark.parametrize("z", [0.1, 1.0, 5.0])
def test_identity_exp(z):
    assert abs(meijer_g(EXP_SPEC, z) - math.exp(-z)) < 1e-6


@pytest.mark.parametrize("z", [0.5, 1.0, 3.0])
def test_identity_log(z):
    assert abs(meijer_g(LOG_SPEC, z) - math.log1p(z)) < 1e-6


@pytest.mark.parametrize("nu", [0, 1, 2])
@pytest.mark.parametrize("z", [0.25, 1.0, 4.0])
def test_identity_bessel(nu, z):
    assert abs(0.5 * meijer_g(bessel_spec(nu), z) - modified_bessel_k(nu, 2 * math.sqrt(z))) < 1e-6


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(-0.9, 0.9), st.floats(0.1, 3.0))
def test_meijer_g_against_mpmath(b1, a1, z):
    # G^{2,1}_{2,2}(z | a1, a1 + 1.5; b1, b1 - 0.5): generic, non-degenerate
    spec = MeijerGSpec(2, 1, (a1, a1 + 1.5), (b1, b1 - 0.5))
    if a1 - 1 >= b1 - 0.5:
        return
    ref = float(mpmath.meijerg([[a1], [a1 + 1.5]], [[b1, b1 - 0.5], []], z))
    assert meijer_g(spec, z) == pytest.approx(ref, rel=1e-7, abs=1e-10)


def test_meijer_g_log_scale():
    base = meijer_g(EXP_SPEC, 2.0)
    scaled = meijer_g(EXP_SPEC, 2.0, log_scale=50.0)
    assert scaled == pytest.approx(base * math.exp(50.0), rel=1e-9)


def test_meijer_g_rejects_non_positive_argument():
    with pytest.raises(ValueError):
        meijer_g(EXP_SPEC, 0.0)


def test_meijer_g_budget_exhaustion():
    contour = ContourSpec(cs=-1.0, W=30, abs_tol=1e-15, rel_tol=1e-15, max_evals=10)
    with pytest.raises(QuadratureError) as info:
        meijer_g(EXP_SPEC, 0.1, contour)
    assert info.value.value is not None


def test_short_contour_is_inaccurate():
    contour = with_contour(auto_contour_univariate(EXP_SPEC), W=0.5)
    assert abs(meijer_g(EXP_SPEC, 0.1, contour) - math.exp(-0.1)) > 1e-2


@pytest.mark.parametrize("z", [1e-8, 1e-3, 1.0, 50.0, 400.0])
def test_saddle_contour_univariate(z):
    spec = MeijerGSpec(3, 0, (0,), (-1, 1, 1))
    contour, log_mod = saddle_contour_univariate(spec, z, abs_tol=1e-14, rel_tol=1e-10)
    assert contour.cs < -1
    ref = float(mpmath.meijerg([[], [0]], [[-1, 1, 1], []], z))
    val = meijer_g(spec, z, contour, log_scale=-log_mod) * math.exp(log_mod)
    assert val == pytest.approx(ref, rel=1e-8)


# ---------------------------------------------------------------------------
# bivariate Meijer G
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("x,y", [(0.5, 0.7), (2.0, 0.3), (1.0, 3.0)])
def test_bivariate_factorizes_log_times_exp(x, y):
    spec = BivariateGSpec(cm2=(1, 1), dn2=(1,), dq2=(0,), fn3=(0,))
    val = bivariate_meijer_g(spec, x, y)
    ref = meijer_g(LOG_SPEC, x) * meijer_g(EXP_SPEC, y)
    assert val == pytest.approx(ref, rel=1e-4)


def test_bivariate_factorizes_exp_times_bessel():
    spec = BivariateGSpec(dn2=(0,), fn3=(0.5, -0.5))
    x, y = 0.8, 1.2
    ref = math.exp(-x) * 2 * modified_bessel_k(1, 2 * math.sqrt(y))
    assert bivariate_meijer_g(spec, x, y) == pytest.approx(ref, rel=1e-4)


def first_capacity_spec(n_s=2, n_r=2):
    return BivariateGSpec(am1=(2,), cm2=(1, 1), dn2=(1,), dq2=(0,), ep3=(0,),
                          fn3=(-1, n_r - 1, n_s - 1))


def test_first_capacity_term():
    val = bivariate_meijer_g(first_capacity_spec(), 1.0, 1.0)
    assert val == pytest.approx(FIRST_CAPACITY_TERM, rel=1e-5)
    assert val > 0


@pytest.mark.parametrize("m", [0, 3, 8])
def test_w_doubling_on_capacity_family(m):
    spec = BivariateGSpec(am1=(m + 2,), cm2=(1, 1), dn2=(1,), dq2=(0,), ep3=(0,),
                          fn3=(-1, 1 - m, 1 - m))
    x, y = 0.5, 0.5
    c10 = auto_contour_bivariate(spec, x, y)
    a = bivariate_meijer_g(spec, x, y, c10)
    b = bivariate_meijer_g(spec, x, y, with_contour(c10, W=20))
    assert abs(a - b) <= 1e-5 * abs(b)


def test_bivariate_rejects_bn1():
    with pytest.raises(ValueError):
        bivariate_meijer_g(BivariateGSpec(bn1=(1,), dn2=(1,), fn3=(0,)), 1.0, 1.0)


def test_bivariate_sum_matches_difference():
    first = first_capacity_spec()
    second = BivariateGSpec(am1=(1,), cm2=(1, 1), dn2=(1,), dq2=(0,), em3=(-1,), ep3=(0,),
                            fn3=(-1, 1, 1), fq3=(0,))
    x, y = 1.0, 1.0
    tight = dict(abs_tol=1e-9, rel_tol=1e-9, max_evals=6000)
    a = bivariate_meijer_g(first, x, y, auto_contour_bivariate(first, x, y, **tight))
    b = bivariate_meijer_g(second, x, y, auto_contour_bivariate(second, x, y, **tight))
    combo = bivariate_meijer_g_sum([(1.0, first), (-1.0, second)], x, y)
    assert combo == pytest.approx(a - b, abs=1e-5)


def test_saddle_contour_bivariate_same_value():
    spec = first_capacity_spec()
    contour, log_mod = saddle_contour_bivariate([(1.0, spec)], 1.0, 1.0,
                                                abs_tol=1e-10, rel_tol=1e-8)
    val = bivariate_meijer_g(spec, 1.0, 1.0, contour, log_scale=-log_mod) * math.exp(log_mod)
    assert val == pytest.approx(FIRST_CAPACITY_TERM, rel=1e-7)


def test_bivariate_realness_is_checked():
    # a successful evaluation implies the imaginary residue was within tolerance
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        val = bivariate_meijer_g(first_capacity_spec(3, 2), 2.0, 0.5)
    assert math.isfinite(val)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def test_gk_1d_polynomial_and_oscillatory():
    val, err, _ = adaptive_gk_1d(lambda x: x ** 6, 0.0, 1.0, 1e-14, 1e-14, 100)
    assert val.real == pytest.approx(1 / 7, rel=1e-13)
    val, _, _ = adaptive_gk_1d(lambda x: np.exp(1j * 40 * x), 0.0, 1.0, 1e-12, 1e-12, 500)
    assert val == pytest.approx((np.exp(40j) - 1) / 40j, abs=1e-11)


def test_gk_2d_separable():
    f = lambda x, y: np.exp(-x)[:, :, None] * np.cos(y)[:, None, :]  # noqa: E731
    val, _, _ = adaptive_gk_2d(f, (0, 2), (0, 1), 1e-12, 1e-12, 2000)
    assert val.real == pytest.approx((1 - math.exp(-2)) * math.sin(1), rel=1e-11)


def test_gk_budget():
    with pytest.raises(QuadratureError):
        adaptive_gk_1d(lambda x: np.abs(x - 0.3) ** -0.9, 0.0, 1.0, 1e-14, 1e-14, 20)
