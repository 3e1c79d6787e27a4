import numpy as np
import pytest
from scipy.special import iv

from conftest import random_sbm_params
from spectral_clt.blockmodel import block_params
from spectral_clt.contour import (EXP, MAX_NODES, _converged, _mean_sum, build_contour,
                                  circle_contour, cov_lss, eval_testfn, lsd_integral, mean_lss,
                                  monomial, parse_testfn, poly, register_testfn, theory)
from spectral_clt.errors import QuadratureError, ValidationError
from spectral_clt.oracle import var_tr_h2_limit

X, X2, X4 = monomial(1), monomial(2), monomial(4)


@pytest.fixture(scope="module")
def unit_params():
    return block_params([100], [[1.0]])


@pytest.fixture(scope="module")
def unit_contour(unit_params):
    return build_contour(unit_params)


# Chebyshev expansion of a unit Wigner matrix with zero diagonal and no fourth
# cumulant: with f(2 cos t) = a0 + 2 sum_k a_k cos(k t),
#   M(f) = (f(2) + f(-2)) / 4 - a0 / 2 - 2 a2,   V(f) = 2 sum_{k >= 2} k a_k^2,
# and for exp the coefficients are modified Bessel values a_k = I_k(2).
EXP_MEAN = np.cosh(2.0) / 2 - iv(0, 2.0) / 2 - 2 * iv(2, 2.0)
EXP_VAR = 2 * sum(k * iv(k, 2.0) ** 2 for k in range(2, 40))
EXP_CENTERING = iv(1, 2.0)


def test_bessel_oracle_frozen_values():
    assert EXP_MEAN == pytest.approx(-0.6365917010, abs=1e-9)
    assert EXP_VAR == pytest.approx(2.1917335837, abs=1e-9)
    assert EXP_CENTERING == pytest.approx(1.5906368546, abs=1e-9)


def test_build_contour_unit(unit_params, unit_contour):
    assert unit_contour.radius >= 2.9
    assert abs(unit_contour.tangents.sum()) <= 1e-12
    assert build_contour(unit_params, 1024).radius == unit_contour.radius
    assert not np.any(unit_contour.nodes.imag == 0)


def test_contour_validation(unit_params):
    with pytest.raises(ValidationError):
        build_contour(unit_params, 100)
    with pytest.raises(ValidationError):
        circle_contour(-1.0, 64)


def test_trivial_functions(unit_params, unit_contour):
    assert abs(mean_lss(X, unit_params, unit_contour)) <= 1e-8
    assert abs(cov_lss(X, X, unit_params, unit_contour)) <= 1e-8
    assert lsd_integral(poly(1), unit_params, unit_contour) == pytest.approx(1, abs=1e-10)
    assert abs(lsd_integral(X, unit_params, unit_contour)) <= 1e-10


def test_unit_second_moment(unit_params, unit_contour):
    assert mean_lss(X2, unit_params, unit_contour) == pytest.approx(-1, abs=1e-6)
    assert cov_lss(X2, X2, unit_params, unit_contour) == pytest.approx(4, abs=1e-5)
    assert lsd_integral(X2, unit_params, unit_contour) == pytest.approx(1, abs=1e-8)


def test_unit_fourth_moment(unit_params, unit_contour):
    # E Tr H^4 = (2n^3 - 5n^2 + 3n) / n^2 exactly, so M(x^4) = -3 with centering 2
    r = theory(X4, unit_params, contour=unit_contour)
    assert r.mean == pytest.approx(-3, abs=1e-6)
    assert r.centering == pytest.approx(2, abs=1e-8)
    assert r.variance == pytest.approx(72, abs=1e-5)


def test_unit_exp_against_bessel_oracle(unit_params, unit_contour):
    r = theory(EXP, unit_params, contour=unit_contour)
    assert r.mean == pytest.approx(EXP_MEAN, abs=1e-8)
    assert r.variance == pytest.approx(EXP_VAR, abs=1e-8)
    assert r.centering == pytest.approx(EXP_CENTERING, abs=1e-8)


def test_exp_stable_under_node_doubling(unit_params):
    a = theory(EXP, unit_params, nodes=256)
    b = theory(EXP, unit_params, nodes=512)
    for f in ("mean", "variance", "centering"):
        assert getattr(a, f) == pytest.approx(getattr(b, f), abs=1e-6)


def test_fourth_cumulant_enters_linearly():
    # the oracle E Tr H^4 gains n(n-1)/n^2 * q from Q4 = q, so the slope is 1;
    # Var Tr H^2 gains 2q.
    vals, vars_ = [], []
    for q in (0.0, 0.5):
        p = block_params([100], [[1.0]], Q4=[[q]])
        c = build_contour(p)
        vals.append(mean_lss(X4, p, c))
        vars_.append(cov_lss(X2, X2, p, c))
    assert (vals[1] - vals[0]) / 0.5 == pytest.approx(1.0, abs=1e-6)
    assert (vars_[1] - vars_[0]) / 0.5 == pytest.approx(2.0, abs=1e-6)


def test_variance_scaling():
    p = block_params([50], [[0.3]])
    c = build_contour(p)
    assert mean_lss(X2, p, c) == pytest.approx(-0.3, abs=1e-8)
    assert cov_lss(X2, X2, p, c) == pytest.approx(4 * 0.09, abs=1e-8)


def test_covariance_symmetric_in_arguments():
    params = random_sbm_params(np.random.default_rng(0), 3)
    c = build_contour(params)
    assert cov_lss(X2, X4, params, c) == pytest.approx(cov_lss(X4, X2, params, c), abs=1e-8)


def test_variance_matches_oracle_limit():
    params = random_sbm_params(np.random.default_rng(1), 2)
    c = build_contour(params)
    want = var_tr_h2_limit(params)
    assert cov_lss(X2, X2, params, c) == pytest.approx(want, rel=1e-5)


def test_quadrature_refines_then_gives_up(unit_params):
    coarse = circle_contour(3.0, 8)
    assert mean_lss(monomial(12), unit_params, coarse) == pytest.approx(
        mean_lss(monomial(12), unit_params, build_contour(unit_params)), abs=1e-6)
    with pytest.raises(QuadratureError):
        _converged(unit_params, coarse, lambda g: _mean_sum(g, monomial(12)), "mean", max_nodes=8)
    assert MAX_NODES == 4096


def test_eval_testfn():
    assert eval_testfn(poly(0, 0, 1), 1 + 1j) == pytest.approx(2j)
    assert eval_testfn(EXP, 0) == 1
    assert parse_testfn("poly:1,-2.5").coefficients == (1.0, -2.5)
    assert parse_testfn("exp") is EXP


@pytest.mark.parametrize("spec", ["", "poly:", "poly:a,b", "sin", "user:nope", "poly:1,2i"])
def test_bad_function_specs(spec):
    with pytest.raises(ValidationError):
        parse_testfn(spec)


def test_user_function(unit_params, unit_contour):
    f = register_testfn("square", lambda z: z * z)
    assert parse_testfn("user:square") == f
    assert mean_lss(f, unit_params, unit_contour) == pytest.approx(-1, abs=1e-6)


def test_theory_lss_mean(unit_params):
    r = theory(X2, unit_params)
    assert r.lss_mean(100) == pytest.approx(99.0, abs=1e-6)
    assert r.nodes_used >= 512
