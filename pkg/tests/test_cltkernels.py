import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_params, semicircle_m
from spectral_clt.blockmodel import block_params
from spectral_clt.cltkernels import (co1, co2, cov_grid, cov_kernel, g1tg2t_closed_form,
                                     g1tg2t_matrix, gtgt_closed_form, gtgt_matrix, kernel_set,
                                     mean_kernel, mean_vector, w_tensor)
from spectral_clt.errors import ContourTooCloseError
from spectral_clt.qve import QveSolution, solve_qve


def contour_points(params, count, rng):
    from spectral_clt.qve import spectral_edge
    R = max(1.2 * spectral_edge(params).edge + 0.5, 1.0)
    return R * np.exp(1j * rng.uniform(0, 2 * np.pi, count))


def test_co1_semicircle(unit):
    c = co1(unit, solve_qve(unit, 2j))
    assert c[0, 0] == pytest.approx(1.41421356, abs=1e-7)


def test_co1_large_z_diagonal_near_one():
    params = random_params(np.random.default_rng(0), 3)
    c = co1(params, solve_qve(params, 10j))
    assert np.allclose(np.diag(c), 1.0, atol=0.05)


def test_co2_coincidence_and_closed_form(unit):
    s2, s3 = solve_qve(unit, 2j), solve_qve(unit, 3j)
    assert co2(unit, s2, s2)[0, 0] == co1(unit, s2)[0, 0]
    m2, m3 = semicircle_m(2j), semicircle_m(3j)
    want = m3 / 2j - 1 / (2j * m2)
    assert co2(unit, s2, s3)[0, 0] == pytest.approx(want, abs=1e-12)
    assert abs(co2(unit, s3, s2)[0, 0] - want) > 1e-3


def test_gtgt_semicircle(unit):
    assert gtgt_matrix(unit, solve_qve(unit, 2j))[0, 0] == pytest.approx(-0.14644661, abs=1e-8)


def test_g1tg2t_semicircle(unit):
    m2, m3 = semicircle_m(2j), semicircle_m(3j)
    got = g1tg2t_matrix(unit, solve_qve(unit, 2j), solve_qve(unit, 3j))[0, 0]
    assert got == pytest.approx(-1 / (1 - 1 / (m2 * m3)), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_linear_solve_matches_closed_form(K, seed):
    rng = np.random.default_rng(seed)
    params = random_params(rng, K)
    z1, z2 = contour_points(params, 2, rng)
    s1, s2 = solve_qve(params, z1), solve_qve(params, z2)
    X, Xc = gtgt_matrix(params, s1), gtgt_closed_form(params, s1)
    Xt, Xtc = g1tg2t_matrix(params, s1, s2), g1tg2t_closed_form(params, s1, s2)
    assert np.max(np.abs(X - Xc)) <= 1e-10 * np.max(np.abs(Xc))
    assert np.max(np.abs(Xt - Xtc)) <= 1e-10 * np.max(np.abs(Xtc))


def test_symmetry_and_degeneracy():
    rng = np.random.default_rng(5)
    params = random_params(rng, 5)
    z1, z2 = contour_points(params, 2, rng)
    s1, s2 = solve_qve(params, z1), solve_qve(params, z2)
    X = gtgt_matrix(params, s1)
    Xt = g1tg2t_matrix(params, s1, s2)
    assert np.max(np.abs(X - X.T)) <= 1e-10
    assert np.max(np.abs(Xt - Xt.T)) <= 1e-10
    assert np.array_equal(co2(params, s1, s1), co1(params, s1))
    assert np.array_equal(g1tg2t_matrix(params, s1, s1), X)


def test_mean_vector_decay_and_conjugation(unit):
    y10 = mean_kernel(unit, solve_qve(unit, 10j))
    y100 = mean_kernel(unit, solve_qve(unit, 100j))
    assert np.isfinite(y10)
    assert abs(y100) / abs(y10) < 0.02      # O(|z|^-2)
    params = random_params(np.random.default_rng(6), 4)
    z = 2.5 + 1.5j
    a, b = mean_kernel(params, solve_qve(params, z)), mean_kernel(params, solve_qve(params, np.conj(z)))
    assert abs(b - np.conj(a)) <= 1e-10


def test_mean_vector_linear_in_q4():
    params = random_params(np.random.default_rng(7), 3)
    sol = solve_qve(params, 1.0 + 2.0j)
    X = gtgt_matrix(params, sol)
    Y0 = mean_vector(params, sol, X, Q4=np.zeros((3, 3)))
    Y1 = mean_vector(params, sol, X)
    Y2 = mean_vector(params, sol, X, Q4=2 * params.Q4)
    assert np.allclose(Y2 - Y0, 2 * (Y1 - Y0), atol=1e-13)


def test_w_tensor_scalar_case(unit):
    s1, s2 = solve_qve(unit, 2j), solve_qve(unit, 3j)
    X2 = gtgt_matrix(unit, s2)
    Xt = g1tg2t_matrix(unit, s1, s2)
    W = w_tensor(unit, s1, s2, X2, Xt)
    c = 2j * co2(unit, s1, s2)[0, 0]
    want = (-Xt[0, 0] * X2[0, 0] - X2[0, 0]) / c
    assert W.shape == (1, 1, 1)
    assert W[0, 0, 0] == pytest.approx(want, abs=1e-14)


def test_w_tensor_finite_on_contour():
    rng = np.random.default_rng(8)
    for _ in range(50):
        params = random_params(rng, int(rng.integers(1, 5)))
        z1, z2 = contour_points(params, 2, rng)
        assert np.all(np.isfinite(kernel_set(params, z1, z2).W))


def test_cov_symmetry_and_conjugation():
    rng = np.random.default_rng(9)
    params = random_params(rng, 3)
    z1, z2 = contour_points(params, 20, rng), contour_points(params, 20, rng)
    s1, s2 = solve_qve(params, z1), solve_qve(params, z2)
    c12, c21 = cov_grid(params, s1, s2), cov_grid(params, s2, s1)
    assert np.max(np.abs(c12 - c21)) <= 1e-8
    c_conj = cov_grid(params, solve_qve(params, np.conj(z1)), solve_qve(params, np.conj(z2)))
    assert np.max(np.abs(c_conj - np.conj(c12))) <= 1e-10


def test_batched_grid_matches_pointwise():
    rng = np.random.default_rng(10)
    params = random_params(rng, 2)
    z = contour_points(params, 4, rng)
    s = solve_qve(params, z)
    grid = cov_grid(params, s.reshape(4, 1), s.reshape(1, 4))
    for i in range(4):
        for j in range(4):
            assert grid[i, j] == pytest.approx(kernel_set(params, z[i], z[j]).cov, abs=1e-12)


def test_homogeneous_permutation_invariance():
    a = block_params([10, 20, 30], np.full((3, 3), 0.8), Q4=np.full((3, 3), -0.2))
    b = block_params([30, 10, 20], np.full((3, 3), 0.8), Q4=np.full((3, 3), -0.2))
    z1, z2 = 2.8 + 1.1j, -1.0 + 2.9j
    ka, kb = kernel_set(a, z1, z2), kernel_set(b, z1, z2)
    assert ka.mean == pytest.approx(kb.mean, abs=1e-12)
    assert ka.cov == pytest.approx(kb.cov, abs=1e-12)


def test_cov_kernel_returns_block_sum(unit):
    s1, s2 = solve_qve(unit, 2j), solve_qve(unit, -3j)
    X2, Xt = gtgt_matrix(unit, s2), g1tg2t_matrix(unit, s1, s2)
    Z, cov = cov_kernel(unit, s1, s2, X2, Xt, w_tensor(unit, s1, s2, X2, Xt))
    assert cov == Z.sum()


def test_ill_conditioned_system_signalled():
    # alpha_k Q2[k, :] - e_k / M_k has rank one at M = (1, 1)
    params = block_params([5, 5], [[4.0, 2.0], [2.0, 4.0]])
    sol = QveSolution(z=np.array(1j), M=np.array([1.0 + 0j, 1.0 + 0j]), residual=0.0)
    with pytest.raises(ContourTooCloseError) as info:
        gtgt_matrix(params, sol)
    assert info.value.condition > 1e12
