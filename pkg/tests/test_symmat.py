import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from covbridge import DimensionMismatch, NotPositiveDefinite, kl_gaussian, quadratic_solve, sym_sqrt
from covbridge.symmat import as_spd, is_symmetric, logdet_spd, quadratic_roots, sym

from conftest import random_spd


def test_sym_symmetrizes():
    M = np.array([[1.0, 2.0], [0.0, 1.0]])
    assert np.array_equal(sym(M), [[1.0, 1.0], [1.0, 1.0]])
    assert is_symmetric(sym(M))
    assert not is_symmetric(M)


@pytest.mark.parametrize("S, R", [
    (np.eye(3), np.eye(3)),
    (np.diag([4.0, 9.0]), np.diag([2.0, 3.0])),
    (np.array([[2.0, 1.0], [1.0, 2.0]]),
     np.array([[np.sqrt(3) + 1, np.sqrt(3) - 1], [np.sqrt(3) - 1, np.sqrt(3) + 1]]) / 2),
])
def test_sym_sqrt_examples(S, R):
    assert np.allclose(sym_sqrt(S), R, atol=1e-14)


def test_sym_sqrt_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        sym_sqrt(np.diag([1.0, -1.0]))
    with pytest.raises(NotPositiveDefinite):
        as_spd(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_as_spd_accepts_tiny_asymmetry():
    M = np.array([[2.0, 1.0], [1.0 + 1e-12, 2.0]])
    out = as_spd(M)
    assert np.array_equal(out, out.T)


@pytest.mark.parametrize("H, R, Z", [
    (np.eye(2), 2 * np.eye(2), np.eye(2)),
    (np.eye(2), 6 * np.eye(2), 2 * np.eye(2)),
    (np.array([[2.0]]), np.array([[3.0]]), np.array([[1.0]])),
])
def test_quadratic_solve_examples(H, R, Z):
    assert np.allclose(quadratic_solve(H, R), Z, atol=1e-14)


def test_quadratic_solve_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        quadratic_solve(np.eye(2), np.eye(3))


@pytest.mark.parametrize("Sig, S, val", [
    (np.eye(2), np.eye(2), 0.0),
    (np.array([[2.0]]), np.array([[1.0]]), 0.5 * (1 - np.log(2))),
    (np.eye(2), 2 * np.eye(2), 0.5 * (1 - 2 + 2 * np.log(2))),
])
def test_kl_examples(Sig, S, val):
    assert kl_gaussian(Sig, S) == pytest.approx(val, abs=1e-14)


def test_kl_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        kl_gaussian(np.eye(2), np.eye(3))


def test_logdet_large_matrix_no_overflow():
    S = 1e3 * np.eye(200)
    assert logdet_spd(S) == pytest.approx(200 * np.log(1e3))


seeds = st.integers(min_value=0, max_value=2**32 - 1)
dims = st.integers(min_value=1, max_value=6)


@settings(max_examples=60, deadline=None)
@given(seeds, dims, st.floats(min_value=1.0, max_value=1e6))
def test_sqrt_squares_back(seed, n, cond):
    rng = np.random.default_rng(seed)
    S = random_spd(rng, n, cond)
    R = sym_sqrt(S)
    assert np.linalg.norm(R @ R - S) <= 1e-10 * (1 + np.linalg.norm(S))
    assert np.all(np.linalg.eigvalsh(R) > 0)


@settings(max_examples=60, deadline=None)
@given(seeds, dims)
def test_quadratic_residual_and_roots(seed, n):
    rng = np.random.default_rng(seed)
    H = random_spd(rng, n)
    R = random_spd(rng, n)
    Zp, Zm = quadratic_roots(H, R)
    assert np.linalg.norm(Zp + Zp @ H @ Zp - R) <= 1e-9 * (1 + np.linalg.norm(R))
    assert np.all(np.linalg.eigvalsh(Zp) > 0)
    # the other root also solves the equation but is negative definite
    assert np.linalg.norm(Zm + Zm @ H @ Zm - R) <= 1e-8 * (1 + np.linalg.norm(R))
    assert np.max(np.linalg.eigvalsh(Zm)) < 0


@settings(max_examples=60, deadline=None)
@given(seeds, dims)
def test_kl_gibbs(seed, n):
    rng = np.random.default_rng(seed)
    A = random_spd(rng, n)
    B = random_spd(rng, n)
    assert kl_gaussian(A, B) >= -1e-12
    assert abs(kl_gaussian(A, A)) <= 1e-12
