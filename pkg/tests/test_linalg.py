import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bat_sampling.linalg import jacobi_eigh, numeric_rank, sign_flips, thin_svd
from bat_sampling.prob import make_rng

seeds = st.integers(0, 2**32 - 1)


def test_jacobi_matches_lapack():
    rng = make_rng(0)
    for n in (1, 2, 5, 16, 40):
        M = rng.standard_normal((n, n))
        G = M + M.T
        w, V = jacobi_eigh(G)
        np.testing.assert_allclose(w, np.sort(np.linalg.eigvalsh(G))[::-1], atol=1e-10 * np.abs(w).max())
        np.testing.assert_allclose(V.T @ V, np.eye(n), atol=1e-12)
        np.testing.assert_allclose(G @ V, V * w, atol=1e-10 * np.abs(w).max())


def test_jacobi_zero_and_diagonal():
    w, V = jacobi_eigh(np.zeros((3, 3)))
    assert np.all(w == 0) and np.array_equal(V, np.eye(3))
    w, _ = jacobi_eigh(np.diag([1.0, 3.0, 2.0]))
    np.testing.assert_array_equal(w, [3.0, 2.0, 1.0])
    with pytest.raises(ValueError):
        jacobi_eigh(np.ones((2, 3)))


@pytest.mark.parametrize("method", ["jacobi", "eigh"])
def test_thin_svd_reconstruction_200x16(method):
    W = make_rng(1).standard_normal((200, 16))
    U, S, V = thin_svd(W, method)
    assert np.linalg.norm(U @ np.diag(S) @ V.T - W) / np.linalg.norm(W) <= 1e-10
    np.testing.assert_allclose(U.T @ U, np.eye(16), atol=1e-8)
    assert np.all(np.diff(S) <= 0) and np.all(S >= 0)
    np.testing.assert_allclose(S, np.linalg.svd(W, compute_uv=False), rtol=1e-10)


def test_thin_svd_methods_agree_including_signs():
    W = make_rng(2).standard_normal((60, 9))
    Uj, Sj, Vj = thin_svd(W, "jacobi")
    Ue, Se, Ve = thin_svd(W, "eigh")
    np.testing.assert_allclose(Sj, Se, rtol=1e-10)
    np.testing.assert_allclose(Uj, Ue, atol=1e-8)


def test_thin_svd_drops_null_directions():
    rng = make_rng(3)
    W = rng.standard_normal((50, 2)) @ rng.standard_normal((2, 6))
    U, S, V = thin_svd(W)
    assert U.shape == (50, 2) and S.shape == (2,) and V.shape == (6, 2)
    np.testing.assert_allclose(U @ np.diag(S) @ V.T, W, atol=1e-8 * np.abs(W).max())
    U0, S0, _ = thin_svd(np.zeros((4, 3)))
    assert U0.shape == (4, 0) and S0.size == 0


def test_thin_svd_bad_method():
    with pytest.raises(ValueError):
        thin_svd(np.eye(3), "qr")


def test_sign_convention():
    M = np.array([[0.0, -1.0], [-2.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(sign_flips(M), [-1.0, -1.0])
    U, _, _ = thin_svd(make_rng(4).standard_normal((20, 5)))
    for k in range(U.shape[1]):
        col = U[:, k]
        assert col[np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max())[0]] > 0


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 30), st.integers(1, 12))
def test_thin_svd_property(seed, v, d):
    W = make_rng(seed).standard_normal((v + d, d))
    U, S, V = thin_svd(W)
    assert np.linalg.norm(U @ np.diag(S) @ V.T - W) <= 1e-6 * np.linalg.norm(W)
    np.testing.assert_allclose(U.T @ U, np.eye(S.size), atol=1e-8)


def test_numeric_rank():
    rng = make_rng(5)
    A = rng.standard_normal((30, 4)) @ rng.standard_normal((4, 20))
    assert numeric_rank(A) == 4
    assert numeric_rank(np.zeros((3, 3))) == 0
    assert numeric_rank(np.diag([1.0, 1e-9])) == 1
    assert numeric_rank(np.diag([1.0, 1e-9]), rtol=1e-10) == 2
