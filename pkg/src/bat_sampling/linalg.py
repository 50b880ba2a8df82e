"""Small dense linear algebra: cyclic Jacobi eigensolver, thin SVD, numeric rank."""

from __future__ import annotations

import math

import numpy as np

JACOBI_MAX_DIM = 256
RANK_RTOL = 1e-8
# singular values from the Gram matrix are accurate to about sqrt(eps)*sigma_1
GRAM_DROP_RTOL = 1e-7


def jacobi_eigh(G: np.ndarray, max_sweeps: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and eigenvectors of a symmetric matrix.

    Cyclic-by-row Jacobi rotations until a full sweep finds every
    off-diagonal entry negligible next to its diagonal pair.
    """
    A = np.array(G, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    A = (A + A.T) / 2.0
    n = A.shape[0]
    V = np.eye(n)
    scale = np.linalg.norm(A)
    if scale == 0.0:
        return np.zeros(n), V
    eps = np.finfo(np.float64).eps
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                # negligible next to the diagonal pair or to the whole matrix
                if abs(apq) <= eps * max(math.sqrt(abs(A[p, p] * A[q, q])), scale):
                    continue
                rotated = True
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.hypot(t, 1.0)
                s = t * c
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap, aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
        if not rotated:
            break
    else:
        raise ArithmeticError("Jacobi iteration did not converge")
    w = np.diag(A).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order]


def sign_flips(M: np.ndarray) -> np.ndarray:
    """+-1 per column making each column's first non-negligible entry positive."""
    flips = np.ones(M.shape[1])
    for k in range(M.shape[1]):
        col = M[:, k]
        big = np.abs(col) > 1e-12 * np.abs(col).max()
        if big.any() and col[int(big.argmax())] < 0:
            flips[k] = -1.0
    return flips


def thin_svd(W, method: str = "auto") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(U, S, V) with W ~= U @ diag(S) @ V.T, from the eigenvectors of W.T @ W.

    Zero (numerically negligible) singular values are dropped, so U has
    rank(W) orthonormal columns. ``method`` is ``"jacobi"``, ``"eigh"``
    (LAPACK) or ``"auto"`` (Jacobi up to JACOBI_MAX_DIM columns).
    """
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise ValueError("W must be a matrix")
    d = W.shape[1]
    if method == "auto":
        method = "jacobi" if d <= JACOBI_MAX_DIM else "eigh"
    G = W.T @ W
    if method == "jacobi":
        lam, V = jacobi_eigh(G)
    elif method == "eigh":
        lam, V = np.linalg.eigh(G)
        lam, V = lam[::-1], V[:, ::-1]
    else:
        raise ValueError(f"unknown method {method!r}")
    S = np.sqrt(np.maximum(lam, 0.0))
    keep = S > GRAM_DROP_RTOL * S[0] if S.size and S[0] > 0 else np.zeros(d, dtype=bool)
    S, V = S[keep], V[:, keep]
    U = (W @ V) / S
    flips = sign_flips(U)
    return U * flips, S, V * flips


def singular_values(A) -> np.ndarray:
    return np.linalg.svd(np.asarray(A, dtype=np.float64), compute_uv=False)


def numeric_rank(A, rtol: float = RANK_RTOL) -> int:
    """Number of singular values above ``rtol`` times the largest."""
    s = singular_values(A)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))
