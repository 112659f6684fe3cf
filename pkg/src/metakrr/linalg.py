"""Dense symmetric linear algebra with fixed conventions.

Everything downstream (ridge solves, whitening, subspace extraction) is built
on these four primitives. Two contracts matter beyond plain correctness:

* determinism — identical inputs give bit-identical outputs on the same
  build, so learned bases are reproducible run to run;
* sign convention — each eigen/singular vector is flipped so its entry of
  largest magnitude is positive (ties broken by lowest index), removing the
  sign ambiguity inherent to spectral factorizations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve


class NumericsError(RuntimeError):
    """A dense factorization failed or produced an unusable result."""


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenvalues in descending order, eigenvectors as matching columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _symmetrize(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    return (A + A.T) / 2.0


def _fix_column_signs(V: np.ndarray) -> np.ndarray:
    """Flip columns so the entry of largest magnitude is positive.

    Returns the multiplier (+1/-1) applied to each column, so callers pairing
    two factors (SVD) can keep the product unchanged.
    """
    flips = np.ones(V.shape[1])
    for j in range(V.shape[1]):
        col = V[:, j]
        idx = int(np.argmax(np.abs(col)))  # ties resolve to the lowest index
        if col[idx] < 0:
            V[:, j] = -col
            flips[j] = -1.0
    return flips


def spd_solve(A, B, ridge: float = 0.0) -> np.ndarray:
    """Solve (A + ridge*I) X = B for symmetric A via Cholesky.

    Raises NumericsError if A + ridge*I is not positive definite; there is no
    silent fallback to a least-squares or pseudo-inverse solution.
    """
    A = _symmetrize(A)
    B = np.asarray(B, dtype=float)
    if ridge < 0:
        raise ValueError(f"ridge must be nonnegative, got {ridge}")
    squeeze = B.ndim == 1
    if squeeze:
        B = B[:, None]
    if B.shape[0] != A.shape[0]:
        raise ValueError(
            f"shape mismatch: A is {A.shape}, B has {B.shape[0]} rows"
        )
    M = A if ridge == 0 else A + ridge * np.eye(A.shape[0])
    try:
        factor = cho_factor(M, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(
            f"matrix is not positive definite after ridge={ridge!r}: {exc}"
        ) from exc
    X = cho_solve(factor, B, check_finite=False)
    return X[:, 0] if squeeze else X


def sym_eig(A) -> SpectralDecomposition:
    """Eigendecomposition of (A + A^T)/2 with descending eigenvalues."""
    A = _symmetrize(A)
    try:
        w, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(f"symmetric eigendecomposition failed: {exc}") from exc
    w = w[::-1].copy()
    V = np.ascontiguousarray(V[:, ::-1])
    _fix_column_signs(V)
    return SpectralDecomposition(eigenvalues=w, eigenvectors=V)


def psqrt_and_pinvsqrt(A, rel_cut: float = 1e-10) -> tuple[np.ndarray, np.ndarray, int]:
    """Symmetric square root and pseudo-inverse square root of a PSD matrix.

    Eigenvalues below rel_cut * lambda_max are treated as exact zeros in both
    factors; the returned rank is the number retained. Thresholding (rather
    than jitter) keeps the retained spectrum unbiased.
    """
    dec = sym_eig(A)
    w, V = dec.eigenvalues, dec.eigenvectors
    lam_max = w[0]
    if lam_max <= 0:
        raise NumericsError("numerically zero matrix: no positive eigenvalues")
    keep = w >= rel_cut * lam_max
    rank = int(np.count_nonzero(keep))
    Vk = V[:, keep]
    roots = np.sqrt(w[keep])
    psqrt = (Vk * roots) @ Vk.T
    pinvsqrt = (Vk / roots) @ Vk.T
    return psqrt, pinvsqrt, rank


def sin_theta_distance(W1, W2) -> float:
    """Hilbert-Schmidt sin-theta distance between two column spans.

    Columns are orthonormalized by QR, then the distance is the Frobenius
    norm of the residual of projecting span(W2) onto span(W1). Forming the
    residual before taking norms keeps absolute accuracy at machine level
    even when the spans coincide (no sqrt(eps) cancellation floor).
    """
    W1 = np.asarray(W1, dtype=float)
    W2 = np.asarray(W2, dtype=float)
    if W1.ndim != 2 or W2.ndim != 2 or W1.shape[0] != W2.shape[0]:
        raise ValueError("expected two matrices with matching row dimension")
    Q1, _ = np.linalg.qr(W1)
    Q2, _ = np.linalg.qr(W2)
    R = Q2 - Q1 @ (Q1.T @ Q2)
    return float(np.linalg.norm(R))


def svd(M) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD M = U diag(s) V^T with descending s and fixed signs.

    The sign convention of sym_eig is applied to the columns of U; the columns
    of V are flipped along with them so the product is preserved.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix contains non-finite entries")
    try:
        U, s, Vt = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(f"SVD failed to converge: {exc}") from exc
    U = np.ascontiguousarray(U)
    flips = _fix_column_signs(U)
    V = np.ascontiguousarray(Vt.T) * flips
    return U, s, V
