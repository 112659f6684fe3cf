"""Per-task kernel ridge regression and RKHS inner products between fits.

A fitted task is stored in dual form: anchor inputs plus coefficients
alpha = (K + n*lambda*I)^{-1} y, so the estimate is f(x) = sum_j alpha_j
K(x_j, x) and the inner product of two fits reduces to a weighted cross-Gram
sum. Inner products between fitted tasks are the raw material for the
subspace stage: they are computed without any extra sample-size factor so
that <f, g> agrees with the Euclidean dot product of explicit feature-space
weights whenever the kernel has a finite feature map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import Kernel, kernel_from_dict
from .linalg import spd_solve
from .validation import check_matrix, check_vector


@dataclass(frozen=True, eq=False)
class TaskRegressor:
    """One fitted ridge estimator, evaluable anywhere.

    rkhs_norm_sq caches alpha^T K alpha so Gram assembly over many tasks
    never refactorizes the training kernel matrix.
    """

    kernel: Kernel
    lam: float
    anchors: np.ndarray
    dual_coeffs: np.ndarray
    rkhs_norm_sq: float

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel.to_dict(),
            "lambda": self.lam,
            "anchors": self.anchors.tolist(),
            "dual_coeffs": self.dual_coeffs.tolist(),
        }

    @staticmethod
    def from_dict(data: dict) -> "TaskRegressor":
        kernel = kernel_from_dict(data["kernel"])
        anchors = check_matrix(np.asarray(data["anchors"], dtype=float), "anchors")
        coeffs = check_vector(
            np.asarray(data["dual_coeffs"], dtype=float), "dual_coeffs", anchors.shape[0]
        )
        K = kernel.gram(anchors)
        norm_sq = float(max(coeffs @ K @ coeffs, 0.0))
        return TaskRegressor(
            kernel=kernel,
            lam=float(data["lambda"]),
            anchors=anchors,
            dual_coeffs=coeffs,
            rkhs_norm_sq=norm_sq,
        )


@dataclass(frozen=True, eq=False)
class SplitTaskFit:
    """Two independent ridge fits of one task on disjoint halves of its data."""

    first_half: TaskRegressor
    second_half: TaskRegressor


def fit_krr(kernel: Kernel, X, Y, lam: float) -> TaskRegressor:
    """Ridge fit: dual coefficients solve (K + n*lambda*I) alpha = Y."""
    X = check_matrix(X, "X")
    Y = check_vector(Y, "Y", X.shape[0])
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    n = X.shape[0]
    K = kernel.gram(X)
    alpha = spd_solve(K, Y, ridge=n * lam)
    norm_sq = float(max(alpha @ K @ alpha, 0.0))
    return TaskRegressor(
        kernel=kernel,
        lam=float(lam),
        anchors=X,
        dual_coeffs=alpha,
        rkhs_norm_sq=norm_sq,
    )


def fit_split(kernel: Kernel, X, Y, lam: float) -> SplitTaskFit:
    """Fit rows 1..n and n+1..2n independently; requires an even sample count."""
    X = check_matrix(X, "X", min_rows=2)
    Y = check_vector(Y, "Y", X.shape[0])
    if X.shape[0] % 2 != 0:
        raise ValueError(
            f"data splitting needs an even sample count, got {X.shape[0]} rows"
        )
    n = X.shape[0] // 2
    return SplitTaskFit(
        first_half=fit_krr(kernel, X[:n], Y[:n], lam),
        second_half=fit_krr(kernel, X[n:], Y[n:], lam),
    )


def predict(reg: TaskRegressor, X_new) -> np.ndarray:
    X_new = check_matrix(X_new, "X_new")
    return reg.kernel.cross_gram(X_new, reg.anchors) @ reg.dual_coeffs


def rkhs_inner(a: TaskRegressor, b: TaskRegressor) -> float:
    """<f_a, f_b> in the RKHS: alpha_a^T K(anchors_a, anchors_b) alpha_b."""
    if a.kernel != b.kernel:
        raise ValueError("RKHS inner product requires both fits to share one kernel")
    cross = a.kernel.cross_gram(a.anchors, b.anchors)
    return float(a.dual_coeffs @ cross @ b.dual_coeffs)
