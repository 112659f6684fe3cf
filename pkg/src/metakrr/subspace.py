"""Stage 1: learn the shared subspace from split ridge fits of source tasks.

The empirical task-covariance operator built from the split fits is the
average of the RKHS outer products (first-half fit) x (second-half fit).
Its top-s right singular functions, expressed as combinations
v_i = sum_j beta[j, i] f_j of the second-half fits, span the learned
subspace. The combination vectors are recovered from the two N x N
inner-product matrices

    J[i, j] = <f_i, f_j>     (second halves; right side)
    Q[i, j] = <f'_i, f'_j>   (first halves; left side)

by whitening: with M = Q^{1/2} J^{1/2} and its SVD M = U S V^T,

    alpha = Q^{-1/2} U_s,  beta = J^{-1/2} V_s,  gamma = S_s / N,

which enforces alpha^T Q alpha = beta^T J beta = I_s (the RKHS
orthonormality of the singular functions) and alpha^T Q J beta =
N diag(gamma). Rank deficiency of J or Q is handled by eigenvalue
thresholding inside the pseudo square roots; the matrices are never
jittered, so the retained singular values are unbiased.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .kernels import Kernel, kernel_from_dict
from .linalg import psqrt_and_pinvsqrt, svd
from .regression import SplitTaskFit, TaskRegressor, fit_split, predict
from .validation import check_matrix, check_vector


class RichnessError(RuntimeError):
    """The source tasks do not numerically span a subspace of the requested size."""


@dataclass(frozen=True, eq=False)
class SubspaceModel:
    """The learned s-dimensional subspace and everything needed to use it.

    beta columns combine the second-half fits into the subspace basis
    functions; alpha (left side) is retained for diagnostics and duality
    checks. spectrum holds the full singular-value profile of the empirical
    task-covariance operator so callers can judge the eigen-gap; the model
    never acts on it.
    """

    s: int
    kernel: Kernel
    lam: float
    source_fits: list[SplitTaskFit]
    beta: np.ndarray
    alpha: np.ndarray
    singular_values: np.ndarray
    J: np.ndarray
    Q: np.ndarray
    spectrum: np.ndarray = field(default=None)  # type: ignore[assignment]

    @property
    def n_tasks(self) -> int:
        return len(self.source_fits)

    def basis_evaluations(self, X) -> np.ndarray:
        """Matrix F with F[q, j] = f_j(x_q) over the second-half fits."""
        X = check_matrix(X, "X")
        cols = [predict(f.second_half, X) for f in self.source_fits]
        return np.column_stack(cols)

    def embed(self, X) -> np.ndarray:
        """Coordinates (v_1(x), ..., v_s(x)) of each row of X in the basis."""
        return self.basis_evaluations(X) @ self.beta

    def to_dict(self, include_first_half: bool = True) -> dict:
        tasks = []
        for f in self.source_fits:
            entry = {
                "anchors": f.second_half.anchors.tolist(),
                "dual_coeffs": f.second_half.dual_coeffs.tolist(),
            }
            if include_first_half:
                entry["first_anchors"] = f.first_half.anchors.tolist()
                entry["first_dual_coeffs"] = f.first_half.dual_coeffs.tolist()
            tasks.append(entry)
        spectrum = self.spectrum if self.spectrum is not None else self.singular_values
        out = {
            "s": self.s,
            "lambda": self.lam,
            "kernel": self.kernel.to_dict(),
            "include_first_half": include_first_half,
            "tasks": tasks,
            "beta": self.beta.tolist(),
            "singular_values": self.singular_values.tolist(),
            "spectrum": np.asarray(spectrum).tolist(),
            "J": self.J.tolist(),
            "Q": self.Q.tolist(),
        }
        if include_first_half:
            out["alpha"] = self.alpha.tolist()
        return out

    @staticmethod
    def from_dict(data: dict) -> "SubspaceModel":
        kernel = kernel_from_dict(data["kernel"])
        lam = float(data["lambda"])
        fits = []
        for entry in data["tasks"]:
            second = TaskRegressor.from_dict(
                {
                    "kernel": data["kernel"],
                    "lambda": lam,
                    "anchors": entry["anchors"],
                    "dual_coeffs": entry["dual_coeffs"],
                }
            )
            if data.get("include_first_half") and "first_anchors" in entry:
                first = TaskRegressor.from_dict(
                    {
                        "kernel": data["kernel"],
                        "lambda": lam,
                        "anchors": entry["first_anchors"],
                        "dual_coeffs": entry["first_dual_coeffs"],
                    }
                )
            else:
                first = second
            fits.append(SplitTaskFit(first_half=first, second_half=second))
        beta = np.asarray(data["beta"], dtype=float)
        alpha = np.asarray(data["alpha"], dtype=float) if "alpha" in data else beta
        return SubspaceModel(
            s=int(data["s"]),
            kernel=kernel,
            lam=lam,
            source_fits=fits,
            beta=beta,
            alpha=alpha,
            singular_values=np.asarray(data["singular_values"], dtype=float),
            J=np.asarray(data["J"], dtype=float),
            Q=np.asarray(data["Q"], dtype=float),
            spectrum=np.asarray(
                data.get("spectrum", data["singular_values"]), dtype=float
            ),
        )


def _fit_gram(regs: list[TaskRegressor]) -> np.ndarray:
    """Inner-product matrix <f_i, f_j> over fitted tasks.

    Streams one row-block at a time: task i's fit is evaluated at the anchors
    of tasks i..N-1, so each kernel block is computed once and the result is
    exactly symmetric by filling the lower triangle from the upper.
    """
    N = len(regs)
    kernel = regs[0].kernel
    sizes = [r.anchors.shape[0] for r in regs]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    stacked = np.vstack([r.anchors for r in regs])
    G = np.zeros((N, N))
    for i in range(N):
        tail = stacked[offsets[i]:]
        block = kernel.cross_gram(regs[i].anchors, tail)
        weighted = regs[i].dual_coeffs @ block
        base = offsets[i]
        for j in range(i, N):
            lo, hi = offsets[j] - base, offsets[j + 1] - base
            G[i, j] = weighted[lo:hi] @ regs[j].dual_coeffs
    lower = np.tril_indices(N, -1)
    G[lower] = G.T[lower]
    return G


def assemble_jq(fits: list[SplitTaskFit]) -> tuple[np.ndarray, np.ndarray]:
    """J and Q inner-product matrices from the split fits of all tasks."""
    if len(fits) < 1:
        raise ValueError("need at least one fitted task")
    kernel = fits[0].second_half.kernel
    lam = fits[0].second_half.lam
    for f in fits:
        for reg in (f.first_half, f.second_half):
            if reg.kernel != kernel:
                raise ValueError("all fits must share one kernel")
            if reg.lam != lam:
                raise ValueError("all fits must share one regularization level")
    J = _fit_gram([f.second_half for f in fits])
    Q = _fit_gram([f.first_half for f in fits])
    return J, Q


def _whitened_svd(J, Q, s: int, rel_cut: float):
    """Shared core: whiten the pencil and SVD it, with rank guards."""
    J = check_matrix(J, "J")
    Q = check_matrix(Q, "Q")
    N = J.shape[0]
    if J.shape != (N, N) or Q.shape != (N, N):
        raise ValueError("J and Q must be square matrices of matching size")
    if s < 1:
        raise ValueError(f"s must be >= 1, got {s}")
    J_sqrt, J_isqrt, rank_j = psqrt_and_pinvsqrt(J, rel_cut)
    Q_sqrt, Q_isqrt, rank_q = psqrt_and_pinvsqrt(Q, rel_cut)
    achieved = min(rank_j, rank_q)
    if s > achieved:
        raise RichnessError(
            f"requested subspace dimension s={s} exceeds the numerical rank "
            f"{achieved} of the source fits (rank J={rank_j}, rank Q={rank_q})"
        )
    U, sig, V = svd(Q_sqrt @ J_sqrt)
    floor = N * np.finfo(float).eps * sig[0]
    if sig[s - 1] <= floor:
        effective = int(np.count_nonzero(sig > floor))
        raise RichnessError(
            f"requested subspace dimension s={s} exceeds the numerical rank "
            f"{effective} of the whitened task-covariance operator"
        )
    return U, sig, V, Q_isqrt, J_isqrt


def solve_subspace(
    J, Q, s: int, rel_cut: float = 1e-10
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Top-s singular system of the task-covariance operator, in coordinates.

    Returns (alpha, beta, gammas). Raises RichnessError when s exceeds the
    numerical rank of J or Q after thresholding at rel_cut, naming the rank
    achieved.
    """
    U, sig, V, Q_isqrt, J_isqrt = _whitened_svd(J, Q, s, rel_cut)
    N = np.asarray(J).shape[0]
    alpha = Q_isqrt @ U[:, :s]
    beta = J_isqrt @ V[:, :s]
    gammas = sig[:s] / N
    return alpha, beta, gammas


def pretrain(
    kernel: Kernel,
    datasets: list[tuple[np.ndarray, np.ndarray]],
    lam: float,
    s: int,
    rel_cut: float = 1e-10,
) -> SubspaceModel:
    """Full stage-1 pipeline: split fits -> J, Q -> subspace model."""
    if len(datasets) < 1:
        raise ValueError("need at least one source task")
    if s > len(datasets):
        raise RichnessError(
            f"cannot extract s={s} directions from N={len(datasets)} source tasks"
        )
    shapes = set()
    fits = []
    for X, Y in datasets:
        X = check_matrix(X, "task X", min_rows=2)
        Y = check_vector(Y, "task Y", X.shape[0])
        shapes.add(X.shape)
        fits.append(fit_split(kernel, X, Y, lam))
    if len(shapes) != 1:
        raise ValueError(f"all tasks must share one (2n, d) shape, got {sorted(shapes)}")
    J, Q = assemble_jq(fits)
    N = len(fits)
    U, sig, V, Q_isqrt, J_isqrt = _whitened_svd(J, Q, s, rel_cut)
    return SubspaceModel(
        s=s,
        kernel=kernel,
        lam=float(lam),
        source_fits=fits,
        beta=J_isqrt @ V[:, :s],
        alpha=Q_isqrt @ U[:, :s],
        singular_values=sig[:s] / N,
        J=J,
        Q=Q,
        # Full profile for eigen-gap inspection, on the same 1/N scale.
        spectrum=sig / N,
    )


class SubspaceLearner(BaseEstimator, TransformerMixin):
    """Estimator wrapper: fit on a list of source tasks, transform new inputs.

    Parameters
    ----------
    kernel : Kernel
    s : int, subspace dimension to extract
    lam : float, per-task ridge level (under-regularize on purpose)
    rel_cut : float, relative eigenvalue threshold for rank handling
    """

    def __init__(self, kernel=None, s=1, lam=1e-3, rel_cut=1e-10):
        self.kernel = kernel
        self.s = s
        self.lam = lam
        self.rel_cut = rel_cut

    def fit(self, tasks, y=None):
        if self.kernel is None:
            raise ValueError("a kernel must be provided")
        self.model_ = pretrain(self.kernel, list(tasks), self.lam, self.s, self.rel_cut)
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "model_"):
            raise RuntimeError("SubspaceLearner is not fitted")
        return self.model_.embed(X)

    @property
    def singular_values_(self) -> np.ndarray:
        return self.model_.singular_values
