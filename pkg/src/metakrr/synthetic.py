"""Ground-truth worlds where every theoretical quantity is exactly computable.

A world fixes an s_true-dimensional subspace spanned by kernel sections at
anchor points z_1..z_{s_true}; every task function is a known combination
f_i = sum_k C[i, k] K(z_k, .), so RKHS inner products against the truth are
closed-form through the anchor Gram matrix. Noise is uniform on
[-sigma_y, sigma_y], keeping labels strictly bounded. Oracles provided:

* exact projection distance between the learned and true subspaces
  (Hilbert-Schmidt norm of (I - P_hat) P);
* exact Hilbert-Schmidt distance between the empirical task-covariance
  operator and its population counterpart;
* the spectral perturbation inequality relating the two, checked numerically;
* Monte-Carlo excess risk against the true target function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import stream_rng
from .kernels import Kernel, kernel_from_dict
from .linalg import psqrt_and_pinvsqrt, sym_eig
from .regression import SplitTaskFit, TaskRegressor, predict
from .subspace import SubspaceModel, assemble_jq, solve_subspace
from .validation import check_matrix, check_positive

_MAX_GENERATION_RETRIES = 10


@dataclass(frozen=True)
class InputDist:
    """Shared input distribution: uniform on a box or isotropic Gaussian."""

    kind: str = "uniform_box"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform_box", "gaussian"):
            raise ValueError(f"unknown input distribution {self.kind!r}")
        check_positive(self.scale, "scale")

    def sample(self, rng: np.random.Generator, m: int, d: int) -> np.ndarray:
        if self.kind == "uniform_box":
            return rng.uniform(-self.scale, self.scale, size=(m, d))
        return rng.normal(0.0, self.scale, size=(m, d))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "scale": self.scale}


@dataclass(frozen=True, eq=False)
class SyntheticWorld:
    kernel: Kernel
    anchors: np.ndarray          # (s_true, d) points whose sections span the truth
    gram_anchors: np.ndarray     # Gram of the anchors, positive definite
    gram_inv_sqrt: np.ndarray    # its inverse square root (whitens the sections)
    task_coeffs: np.ndarray      # (N, s_true), rank s_true
    target_coeffs: np.ndarray    # (s_true,)
    dist: InputDist
    sigma_y: float
    y_inf: float
    seed: int

    @property
    def s_true(self) -> int:
        return self.anchors.shape[0]

    @property
    def n_tasks(self) -> int:
        return self.task_coeffs.shape[0]

    @property
    def dim(self) -> int:
        return self.anchors.shape[1]

    def task_values(self, index, X) -> np.ndarray:
        """Exact f_i(x) (or f_T for index 'T') at each row of X."""
        X = check_matrix(X, "X")
        coeffs = self._coeffs(index)
        return self.kernel.cross_gram(X, self.anchors) @ coeffs

    def _coeffs(self, index) -> np.ndarray:
        if isinstance(index, str):
            if index != "T":
                raise ValueError(f"task index must be an integer or 'T', got {index!r}")
            return self.target_coeffs
        return self.task_coeffs[int(index)]

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel.to_dict(),
            "anchors": self.anchors.tolist(),
            "task_coeffs": self.task_coeffs.tolist(),
            "target_coeffs": self.target_coeffs.tolist(),
            "dist": self.dist.to_dict(),
            "sigma_y": self.sigma_y,
            "y_inf": self.y_inf,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(data: dict) -> "SyntheticWorld":
        kernel = kernel_from_dict(data["kernel"])
        anchors = np.asarray(data["anchors"], dtype=float)
        G, G_isqrt = _anchor_grams(kernel, anchors)
        return SyntheticWorld(
            kernel=kernel,
            anchors=anchors,
            gram_anchors=G,
            gram_inv_sqrt=G_isqrt,
            task_coeffs=np.asarray(data["task_coeffs"], dtype=float),
            target_coeffs=np.asarray(data["target_coeffs"], dtype=float),
            dist=InputDist(**data["dist"]),
            sigma_y=float(data["sigma_y"]),
            y_inf=float(data["y_inf"]),
            seed=int(data["seed"]),
        )


def _anchor_grams(kernel: Kernel, anchors: np.ndarray):
    G = kernel.gram(anchors)
    dec = sym_eig(G)
    if dec.eigenvalues[-1] < 1e-8 * dec.eigenvalues[0]:
        raise ValueError("anchor Gram matrix is numerically singular")
    _, G_isqrt, _ = psqrt_and_pinvsqrt(G, rel_cut=1e-14)
    return G, G_isqrt


def generate_world(
    d: int,
    s_true: int,
    n_tasks: int,
    kernel: Kernel,
    dist: InputDist | None = None,
    sigma_y: float = 0.5,
    seed: int = 0,
    normalize_tasks: bool = True,
) -> SyntheticWorld:
    """Sample a world satisfying the population assumptions exactly.

    Anchors are drawn from the input distribution (resampled while their Gram
    matrix is ill-conditioned); task coefficients are standard normal rows,
    rank-verified so the sources genuinely span the subspace. Deterministic
    in seed.
    """
    if not (n_tasks >= s_true >= 1):
        raise ValueError(f"need n_tasks >= s_true >= 1, got {n_tasks}, {s_true}")
    dist = dist or InputDist()
    for attempt in range(_MAX_GENERATION_RETRIES):
        rng_anchor = stream_rng(seed, "anchors", attempt)
        anchors = dist.sample(rng_anchor, s_true, d)
        G = kernel.gram(anchors)
        dec = sym_eig(G)
        if dec.eigenvalues[-1] < 1e-8 * dec.eigenvalues[0]:
            continue
        rng_coeff = stream_rng(seed, "coeffs", attempt)
        C = rng_coeff.normal(size=(n_tasks, s_true))
        svals = np.linalg.svd(C, compute_uv=False)
        if svals[-1] < 1e-8 * svals[0]:
            continue
        rng_target = stream_rng(seed, "target", attempt)
        w_t = rng_target.normal(size=s_true)
        if np.linalg.norm(w_t) < 1e-12:
            continue
        break
    else:
        raise RuntimeError(
            f"failed to generate a full-rank world in {_MAX_GENERATION_RETRIES} attempts"
        )
    if normalize_tasks:
        # Unit RKHS norm per task keeps scales comparable across seeds.
        norms = np.sqrt(np.einsum("ik,kl,il->i", C, G, C))
        C = C / norms[:, None]
        w_t = w_t / np.sqrt(w_t @ G @ w_t)
    _, G_isqrt, _ = psqrt_and_pinvsqrt(G, rel_cut=1e-14)
    all_coeffs = np.vstack([C, w_t[None, :]])
    h_norms = np.sqrt(np.einsum("ik,kl,il->i", all_coeffs, G, all_coeffs))
    kappa = np.sqrt(kernel.kappa_sq)
    y_inf = float(kappa * h_norms.max() + sigma_y)
    return SyntheticWorld(
        kernel=kernel,
        anchors=anchors,
        gram_anchors=G,
        gram_inv_sqrt=G_isqrt,
        task_coeffs=C,
        target_coeffs=w_t,
        dist=dist,
        sigma_y=float(sigma_y),
        y_inf=y_inf,
        seed=int(seed),
    )


def sample_task(world: SyntheticWorld, index, m: int, subseed: int = 0):
    """Draw (X, Y) for source task `index` (or the target task, index='T')."""
    if m < 1:
        raise ValueError(f"sample count must be >= 1, got {m}")
    if isinstance(index, str):
        if index != "T":
            raise ValueError(f"task index must be an integer or 'T', got {index!r}")
        label = "target"
    else:
        label = int(index)
        if not 0 <= label < world.n_tasks:
            raise ValueError(f"task index {label} out of range [0, {world.n_tasks})")
    rng = stream_rng(world.seed, "task", label, subseed)
    X = world.dist.sample(rng, m, world.dim)
    if world.sigma_y > 0:
        noise = rng.uniform(-world.sigma_y, world.sigma_y, size=m)
    else:
        noise = np.zeros(m)
    Y = world.task_values(index, X) + noise
    return X, Y


def true_subspace_model(world: SyntheticWorld) -> SubspaceModel:
    """A SubspaceModel whose basis spans the true subspace exactly.

    Built by feeding the anchor sections themselves through the standard
    pipeline (each 'fit' is the section K(z_k, .)); the resulting projection
    equals the true one, which makes this the oracle baseline for inference.
    """
    fits = []
    for k in range(world.s_true):
        anchors = world.anchors[k : k + 1]
        section = TaskRegressor(
            kernel=world.kernel,
            lam=1.0,
            anchors=anchors,
            dual_coeffs=np.ones(1),
            rkhs_norm_sq=float(world.kernel.eval(anchors[0], anchors[0])),
        )
        fits.append(SplitTaskFit(first_half=section, second_half=section))
    J, Q = assemble_jq(fits)
    alpha, beta, gammas = solve_subspace(J, Q, world.s_true)
    return SubspaceModel(
        s=world.s_true,
        kernel=world.kernel,
        lam=1.0,
        source_fits=fits,
        beta=beta,
        alpha=alpha,
        singular_values=gammas,
        J=J,
        Q=Q,
        spectrum=gammas,
    )


def exact_sin_theta(world: SyntheticWorld, model: SubspaceModel) -> float:
    """Hilbert-Schmidt norm of (I - P_hat) P, computed in closed form.

    With the whitened sections g_k forming an orthonormal basis of the true
    subspace, the squared distance is s_true - sum_{k,i} <v_i, g_k>^2, and
    <v_i, g_k> only needs the learned basis evaluated at the anchors.
    """
    if model.kernel != world.kernel:
        raise ValueError("model and world must share one kernel")
    V_at_anchors = model.embed(world.anchors)      # (s_true, s): v_i(z_l)
    overlaps = world.gram_inv_sqrt @ V_at_anchors  # <v_i, g_k>
    value = world.s_true - float(np.sum(overlaps**2))
    return float(np.sqrt(max(value, 0.0)))


def exact_chat_minus_cn(
    world: SyntheticWorld,
    fits: list[SplitTaskFit],
    lam: float,
    jq: tuple[np.ndarray, np.ndarray] | None = None,
) -> float:
    """Exact HS distance between the empirical and population task covariances.

    Expands |C_hat - C_N|^2 = |C_hat|^2 - 2 <C_hat, C_N> + |C_N|^2, where each
    term is a finite sum of products of RKHS inner products: inner products
    among the fits come from J and Q, inner products against the truth reduce
    to fit evaluations at the anchors. Pass jq=(J, Q) to reuse matrices a
    pretraining run already assembled.
    """
    if fits[0].second_half.kernel != world.kernel:
        raise ValueError("fits and world must share one kernel")
    if any(f.second_half.lam != lam or f.first_half.lam != lam for f in fits):
        raise ValueError("fits were not produced at the stated regularization level")
    N = len(fits)
    if N != world.n_tasks:
        raise ValueError(
            f"world has {world.n_tasks} tasks but {N} fits were supplied"
        )
    J, Q = jq if jq is not None else assemble_jq(fits)
    term_hat = float(np.sum(J * Q))
    P_second = np.vstack([predict(f.second_half, world.anchors) for f in fits])
    P_first = np.vstack([predict(f.first_half, world.anchors) for f in fits])
    inner_second = P_second @ world.task_coeffs.T   # <f_hat_i, f_j>
    inner_first = P_first @ world.task_coeffs.T     # <f_hat'_i, f_j>
    term_cross = float(np.sum(inner_second * inner_first))
    G_truth = world.task_coeffs @ world.gram_anchors @ world.task_coeffs.T
    term_truth = float(np.sum(G_truth**2))
    value = (term_hat - 2.0 * term_cross + term_truth) / N**2
    return float(np.sqrt(max(value, 0.0)))


def population_covariance_eigenvalues(world: SyntheticWorld) -> np.ndarray:
    """Nonzero eigenvalues of the population task covariance, descending."""
    C = world.task_coeffs
    G_sqrt, _, _ = psqrt_and_pinvsqrt(world.gram_anchors, rel_cut=1e-14)
    core = G_sqrt @ (C.T @ C / world.n_tasks) @ G_sqrt
    return sym_eig(core).eigenvalues


@dataclass(frozen=True)
class DavisKahanResult:
    lhs: float
    rhs: float
    holds: bool
    gamma_1: float
    gamma_s: float
    perturbation_hs: float


def davis_kahan_check(
    world: SyntheticWorld,
    model: SubspaceModel,
    fits: list[SplitTaskFit],
    lam: float,
    jq: tuple[np.ndarray, np.ndarray] | None = None,
) -> DavisKahanResult:
    """Check the spectral perturbation bound tying subspace error to |C_hat - C_N|.

    The operator-norm factor is upper-bounded by the HS norm, so `rhs` is a
    certified upper bound and `holds` must be True up to 1e-10 slack on any
    correct run.
    """
    gammas = population_covariance_eigenvalues(world)
    gamma_1, gamma_s = float(gammas[0]), float(gammas[-1])
    if gamma_s <= 1e-12 * gamma_1:
        raise ValueError("population covariance is rank-deficient: richness violated")
    delta = exact_chat_minus_cn(world, fits, lam, jq=jq)
    lhs = exact_sin_theta(world, model)
    rhs = 2.0 * gamma_s**-2 * (2.0 * gamma_1 + delta) * delta
    return DavisKahanResult(
        lhs=lhs,
        rhs=rhs,
        holds=lhs <= rhs + 1e-10,
        gamma_1=gamma_1,
        gamma_s=gamma_s,
        perturbation_hs=delta,
    )


def excess_risk(
    world: SyntheticWorld,
    predictor,
    mc_samples: int,
    subseed: int = 0,
) -> tuple[float, float]:
    """Monte-Carlo L2(mu_T) distance between a predictor and the true target.

    Returns (risk, standard_error); the standard error is delta-method
    propagated from the mean of squared differences.
    """
    if mc_samples < 1:
        raise ValueError(f"mc_samples must be >= 1, got {mc_samples}")
    rng = stream_rng(world.seed, "risk", subseed)
    X = world.dist.sample(rng, mc_samples, world.dim)
    diff = np.asarray(predictor(X), dtype=float) - world.task_values("T", X)
    sq = diff**2
    mean_sq = float(np.mean(sq))
    risk = float(np.sqrt(mean_sq))
    if mc_samples > 1 and risk > 0:
        se_mean = float(np.std(sq, ddof=1) / np.sqrt(mc_samples))
        se_risk = se_mean / (2.0 * risk)
    else:
        se_risk = 0.0
    return risk, se_risk
