"""Stage 2: embed target inputs into the learned subspace and regress there.

Once the subspace is fixed, the target problem is ordinary s-dimensional
ridge regression on the embedded coordinates. Both the primal form
(E^T E + n*lam*I_s)^{-1} E^T y and the dual form E^T (E E^T + n*lam*I_n)^{-1} y
are implemented; they agree up to round-off and the cheaper one is selected
by comparing the number of target samples with s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .linalg import spd_solve
from .subspace import SubspaceLearner, SubspaceModel
from .validation import check_matrix, check_vector


@dataclass(frozen=True, eq=False)
class TargetModel:
    """An s-dimensional ridge fit bound to the subspace it lives in."""

    subspace: SubspaceModel
    beta_target: np.ndarray
    lambda_star: float
    n_target: int

    def to_dict(self, include_subspace: bool = True) -> dict:
        out = {
            "beta_target": self.beta_target.tolist(),
            "lambda_star": self.lambda_star,
            "n_target": self.n_target,
        }
        if include_subspace:
            out["subspace"] = self.subspace.to_dict()
        return out

    @staticmethod
    def from_dict(data: dict, subspace: SubspaceModel | None = None) -> "TargetModel":
        if subspace is None:
            subspace = SubspaceModel.from_dict(data["subspace"])
        return TargetModel(
            subspace=subspace,
            beta_target=np.asarray(data["beta_target"], dtype=float),
            lambda_star=float(data["lambda_star"]),
            n_target=int(data["n_target"]),
        )


def embed(model: SubspaceModel, X_new) -> np.ndarray:
    """Rows of coordinates (v_1(x), ..., v_s(x)) for each input point."""
    return model.embed(X_new)


def ridge_primal(E: np.ndarray, Y: np.ndarray, n_lam: float) -> np.ndarray:
    """beta = (E^T E + n_lam I)^{-1} E^T Y; preferred when rows > columns."""
    return spd_solve(E.T @ E, E.T @ Y, ridge=n_lam)


def ridge_dual(E: np.ndarray, Y: np.ndarray, n_lam: float) -> np.ndarray:
    """beta = E^T (E E^T + n_lam I)^{-1} Y; preferred when rows <= columns."""
    return E.T @ spd_solve(E @ E.T, Y, ridge=n_lam)


def fit_target(model: SubspaceModel, X_T, Y_T, lambda_star: float) -> TargetModel:
    X_T = check_matrix(X_T, "X_T")
    Y_T = check_vector(Y_T, "Y_T", X_T.shape[0])
    if lambda_star <= 0:
        raise ValueError(f"lambda_star must be positive, got {lambda_star}")
    n_t = X_T.shape[0]
    E = model.embed(X_T)
    n_lam = n_t * lambda_star
    if n_t > model.s:
        beta = ridge_primal(E, Y_T, n_lam)
    else:
        beta = ridge_dual(E, Y_T, n_lam)
    return TargetModel(
        subspace=model, beta_target=beta, lambda_star=float(lambda_star), n_target=n_t
    )


def predict_target(target: TargetModel, X_new) -> np.ndarray:
    return target.subspace.embed(X_new) @ target.beta_target


class LambdaStar(NamedTuple):
    value: float
    sample_size_ok: bool


def default_lambda_star(
    s: int, n_target: int, kappa_sq: float, tau: float = 2.6
) -> LambdaStar:
    """Theory-default target regularization 12 kappa^2 max(log s, tau) / n_T.

    The value is clipped into (0, 1]; sample_size_ok reports whether
    n_T >= 12 kappa^2 max(log s, tau), i.e. whether the clip was inactive
    and the target sample size is inside the theorem's regime.
    """
    if tau < 2.6:
        raise ValueError(f"tau must be >= 2.6, got {tau}")
    if s < 1 or n_target < 1:
        raise ValueError("s and n_target must be >= 1")
    if kappa_sq <= 0:
        raise ValueError(f"kappa_sq must be positive, got {kappa_sq}")
    raw = 12.0 * kappa_sq * max(math.log(s), tau) / n_target
    return LambdaStar(value=min(raw, 1.0), sample_size_ok=raw <= 1.0)


class SubspaceRidge(BaseEstimator, RegressorMixin):
    """Ridge regression on subspace coordinates, sklearn-style.

    Parameters
    ----------
    subspace : SubspaceModel or fitted SubspaceLearner
    lambda_star : float or "auto" (the theory default at this sample size)
    tau : confidence parameter used by the "auto" rule, >= 2.6
    """

    def __init__(self, subspace=None, lambda_star="auto", tau=2.6):
        self.subspace = subspace
        self.lambda_star = lambda_star
        self.tau = tau

    def _model(self) -> SubspaceModel:
        if isinstance(self.subspace, SubspaceModel):
            return self.subspace
        if isinstance(self.subspace, SubspaceLearner):
            return self.subspace.model_
        raise ValueError("subspace must be a SubspaceModel or a fitted SubspaceLearner")

    def fit(self, X, y):
        model = self._model()
        X = check_matrix(X, "X")
        y = check_vector(y, "y", X.shape[0])
        if self.lambda_star == "auto":
            lam = default_lambda_star(
                model.s, X.shape[0], model.kernel.kappa_sq, self.tau
            )
            self.lambda_star_ = lam.value
            self.sample_size_ok_ = lam.sample_size_ok
        else:
            self.lambda_star_ = float(self.lambda_star)
            self.sample_size_ok_ = True
        self.target_model_ = fit_target(model, X, y, self.lambda_star_)
        self.beta_ = self.target_model_.beta_target
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "target_model_"):
            raise RuntimeError("SubspaceRidge is not fitted")
        return predict_target(self.target_model_, X)
