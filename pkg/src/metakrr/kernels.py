"""Bounded positive-definite kernel families.

Each kernel knows its uniform bound kappa_sq = sup K(x, x') and carries
regularity metadata (eigenvalue-decay exponent p and embedding index alpha)
used by the rate calculator. Squared distances are computed symmetrically as
max(0, |x|^2 + |y|^2 - 2<x,y>) so K(x, y) and K(y, x) agree bit for bit and
round-off never leaks a negative under the square root.

Supported families:

* gaussian(bandwidth)          K(x,y) = exp(-|x-y|^2 / (2 bandwidth^2))
* laplacian(scale)             K(x,y) = exp(-|x-y| / scale)
* matern(nu, lengthscale)      half-integer nu in {1/2, 3/2, 5/2}
* polynomial(degree, offset, radius)   K(x,y) = (<x,y> + offset)^degree,
  bounded by (radius^2 + offset)^degree on inputs with |x| <= radius
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .validation import check_matrix, check_same_columns

MATERN_NUS = (0.5, 1.5, 2.5)


def _sq_dists(X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    x2 = np.einsum("ij,ij->i", X, X)
    z2 = np.einsum("ij,ij->i", Z, Z)
    D = X @ Z.T
    D *= -2.0
    D += x2[:, None]
    D += z2[None, :]
    np.maximum(D, 0.0, out=D)
    return D


class Kernel(ABC):
    """A positive-definite kernel with a finite sup bound."""

    @property
    @abstractmethod
    def kappa_sq(self) -> float:
        """Uniform bound: sup over x, x' of K(x, x')."""

    @abstractmethod
    def _apply(self, D: np.ndarray) -> np.ndarray:
        """Map a matrix of squared distances to kernel values (may reuse D)."""

    @abstractmethod
    def regularity(self, dim: int) -> tuple[float, float]:
        """Metadata pair (p, alpha): eigenvalue-decay and embedding exponents."""

    # -- evaluation ---------------------------------------------------------

    def eval(self, x, y) -> float:
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        if x.shape != y.shape:
            raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
        if x.size < 1:
            raise ValueError("points must have dimension >= 1")
        # scalar path with symmetric accumulation: eval(x, y) == eval(y, x)
        # bit for bit (dot products and the |.|^2 sum commute exactly)
        d2 = max(float(x @ x) + float(y @ y) - 2.0 * float(x @ y), 0.0)
        return float(self._apply(np.array([[d2]]))[0, 0])

    def gram(self, X) -> np.ndarray:
        """Gram matrix G[i, j] = K(x_i, x_j), exactly symmetric."""
        X = check_matrix(X, "X")
        D = _sq_dists(X, X)
        D = (D + D.T) / 2.0
        np.fill_diagonal(D, 0.0)
        return self._apply(D)

    def cross_gram(self, X, Z) -> np.ndarray:
        """Rectangular kernel matrix with entry (i, j) = K(x_i, z_j)."""
        X = check_matrix(X, "X")
        Z = check_matrix(Z, "Z")
        check_same_columns(X, Z)
        return self._apply(_sq_dists(X, Z))

    def __call__(self, X, Z=None) -> np.ndarray:
        return self.gram(X) if Z is None else self.cross_gram(X, Z)

    # -- parameters and serialization ---------------------------------------

    def get_params(self, deep: bool = True) -> dict:
        # `deep` is accepted for sklearn estimator-protocol compatibility.
        return {
            f.name: getattr(self, f.name)
            for f in self.__dataclass_fields__.values()  # type: ignore[attr-defined]
        }

    def to_dict(self) -> dict:
        out = {"family": self.family, "params": {}, "kappa_sq": self.kappa_sq}
        for name, value in self.get_params().items():
            if name == "regularity_params":
                if value is not None:
                    out["p"], out["alpha"] = float(value[0]), float(value[1])
            else:
                out["params"][name] = value
        return out


def _check_regularity_pair(pair):
    if pair is None:
        return None
    p, alpha = float(pair[0]), float(pair[1])
    if not (0.0 <= p <= alpha <= 1.0):
        raise ValueError(f"regularity pair must satisfy 0 <= p <= alpha <= 1, got {pair}")
    return (p, alpha)


@dataclass(frozen=True)
class Gaussian(Kernel):
    bandwidth: float = 1.0
    regularity_params: tuple[float, float] | None = None

    family = "gaussian"

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        object.__setattr__(
            self, "regularity_params", _check_regularity_pair(self.regularity_params)
        )

    @property
    def kappa_sq(self) -> float:
        return 1.0

    def _apply(self, D):
        D *= -0.5 / self.bandwidth**2
        return np.exp(D, out=D)

    def regularity(self, dim: int) -> tuple[float, float]:
        # Any pair in (0, 1] is admissible for the Gaussian; (1/2, 1/2) is the
        # library convention when the caller does not override.
        if self.regularity_params is not None:
            return self.regularity_params
        return (0.5, 0.5)


@dataclass(frozen=True)
class Laplacian(Kernel):
    scale: float = 1.0
    regularity_params: tuple[float, float] | None = None

    family = "laplacian"

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        object.__setattr__(
            self, "regularity_params", _check_regularity_pair(self.regularity_params)
        )

    @property
    def kappa_sq(self) -> float:
        return 1.0

    def _apply(self, D):
        np.sqrt(D, out=D)
        D *= -1.0 / self.scale
        return np.exp(D, out=D)

    def regularity(self, dim: int) -> tuple[float, float]:
        # Laplacian = Matern nu=1/2: Sobolev smoothness m = (dim + 1)/2.
        if self.regularity_params is not None:
            return self.regularity_params
        p = dim / (dim + 1.0)
        return (p, p)


@dataclass(frozen=True)
class Matern(Kernel):
    nu: float = 1.5
    lengthscale: float = 1.0
    regularity_params: tuple[float, float] | None = None

    family = "matern"

    def __post_init__(self):
        if self.nu not in MATERN_NUS:
            raise ValueError(f"nu must be one of {MATERN_NUS}, got {self.nu}")
        if self.lengthscale <= 0:
            raise ValueError(f"lengthscale must be positive, got {self.lengthscale}")
        object.__setattr__(
            self, "regularity_params", _check_regularity_pair(self.regularity_params)
        )

    @property
    def kappa_sq(self) -> float:
        return 1.0

    def _apply(self, D):
        r = np.sqrt(D) / self.lengthscale
        if self.nu == 0.5:
            return np.exp(-r)
        if self.nu == 1.5:
            t = math.sqrt(3.0) * r
            return (1.0 + t) * np.exp(-t)
        t = math.sqrt(5.0) * r
        return (1.0 + t + t**2 / 3.0) * np.exp(-t)

    def regularity(self, dim: int) -> tuple[float, float]:
        # Sobolev smoothness m = nu + dim/2 gives decay exponent p = dim/(2m).
        if self.regularity_params is not None:
            return self.regularity_params
        p = dim / (2.0 * self.nu + dim)
        return (p, p)


@dataclass(frozen=True)
class Polynomial(Kernel):
    degree: int = 1
    offset: float = 1.0
    radius: float = 1.0
    regularity_params: tuple[float, float] | None = None

    family = "polynomial"

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 1:
            raise ValueError(f"degree must be an integer >= 1, got {self.degree}")
        if self.offset < 0:
            raise ValueError(f"offset must be nonnegative, got {self.offset}")
        if self.radius <= 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        object.__setattr__(self, "degree", int(self.degree))
        object.__setattr__(
            self, "regularity_params", _check_regularity_pair(self.regularity_params)
        )

    @property
    def kappa_sq(self) -> float:
        return float((self.radius**2 + self.offset) ** self.degree)

    def _apply(self, D):  # pragma: no cover - replaced by inner-product path
        raise NotImplementedError

    def eval(self, x, y) -> float:
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        if x.shape != y.shape:
            raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
        if x.size < 1:
            raise ValueError("points must have dimension >= 1")
        return float((np.dot(x, y) + self.offset) ** self.degree)

    def gram(self, X) -> np.ndarray:
        X = check_matrix(X, "X")
        P = X @ X.T
        P = (P + P.T) / 2.0
        return (P + self.offset) ** self.degree

    def cross_gram(self, X, Z) -> np.ndarray:
        X = check_matrix(X, "X")
        Z = check_matrix(Z, "Z")
        check_same_columns(X, Z)
        return (X @ Z.T + self.offset) ** self.degree

    def regularity(self, dim: int) -> tuple[float, float]:
        # Finite-dimensional feature space: finite-rank covariance operator.
        if self.regularity_params is not None:
            return self.regularity_params
        return (0.0, 0.0)

    def feature_map(self, X) -> np.ndarray:
        """Explicit features phi(x) = (x, sqrt(offset)) for degree 1.

        Only the linear kernel has a feature map this small; it is the anchor
        for oracle tests that compare the kernelized pipeline with direct
        computations in feature space.
        """
        if self.degree != 1:
            raise ValueError("explicit feature map is only provided for degree 1")
        X = check_matrix(X, "X")
        off = np.full((X.shape[0], 1), math.sqrt(self.offset))
        return np.hstack([X, off])


_FAMILIES = {
    "gaussian": Gaussian,
    "laplacian": Laplacian,
    "matern": Matern,
    "polynomial": Polynomial,
}


def kernel_from_dict(data: dict) -> Kernel:
    """Inverse of Kernel.to_dict."""
    family = data["family"]
    if family not in _FAMILIES:
        raise ValueError(f"unknown kernel family {family!r}")
    kwargs = dict(data.get("params", {}))
    if "p" in data and "alpha" in data:
        kwargs["regularity_params"] = (data["p"], data["alpha"])
    return _FAMILIES[family](**kwargs)
