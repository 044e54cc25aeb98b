"""Shared-seed random Fourier features for the RBF kernel.

Every client derives identical embedding parameters from one integer
seed, so feature maps computed independently at different clients agree
bit for bit.  The parameter stream is pinned to the counter-based Philox
generator with inverse-CDF normal draws; draw order is all frequency
entries row-major, then all phase shifts.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

__all__ = [
    "RffParams",
    "EmbeddedDataset",
    "derive_params",
    "embed",
    "embed_matrix",
    "FourierFeatureMap",
]


@dataclass(frozen=True)
class RffParams:
    """Frequency vectors and phase shifts of one feature map.

    omega: (q, d) array, entries drawn from Normal(0, 1/sigma^2).
    delta: (q,) array of shifts in (0, 2*pi].
    """

    omega: np.ndarray
    delta: np.ndarray
    sigma: float
    q: int

    @property
    def d(self) -> int:
        return self.omega.shape[1]


@dataclass(frozen=True)
class EmbeddedDataset:
    """Kernel-embedded features with one-hot labels for one client."""

    features: np.ndarray  # (l, q), entries in [-sqrt(2/q), sqrt(2/q)]
    labels: np.ndarray    # (l, c), one-hot rows

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"feature rows {self.features.shape[0]} != "
                f"label rows {self.labels.shape[0]}"
            )

    def __len__(self) -> int:
        return self.features.shape[0]


def derive_params(seed: int, d: int, q: int, sigma: float) -> RffParams:
    """Deterministically derive feature-map parameters from a shared seed.

    Uniform doubles are the midpoints (k + 0.5) * 2^-53 of a 53-bit
    lattice, mapped through the inverse normal CDF for the frequencies;
    shifts are 2*pi times the remaining uniforms.  Two calls with equal
    arguments produce bitwise-identical arrays.
    """
    if d < 1 or q < 1:
        raise ValueError(f"d and q must be >= 1, got d={d}, q={q}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    gen = np.random.Generator(np.random.Philox(seed))
    u = (gen.integers(0, 1 << 53, size=q * d + q) + 0.5) * 2.0**-53
    omega = (ndtri(u[: q * d]) / sigma).reshape(q, d)
    delta = 2.0 * np.pi * u[q * d :]
    return RffParams(omega=omega, delta=delta, sigma=float(sigma), q=int(q))


def embed(params: RffParams, x: np.ndarray) -> np.ndarray:
    """Map one d-vector to sqrt(2/q) * cos(x . omega_s + delta_s), s=1..q."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.d,):
        raise ValueError(f"expected shape ({params.d},), got {x.shape}")
    return np.sqrt(2.0 / params.q) * np.cos(params.omega @ x + params.delta)


def embed_matrix(params: RffParams, X: np.ndarray, Y: np.ndarray) -> EmbeddedDataset:
    """Row-wise feature map of X; labels pass through unchanged."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.d:
        raise ValueError(
            f"expected (l, {params.d}) features, got {X.shape}"
        )
    if Y.ndim != 2 or Y.shape[0] != X.shape[0]:
        raise ValueError(
            f"labels {Y.shape} do not match {X.shape[0]} feature rows"
        )
    features = np.sqrt(2.0 / params.q) * np.cos(X @ params.omega.T + params.delta)
    return EmbeddedDataset(features=features, labels=Y.copy())


class FourierFeatureMap(TransformerMixin, BaseEstimator):
    """RBF-kernel feature map with a shared-seed determinism contract.

    Unlike samplers keyed to a mutable random state, the map is a pure
    function of (seed, input dimension, q, sigma): any party holding the
    same seed reproduces the identical transform.  Inner products of
    transformed rows approximate exp(-||v1 - v2||^2 / (2 sigma^2)).

    Parameters
    ----------
    q : int, output dimension (number of cosine features).
    sigma : float, kernel bandwidth.
    seed : int, shared parameter seed.
    """

    def __init__(self, q: int = 2000, sigma: float = 5.0, seed: int = 0):
        self.q = q
        self.sigma = sigma
        self.seed = seed

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        self.params_ = derive_params(self.seed, self.n_features_in_, self.q, self.sigma)
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        p = self.params_
        return np.sqrt(2.0 / p.q) * np.cos(X @ p.omega.T + p.delta)
