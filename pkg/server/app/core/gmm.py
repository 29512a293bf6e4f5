"""
Diagonal-covariance Gaussian mixture: densities, posteriors and seeded EM.

Used as the universal background model for i-vector extraction and as the
one-class bona fide model of the voice anti-spoofing instrument.
"""
import hashlib
import json
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp
from sklearn.cluster import kmeans_plusplus

from .errors import DegenerateComponent, DimensionMismatch, TooFewFrames


logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)
MIN_WEIGHT = 1e-8


@dataclass(frozen=True)
class DiagGmm:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        variances = np.atleast_2d(np.asarray(self.variances, dtype=np.float64))
        if means.shape != variances.shape or weights.shape != (means.shape[0],):
            raise DimensionMismatch("weights, means and variances disagree in shape")
        if abs(weights.sum() - 1.0) > 1e-12 or np.any(weights < 0):
            raise ValueError("mixture weights must form a simplex")
        if np.any(variances <= 0):
            raise ValueError("variances must be positive")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise DimensionMismatch(f"frames have dimension {X.shape[1]}, model expects {self.dim}")
        return X

    def log_weighted_densities(self, X: np.ndarray) -> np.ndarray:
        """log(w_k N(x_t | mu_k, diag var_k)) as a T x K matrix."""
        X = self._check(X)
        log_norm = np.log(self.weights) - 0.5 * (self.dim * LOG_2PI + np.log(self.variances).sum(axis=1))
        out = np.empty((X.shape[0], self.n_components))
        for k in range(self.n_components):
            diff = X - self.means[k]
            out[:, k] = log_norm[k] - 0.5 * np.sum(diff * diff / self.variances[k], axis=1)
        return out

    def frame_log_likelihood(self, X: np.ndarray) -> np.ndarray:
        return logsumexp(self.log_weighted_densities(X), axis=1)

    def log_likelihood(self, X: np.ndarray) -> float:
        return float(self.frame_log_likelihood(X).sum())

    def average_log_likelihood(self, X: np.ndarray) -> float:
        """Per-frame mean log-likelihood; independent of how many frames are scored."""
        return float(self.frame_log_likelihood(X).mean())

    def posteriors(self, X: np.ndarray) -> np.ndarray:
        logp = self.log_weighted_densities(X)
        return np.exp(logp - logsumexp(logp, axis=1, keepdims=True))

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DiagGmm":
        return cls(np.asarray(doc["weights"]), np.asarray(doc["means"]), np.asarray(doc["variances"]))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict()).encode("utf-8")).hexdigest()


def _pool(frames: np.ndarray | Sequence[np.ndarray]) -> np.ndarray:
    if isinstance(frames, np.ndarray):
        return np.atleast_2d(frames.astype(np.float64))
    blocks = [np.atleast_2d(np.asarray(f, dtype=np.float64)) for f in frames if len(f)]
    if not blocks:
        return np.zeros((0, 0))
    return np.vstack(blocks)


def _initialize(X: np.ndarray, n_components: int, seed: int, floor: np.ndarray) -> DiagGmm:
    """Seeded k-means++ centers, then moments of the nearest-center partition."""
    centers, _ = kmeans_plusplus(X, n_components, random_state=seed)
    dist = np.stack([np.sum((X - c) ** 2, axis=1) for c in centers], axis=1)
    labels = np.argmin(dist, axis=1)
    global_var = X.var(axis=0)
    weights = np.empty(n_components)
    means = np.empty((n_components, X.shape[1]))
    variances = np.empty_like(means)
    for k in range(n_components):
        members = X[labels == k]
        if len(members) == 0:
            weights[k], means[k], variances[k] = 1.0 / len(X), centers[k], global_var
            continue
        weights[k] = len(members) / len(X)
        means[k] = members.mean(axis=0)
        variances[k] = members.var(axis=0)
    return DiagGmm(weights / weights.sum(), means, np.maximum(variances, floor))


def fit_diag_gmm(
    frames: np.ndarray | Sequence[np.ndarray],
    n_components: int,
    iters: int,
    seed: int,
    var_floor_ratio: float = 1e-3,
    min_frames_per_component: int = 10,
) -> tuple[DiagGmm, list[float]]:
    """
    Train a diagonal GMM by EM with variance flooring.

    Returns the model and the total log-likelihood before each iteration
    plus the final one; the sequence never decreases.
    """
    X = _pool(frames)
    if len(X) < min_frames_per_component * n_components or len(X) == 0:
        raise TooFewFrames(f"{len(X)} frames cannot support {n_components} components")
    floor = np.maximum(var_floor_ratio * X.var(axis=0), 1e-10)
    gmm = _initialize(X, n_components, seed, floor)
    history: list[float] = []
    for _ in range(iters):
        logp = gmm.log_weighted_densities(X)
        frame_ll = logsumexp(logp, axis=1)
        history.append(float(frame_ll.sum()))
        gamma = np.exp(logp - frame_ll[:, None])
        counts = gamma.sum(axis=0)
        weights = counts / len(X)
        if np.any(weights < MIN_WEIGHT):
            raise DegenerateComponent(f"component weight underflowed to {weights.min():.3g}")
        means = (gamma.T @ X) / counts[:, None]
        variances = np.empty_like(means)
        for k in range(n_components):
            diff = X - means[k]
            variances[k] = gamma[:, k] @ (diff * diff) / counts[k]
        gmm = DiagGmm(weights / weights.sum(), means, np.maximum(variances, floor))
    history.append(gmm.log_likelihood(X))
    logger.debug(f"GMM K={n_components}: log-likelihood {history[0]:.3f} -> {history[-1]:.3f}")
    return gmm, history
