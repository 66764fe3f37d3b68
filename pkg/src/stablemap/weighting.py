"""Density-based sample weighting for imbalanced regression targets.

Stability labels are heavily skewed toward 0 (most of a map is stable), so
training samples are reweighted inversely to the local label density: rare
label values get weights above 1, common ones below, with the weights
normalized to mean 1.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .validation import as_scores, check_same_length

__all__ = [
    "WeightParams",
    "label_density",
    "dense_weights",
    "weighted_rmse",
    "rmse",
    "DensityWeighter",
]


@dataclass
class WeightParams:
    """alpha scales the weighting emphasis (0 disables it); epsilon floors
    the raw weights so none are zero or negative.

    density_estimator selects how the label density is estimated:
    "histogram" (bin-relative frequency over [0, 1]) or "kernel"
    (Gaussian smoothing with ``bandwidth`` in label units).
    """

    alpha: float = 1.0
    epsilon: float = 1e-6
    density_estimator: str = "histogram"
    bins: int = 100
    bandwidth: float = 0.05

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.density_estimator not in ("histogram", "kernel"):
            raise ValueError("density_estimator must be 'histogram' or 'kernel'")
        if self.bins < 1:
            raise ValueError("bins must be at least 1")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")


class DensityFunction:
    """Non-negative density over [0, 1], evaluable at any label value."""

    def __init__(self, evaluate, kind: str):
        self._evaluate = evaluate
        self.kind = kind

    def __call__(self, y) -> np.ndarray:
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        return self._evaluate(y)


def label_density(labels, params: WeightParams | None = None) -> DensityFunction:
    """Estimate the label density function from observed labels."""
    params = params or WeightParams()
    labels = as_scores(labels, "labels")
    if labels.size < 2:
        raise ValueError("need at least 2 labels to estimate a density")

    if params.density_estimator == "histogram":
        counts, edges = np.histogram(labels, bins=params.bins, range=(0.0, 1.0))
        width = 1.0 / params.bins
        density = counts / (labels.size * width)

        def evaluate(y):
            idx = np.clip((y / width).astype(np.int64), 0, params.bins - 1)
            return density[idx]

        return DensityFunction(evaluate, "histogram")

    h = params.bandwidth
    norm = 1.0 / (labels.size * h * np.sqrt(2.0 * np.pi))

    def evaluate(y):
        # direct Gaussian kernel sum, chunked to bound memory
        out = np.empty(y.shape[0])
        for start in range(0, y.shape[0], 4096):
            block = y[start : start + 4096, None] - labels[None, :]
            out[start : start + 4096] = np.exp(-0.5 * (block / h) ** 2).sum(axis=1)
        return norm * out

    return DensityFunction(evaluate, "kernel")


def dense_weights(labels, params: WeightParams | None = None) -> np.ndarray:
    """Per-label training weights, inverse to normalized label density.

    The density is min-max normalized over the observed labels (defined as
    0 everywhere when the density is constant, which also covers the
    constant-label case); raw weights are max(1 - alpha * p', epsilon) and
    the result is normalized to mean 1.
    """
    params = params or WeightParams()
    labels = as_scores(labels, "labels")
    if labels.size == 0:
        raise ValueError("labels must be non-empty")
    if labels.size == 1:
        return np.ones(1)

    p = label_density(labels, params)(labels)
    spread = p.max() - p.min()
    if spread > 0:
        p_norm = (p - p.min()) / spread
    else:
        p_norm = np.zeros_like(p)
    raw = np.maximum(1.0 - params.alpha * p_norm, params.epsilon)
    return raw / raw.mean()


def weighted_rmse(pred, truth, weights) -> float:
    """Square root of the weighted mean squared error."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    truth = np.asarray(truth, dtype=np.float64).reshape(-1)
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    check_same_length(pred, truth, "pred", "truth")
    check_same_length(pred, weights, "pred", "weights")
    if pred.size == 0:
        raise ValueError("need at least one sample")
    if (weights < 0).any():
        raise ValueError("weights must be non-negative")
    return float(np.sqrt(np.mean(weights * (pred - truth) ** 2)))


def rmse(pred, truth) -> float:
    """Unweighted root mean squared error."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    return weighted_rmse(pred, truth, np.ones(pred.size))


class DensityWeighter(BaseEstimator, TransformerMixin):
    """Sklearn-style weighter: fit the label density, transform labels to weights.

    ``transform`` reuses the density, min-max range and normalization
    constant estimated on the fitted labels, so weights for new labels are
    consistent with the training population.
    """

    def __init__(
        self,
        alpha: float = 1.0,
        epsilon: float = 1e-6,
        density_estimator: str = "histogram",
        bins: int = 100,
        bandwidth: float = 0.05,
    ):
        self.alpha = alpha
        self.epsilon = epsilon
        self.density_estimator = density_estimator
        self.bins = bins
        self.bandwidth = bandwidth

    def _params(self) -> WeightParams:
        return WeightParams(
            alpha=self.alpha,
            epsilon=self.epsilon,
            density_estimator=self.density_estimator,
            bins=self.bins,
            bandwidth=self.bandwidth,
        )

    def fit(self, X, y=None):
        labels = as_scores(X, "labels")
        params = self._params()
        self.density_ = label_density(labels, params)
        p = self.density_(labels)
        self.p_min_ = float(p.min())
        self.p_spread_ = float(p.max() - p.min())
        raw = self._raw(labels)
        self.norm_ = float(raw.mean())
        return self

    def _raw(self, labels: np.ndarray) -> np.ndarray:
        p = self.density_(labels)
        if self.p_spread_ > 0:
            p_norm = np.clip((p - self.p_min_) / self.p_spread_, 0.0, 1.0)
        else:
            p_norm = np.zeros_like(p)
        return np.maximum(1.0 - self.alpha * p_norm, self.epsilon)

    def transform(self, X) -> np.ndarray:
        labels = as_scores(X, "labels")
        return self._raw(labels) / self.norm_
