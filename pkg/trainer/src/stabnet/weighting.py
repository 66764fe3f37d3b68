"""Density-based loss weighting for skewed stability labels.

Most points in a map are stable, so label values pile up near 0. Training
on the raw distribution lets the head collapse toward the majority value;
weighting each point inversely to its label density keeps the rare labels
visible in the loss. The estimator here mirrors the weighting used on the
labelling side so a loss computed by the trainer agrees with one computed
there on the same predictions.
"""

from __future__ import annotations

import numpy as np
import torch

__all__ = ["WeightModel", "density_weights", "weighted_rmse_loss"]


class WeightModel:
    """Histogram-density weighting fitted on a label population.

    ``fit`` estimates the label density on [0, 1] with equal-width bins and
    records the min-max range and normalization constant; ``weights`` maps
    any labels to weights consistent with the fitted population:
    ``max(1 - alpha * p_norm, epsilon)`` divided by the fitted mean.
    ``alpha = 0`` yields unit weights everywhere.
    """

    def __init__(self, alpha: float, epsilon: float = 1e-6, bins: int = 100):
        if alpha < 0:
            raise ValueError("alpha must be non-negative")
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if bins < 1:
            raise ValueError("bins must be at least 1")
        self.alpha = float(alpha)
        self.epsilon = float(epsilon)
        self.bins = int(bins)
        self._density = None
        self._p_min = 0.0
        self._p_spread = 0.0
        self._norm = 1.0

    def fit(self, labels) -> "WeightModel":
        labels = np.asarray(labels, dtype=np.float64).reshape(-1)
        if labels.size < 2:
            raise ValueError("need at least 2 labels to fit the weighting")
        counts, _ = np.histogram(labels, bins=self.bins, range=(0.0, 1.0))
        width = 1.0 / self.bins
        self._density = counts / (labels.size * width)
        p = self._evaluate(labels)
        self._p_min = p.min()
        self._p_spread = p.max() - p.min()
        raw = self._raw(labels)
        self._norm = raw.mean()
        return self

    def _evaluate(self, labels: np.ndarray) -> np.ndarray:
        width = 1.0 / self.bins
        idx = np.clip((labels / width).astype(np.int64), 0, self.bins - 1)
        return self._density[idx]

    def _raw(self, labels: np.ndarray) -> np.ndarray:
        p = self._evaluate(labels)
        if self._p_spread > 0:
            p_norm = np.clip((p - self._p_min) / self._p_spread, 0.0, 1.0)
        else:
            p_norm = np.zeros_like(p)
        return np.maximum(1.0 - self.alpha * p_norm, self.epsilon)

    def weights(self, labels) -> np.ndarray:
        if self._density is None:
            raise ValueError("weighting has not been fitted")
        labels = np.asarray(labels, dtype=np.float64).reshape(-1)
        return self._raw(labels) / self._norm


def density_weights(labels, alpha: float, epsilon: float = 1e-6, bins: int = 100) -> np.ndarray:
    """Weights for a label set fitted on itself (mean 1 by construction)."""
    return WeightModel(alpha, epsilon=epsilon, bins=bins).fit(labels).weights(labels)


def weighted_rmse_loss(pred: torch.Tensor, target: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
    """Square root of the weighted mean squared error.

    Computed in float64 regardless of the prediction dtype so reported
    losses agree with a reference computation to well below 1e-6; gradients
    flow through the cast unchanged.
    """
    pred = pred.reshape(-1).double()
    target = target.reshape(-1).double()
    weights = weights.reshape(-1).double()
    if pred.shape != target.shape or pred.shape != weights.shape:
        raise ValueError("pred, target and weights must have the same length")
    if pred.numel() == 0:
        raise ValueError("need at least one sample")
    return torch.sqrt(torch.mean(weights * (pred - target) ** 2))
