"""Spatio-temporal stability labelling of a registered map.

Each point of the chosen map gets a continuous score in [0, 1]: near 0 for
points that persist across all sessions, near 1 for points of objects that
moved or vanished.  The score is driven by the maximum nearest-neighbor
distance into the other registered maps, because a dynamic object may be
absent or relocated in only one of the temporal slices; stable structure
is close to something in every slice.
"""

from dataclasses import dataclass
from collections.abc import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .cloud import PointCloud, SpatialIndex, build_index
from .validation import as_scores

__all__ = [
    "LabellingParams",
    "LabelledCloud",
    "distance_features",
    "stability_label",
    "label_map",
    "label_to_distance",
    "StabilityLabeller",
]


@dataclass
class LabellingParams:
    """lam is the sensitivity of the exponential score mapping (1/meters)."""

    lam: float = 0.5
    reference_index: int = 0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")


@dataclass
class LabelledCloud:
    """A point cloud plus per-point stability scores.

    labels : (N,) scores in [0, 1]
    d_max : optional (N,) maximum nearest-neighbor distance into the other
        maps, meters; present when labels were computed here, absent after
        a file round-trip
    ground_truth : optional (N,) binary class, 0 = stable, 1 = dynamic
    """

    cloud: PointCloud
    labels: np.ndarray
    d_max: np.ndarray | None = None
    ground_truth: np.ndarray | None = None

    def __post_init__(self):
        self.labels = as_scores(self.labels, "labels")
        if len(self.labels) != len(self.cloud):
            raise ValueError("labels must have one entry per point")
        if self.d_max is not None:
            self.d_max = np.asarray(self.d_max, dtype=np.float64).reshape(-1)
            if len(self.d_max) != len(self.cloud):
                raise ValueError("d_max must have one entry per point")
        if self.ground_truth is not None:
            g = np.asarray(self.ground_truth).astype(np.int8).reshape(-1)
            if len(g) != len(self.cloud):
                raise ValueError("ground_truth must have one entry per point")
            self.ground_truth = g

    def __len__(self) -> int:
        return len(self.cloud)


def distance_features(
    target: PointCloud | np.ndarray, others: Sequence[SpatialIndex]
) -> np.ndarray:
    """(N, K) nearest-neighbor distances from each target point into each other map.

    All maps must already be co-registered in one frame.
    """
    if len(others) == 0:
        raise ValueError("need at least two observations")
    positions = target.positions if isinstance(target, PointCloud) else target
    cols = [index.query(positions)[0] for index in others]
    return np.column_stack(cols).astype(np.float64)


def stability_label(d, lam: float = 0.5):
    """Stability score 1 - exp(-lam * max(d)) of one distance vector.

    ``d`` may also be an (N, K) matrix of per-point distance vectors, in
    which case a score per row is returned.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    d = np.asarray(d, dtype=np.float64)
    if d.size == 0:
        raise ValueError("distance vector is empty")
    if (d < 0).any():
        raise ValueError("invalid distance")
    dmax = d.max(axis=-1)
    out = 1.0 - np.exp(-lam * dmax)
    return float(out) if np.isscalar(dmax) or dmax.ndim == 0 else out


def label_to_distance(label, lam: float = 0.5):
    """Invert the score mapping: the max-distance in meters producing ``label``.

    Useful for reporting score thresholds in meters.  Undefined at 1.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    arr = np.asarray(label, dtype=np.float64)
    if (arr < 0).any() or (arr >= 1).any():
        raise ValueError("unbounded distance")
    out = -np.log1p(-arr) / lam
    return float(out) if arr.ndim == 0 else out


def label_map(
    maps: Sequence[PointCloud], params: LabellingParams | None = None
) -> LabelledCloud:
    """Label the map at ``reference_index`` against all other registered maps.

    The temporal order of the other maps is irrelevant: the score depends
    only on the per-point maximum distance.  Inputs are expected to be
    off-ground, outlier-filtered, co-registered maps.
    """
    params = params or LabellingParams()
    if len(maps) < 2:
        raise ValueError("need at least two observations")
    if not 0 <= params.reference_index < len(maps):
        raise ValueError("reference_index out of range")
    target = maps[params.reference_index]
    others = [
        build_index(m) for i, m in enumerate(maps) if i != params.reference_index
    ]
    d = distance_features(target, others)
    d_max = d.max(axis=1)
    labels = 1.0 - np.exp(-params.lam * d_max)
    return LabelledCloud(cloud=target, labels=labels, d_max=d_max, ground_truth=target.gt)


class StabilityLabeller(BaseEstimator):
    """Sklearn-style labeller: fit on the other maps, predict scores for one.

    ``fit`` takes a sequence of (N_j, 3) position arrays (the other
    registered maps) and builds their indexes; ``predict`` scores an
    (N, 3) array of query positions.
    """

    def __init__(self, lam: float = 0.5):
        self.lam = lam

    def fit(self, X, y=None):
        if len(X) == 0:
            raise ValueError("need at least two observations")
        self.indexes_ = [build_index(np.asarray(m, dtype=np.float64)) for m in X]
        return self

    def predict(self, X) -> np.ndarray:
        d = distance_features(np.asarray(X, dtype=np.float64), self.indexes_)
        return stability_label(d, self.lam)

    def transform(self, X) -> np.ndarray:
        return self.predict(X)
