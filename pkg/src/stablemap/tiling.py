"""Fixed-footprint submap tiling and prediction vote aggregation.

Maps are cut into overlapping 10x10 m tiles (no z constraint) on a regular
grid so a fixed-size point-wise model sees every part of the map; at
inference, per-point predictions from overlapping tiles are fused by
averaging.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .labelling import LabelledCloud

__all__ = [
    "TilingParams",
    "Submap",
    "VoteAccumulator",
    "tile_grid_origins",
    "tile_submaps",
    "accumulate_votes",
    "resolve_votes",
    "SubmapTiler",
]


@dataclass
class TilingParams:
    """Grid tiling parameters.

    submap_size_xy : tile footprint edge, meters
    stride_fraction : grid step as a fraction of the tile size; 0.5 gives
        50% overlap, 1.0 gives disjoint tiles
    points_per_submap : exact sample size per emitted tile
    min_points : tiles holding fewer points than this are skipped
    seed : sampling seed; fixed seed makes tiling bit-reproducible
    """

    submap_size_xy: float = 10.0
    stride_fraction: float = 0.5
    points_per_submap: int = 4096
    min_points: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.submap_size_xy <= 0:
            raise ValueError("submap_size_xy must be positive")
        if not 0 < self.stride_fraction <= 1:
            raise ValueError("stride_fraction must be in (0, 1]")
        if self.points_per_submap < 1:
            raise ValueError("points_per_submap must be at least 1")
        if self.min_points < 1:
            raise ValueError("min_points must be at least 1")


@dataclass
class Submap:
    """A fixed-size sample of one tile, recentered in x,y to the tile center.

    source_indices maps every sampled point back to its row in the source
    map, so predictions can be fused point-wise later.
    """

    positions: np.ndarray
    normals: np.ndarray | None
    labels: np.ndarray
    source_indices: np.ndarray
    tile_origin: np.ndarray

    def __len__(self) -> int:
        return self.positions.shape[0]


@dataclass
class VoteAccumulator:
    """Per-source-point running sum and count of predictions."""

    sums: np.ndarray
    counts: np.ndarray

    @staticmethod
    def empty(map_size: int) -> "VoteAccumulator":
        return VoteAccumulator(np.zeros(map_size), np.zeros(map_size, dtype=np.int64))

    def merge(self, other: "VoteAccumulator") -> "VoteAccumulator":
        return VoteAccumulator(self.sums + other.sums, self.counts + other.counts)


def tile_grid_origins(
    min_xy: np.ndarray, max_xy: np.ndarray, size: float, stride_fraction: float
) -> list[tuple[float, float]]:
    """Tile origins of a regular grid covering the [min_xy, max_xy] box.

    Steps by ``stride_fraction * size``; origin count per axis is
    ceil((extent - size) / step) + 1, laid from min_xy, which guarantees
    the union of footprints covers the whole box.
    """
    step = stride_fraction * size
    counts = []
    for ext in np.asarray(max_xy, dtype=np.float64) - np.asarray(min_xy, dtype=np.float64):
        if ext <= size:
            counts.append(1)
        else:
            counts.append(int(np.ceil((ext - size) / step - 1e-9)) + 1)
    xs = [float(min_xy[0] + i * step) for i in range(counts[0])]
    ys = [float(min_xy[1] + j * step) for j in range(counts[1])]
    return [(x, y) for x in xs for y in ys]


def tile_submaps(labelled: LabelledCloud, params: TilingParams | None = None) -> list[Submap]:
    """Cut a labelled map into fixed-size overlapping submaps.

    Tiles with at least ``points_per_submap`` points are sampled uniformly
    without replacement; sparser tiles are sampled with replacement
    (duplicates keep the same source index and are de-duplicated at
    voting).  Tiles below ``min_points`` are skipped.  Positions are
    recentered to the tile center in x,y; z is preserved so absolute
    height cues survive.
    """
    params = params or TilingParams()
    if len(labelled) == 0:
        raise ValueError("empty map")
    pos = labelled.cloud.positions
    normals = labelled.cloud.normals
    size = params.submap_size_xy

    origins = tile_grid_origins(
        pos[:, :2].min(axis=0), pos[:, :2].max(axis=0), size, params.stride_fraction
    )
    rng = np.random.default_rng(params.seed)
    submaps = []
    for ox, oy in origins:
        inside = (
            (pos[:, 0] >= ox)
            & (pos[:, 0] <= ox + size)
            & (pos[:, 1] >= oy)
            & (pos[:, 1] <= oy + size)
        )
        candidates = np.flatnonzero(inside)
        if candidates.size < params.min_points:
            continue
        replace = candidates.size < params.points_per_submap
        picked = rng.choice(candidates, size=params.points_per_submap, replace=replace)
        center = np.array([ox + size / 2.0, oy + size / 2.0, 0.0])
        submaps.append(
            Submap(
                positions=pos[picked] - center,
                normals=None if normals is None else normals[picked],
                labels=labelled.labels[picked],
                source_indices=picked.astype(np.int64),
                tile_origin=np.array([ox, oy]),
            )
        )
    return submaps


def accumulate_votes(
    acc: VoteAccumulator, submap, predictions
) -> VoteAccumulator:
    """Add one submap's per-point predictions into the accumulator.

    ``submap`` may be a Submap or a bare source-index array.  Duplicate
    samples of the same source point within the submap collapse to a
    single vote (their predictions are averaged first) so a sparse tile
    sampled with replacement cannot outvote denser tiles.
    """
    indices = submap.source_indices if isinstance(submap, Submap) else np.asarray(submap)
    predictions = np.asarray(predictions, dtype=np.float64).reshape(-1)
    if predictions.shape[0] != indices.shape[0]:
        raise ValueError("predictions length must match submap size")
    unique, inverse = np.unique(indices, return_inverse=True)
    sums = np.bincount(inverse, weights=predictions)
    counts = np.bincount(inverse)
    acc.sums[unique] += sums / counts
    acc.counts[unique] += 1
    return acc


def resolve_votes(acc: VoteAccumulator) -> tuple[np.ndarray, np.ndarray]:
    """Mean prediction per source point plus coverage mask.

    Points never sampled by any submap are flagged uncovered (score NaN)
    rather than scored 0: absence of votes is not evidence of stability.
    """
    covered = acc.counts > 0
    scores = np.full(acc.sums.shape, np.nan)
    scores[covered] = acc.sums[covered] / acc.counts[covered]
    return scores, covered


class SubmapTiler(BaseEstimator):
    """Sklearn-style tiler over feature matrices ``[x y z nx ny nz label]``.

    ``transform`` accepts an (N, 7) array (or (N, 4) ``[x y z label]``)
    and returns the list of Submaps.
    """

    def __init__(
        self,
        submap_size_xy: float = 10.0,
        stride_fraction: float = 0.5,
        points_per_submap: int = 4096,
        min_points: int = 64,
        seed: int = 0,
    ):
        self.submap_size_xy = submap_size_xy
        self.stride_fraction = stride_fraction
        self.points_per_submap = points_per_submap
        self.min_points = min_points
        self.seed = seed

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> list[Submap]:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] not in (4, 7):
            raise ValueError("expected columns [x y z label] or [x y z nx ny nz label]")
        from .cloud import PointCloud

        normals = X[:, 3:6] if X.shape[1] == 7 else None
        labelled = LabelledCloud(
            cloud=PointCloud(X[:, :3], normals=normals),
            labels=X[:, -1],
        )
        return tile_submaps(
            labelled,
            TilingParams(
                submap_size_xy=self.submap_size_xy,
                stride_fraction=self.stride_fraction,
                points_per_submap=self.points_per_submap,
                min_points=self.min_points,
                seed=self.seed,
            ),
        )
