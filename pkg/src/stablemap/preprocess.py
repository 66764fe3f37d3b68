"""Observation filtering: cloth-simulation ground removal and outlier removal.

Ground removal runs first (the ground is stable, inflates map size, and
dilutes nearest-neighbor disparity between sessions), then statistical
outlier removal cleans the off-ground points.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator

from .cloud import PointCloud
from .validation import as_positions

__all__ = [
    "CsfParams",
    "SorParams",
    "remove_ground_csf",
    "remove_outliers_sor",
    "CsfGroundFilter",
    "SorOutlierFilter",
]

# Cloth integration constants (Verlet step): per-step gravity pull and
# velocity damping.  Scene-independent; exposed knobs live in CsfParams.
_GRAVITY = 0.2
_DAMPING = 0.01
_SETTLE_TOL = 1e-4


@dataclass
class CsfParams:
    """Cloth-simulation ground filter parameters.

    cloth_resolution : grid spacing of the simulated cloth, meters
    rigidness : 1 (soft) to 3 (stiff); spring passes per iteration
    iterations : simulation step budget
    class_threshold : max vertical distance to the settled cloth for a
        point to count as ground, meters
    time_step : integration step scale (dimensionless)
    """

    cloth_resolution: float = 0.5
    rigidness: int = 2
    iterations: int = 500
    class_threshold: float = 0.5
    time_step: float = 0.65

    def __post_init__(self):
        if self.cloth_resolution <= 0:
            raise ValueError("cloth_resolution must be positive")
        if not 1 <= int(self.rigidness) <= 3:
            raise ValueError("rigidness must be 1, 2 or 3")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.class_threshold <= 0:
            raise ValueError("class_threshold must be positive")
        if self.time_step <= 0:
            raise ValueError("time_step must be positive")


@dataclass
class SorParams:
    """Statistical outlier removal parameters: neighbor count and sigma gate."""

    k: int = 12
    std_multiplier: float = 1.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.std_multiplier <= 0:
            raise ValueError("std_multiplier must be positive")


def _neighbor_mean(z: np.ndarray) -> np.ndarray:
    """Mean over 4-connected grid neighbors; border nodes use what exists."""
    s = np.zeros_like(z)
    c = np.zeros_like(z)
    s[1:, :] += z[:-1, :]
    c[1:, :] += 1.0
    s[:-1, :] += z[1:, :]
    c[:-1, :] += 1.0
    s[:, 1:] += z[:, :-1]
    c[:, 1:] += 1.0
    s[:, :-1] += z[:, 1:]
    c[:, :-1] += 1.0
    return s / c


def _simulate_cloth(positions: np.ndarray, params: CsfParams):
    """Drape a cloth over the inverted cloud; return its grid and node heights.

    The cloud is inverted about a horizontal plane so objects standing on
    the ground hang below it; the cloth then settles onto the highest
    local surface, which is the ground.  Nodes fall under gravity, are
    pinned where they collide with the inverted points, and spring passes
    keep the sheet coherent across data gaps.
    """
    res = params.cloth_resolution
    inv_z = -positions[:, 2]
    xy = positions[:, :2]

    x0, y0 = xy.min(axis=0) - res
    x1, y1 = xy.max(axis=0) + res
    nx = int(np.ceil((x1 - x0) / res)) + 1
    ny = int(np.ceil((y1 - y0) / res)) + 1

    # Per-node collision height: max inverted height among points binned to
    # the node; empty nodes borrow from the xy-nearest point so every node
    # eventually lands.
    ix = np.clip(np.rint((xy[:, 0] - x0) / res).astype(np.int64), 0, nx - 1)
    iy = np.clip(np.rint((xy[:, 1] - y0) / res).astype(np.int64), 0, ny - 1)
    collision = np.full((nx, ny), -np.inf)
    np.maximum.at(collision, (ix, iy), inv_z)
    empty = ~np.isfinite(collision)
    if empty.any():
        gx, gy = np.nonzero(empty)
        node_xy = np.column_stack([x0 + gx * res, y0 + gy * res])
        _, nearest = cKDTree(xy).query(node_xy)
        collision[gx, gy] = inv_z[nearest]

    z = np.full((nx, ny), collision.max() + 1.0)
    prev = z.copy()
    movable = np.ones((nx, ny), dtype=bool)
    dt2 = params.time_step * params.time_step

    for _ in range(int(params.iterations)):
        before = z.copy()

        # gravity (Verlet)
        new_z = z + (z - prev) * (1.0 - _DAMPING) - _GRAVITY * dt2
        prev = z.copy()
        z = np.where(movable, new_z, z)

        hit = movable & (z <= collision)
        z[hit] = collision[hit]
        movable[hit] = False

        # internal springs: relax movable nodes toward their neighbor mean
        for _ in range(int(params.rigidness)):
            target = _neighbor_mean(z)
            z = np.where(movable, z + 0.5 * (target - z), z)
            hit = movable & (z <= collision)
            z[hit] = collision[hit]
            movable[hit] = False

        if np.max(np.abs(z - before)) < _SETTLE_TOL:
            break

    return (x0, y0, res), z


def _interp_cloth(grid, cloth: np.ndarray, xy: np.ndarray) -> np.ndarray:
    """Bilinear cloth height at arbitrary xy, clamped to the grid hull."""
    x0, y0, res = grid
    nx, ny = cloth.shape
    fx = np.clip((xy[:, 0] - x0) / res, 0.0, nx - 1 - 1e-9)
    fy = np.clip((xy[:, 1] - y0) / res, 0.0, ny - 1 - 1e-9)
    i = fx.astype(np.int64)
    j = fy.astype(np.int64)
    tx = fx - i
    ty = fy - j
    return (
        cloth[i, j] * (1 - tx) * (1 - ty)
        + cloth[i + 1, j] * tx * (1 - ty)
        + cloth[i, j + 1] * (1 - tx) * ty
        + cloth[i + 1, j + 1] * tx * ty
    )


def ground_mask_csf(cloud: PointCloud, params: CsfParams | None = None) -> np.ndarray:
    """Boolean mask of points classified as ground by the cloth filter."""
    params = params or CsfParams()
    if len(cloud) < 4:
        raise ValueError("too small for ground estimation")
    grid, cloth = _simulate_cloth(cloud.positions, params)
    cloth_at = _interp_cloth(grid, cloth, cloud.positions[:, :2])
    dist = np.abs(-cloud.positions[:, 2] - cloth_at)
    return dist <= params.class_threshold


def remove_ground_csf(
    cloud: PointCloud, params: CsfParams | None = None
) -> tuple[PointCloud, PointCloud]:
    """Split a cloud into (off-ground, ground) via cloth simulation.

    The two outputs are a disjoint partition of the input; per-point
    attributes (normals, ground truth) follow their points.
    """
    mask = ground_mask_csf(cloud, params)
    return cloud.subset(~mask), cloud.subset(mask)


def sor_inlier_mask(cloud: PointCloud, params: SorParams | None = None) -> np.ndarray:
    """Boolean mask of points kept by statistical outlier removal."""
    params = params or SorParams()
    n = len(cloud)
    if n <= params.k:
        raise ValueError("insufficient points for SOR")
    tree = cKDTree(cloud.positions)
    d, _ = tree.query(cloud.positions, k=params.k + 1)
    mu = d[:, 1:].mean(axis=1)  # drop self-distance column
    gate = mu.mean() + params.std_multiplier * mu.std()
    return mu <= gate


def remove_outliers_sor(cloud: PointCloud, params: SorParams | None = None) -> PointCloud:
    """Drop points whose mean k-NN distance exceeds the global mean + n*sigma gate."""
    return cloud.subset(sor_inlier_mask(cloud, params))


class CsfGroundFilter(BaseEstimator):
    """Sklearn-style ground filter over (N, 3) position arrays.

    ``fit`` simulates the cloth and stores ``ground_mask_``; ``transform``
    returns the off-ground rows of the fitted array.
    """

    def __init__(
        self,
        cloth_resolution: float = 0.5,
        rigidness: int = 2,
        iterations: int = 500,
        class_threshold: float = 0.5,
        time_step: float = 0.65,
    ):
        self.cloth_resolution = cloth_resolution
        self.rigidness = rigidness
        self.iterations = iterations
        self.class_threshold = class_threshold
        self.time_step = time_step

    def _params(self) -> CsfParams:
        return CsfParams(
            cloth_resolution=self.cloth_resolution,
            rigidness=self.rigidness,
            iterations=self.iterations,
            class_threshold=self.class_threshold,
            time_step=self.time_step,
        )

    def fit(self, X, y=None):
        X = as_positions(X)
        self.ground_mask_ = ground_mask_csf(PointCloud(X), self._params())
        self.n_points_ = X.shape[0]
        return self

    def transform(self, X) -> np.ndarray:
        X = as_positions(X)
        if X.shape[0] != self.n_points_:
            raise ValueError("transform input must match the fitted cloud")
        return X[~self.ground_mask_]

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X).transform(X)


class SorOutlierFilter(BaseEstimator):
    """Sklearn-style statistical outlier removal over (N, 3) arrays."""

    def __init__(self, k: int = 12, std_multiplier: float = 1.0):
        self.k = k
        self.std_multiplier = std_multiplier

    def fit(self, X, y=None):
        X = as_positions(X)
        params = SorParams(k=self.k, std_multiplier=self.std_multiplier)
        self.inlier_mask_ = sor_inlier_mask(PointCloud(X), params)
        self.n_points_ = X.shape[0]
        return self

    def transform(self, X) -> np.ndarray:
        X = as_positions(X)
        if X.shape[0] != self.n_points_:
            raise ValueError("transform input must match the fitted cloud")
        return X[self.inlier_mask_]

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X).transform(X)
