"""Point cloud model: container types, exact nearest-neighbor index, normals.

Positions are (N, 3) float64 arrays in meters.  Normals, when present, are
unit vectors.  The spatial index is exact (k-d tree); approximate neighbors
would corrupt distance-based stability labels downstream.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator, TransformerMixin

from .validation import as_positions, as_vector3

__all__ = [
    "Point",
    "PointCloud",
    "SpatialIndex",
    "build_index",
    "nearest_distance",
    "nearest_distances",
    "estimate_normals",
    "NormalEstimator",
]

_UNIT_TOL = 1e-6


@dataclass(frozen=True)
class Point:
    """A single point: 3D position in meters plus optional unit normal."""

    position: np.ndarray
    normal: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "position", as_vector3(self.position, "position"))
        if self.normal is not None:
            n = as_vector3(self.normal, "normal")
            if abs(np.linalg.norm(n) - 1.0) > _UNIT_TOL:
                raise ValueError("normal must have unit length")
            object.__setattr__(self, "normal", n)


@dataclass
class PointCloud:
    """An ordered set of points belonging to one observation session.

    Parameters
    ----------
    positions : (N, 3) array
        Point coordinates in meters.  Must be finite.
    normals : (N, 3) array, optional
        Per-point unit surface normals.
    gt : (N,) int array, optional
        Per-point ground-truth class: 0 = stable, 1 = dynamic.
    frame_id : str
        Identifier of the session the cloud was recorded in.
    """

    positions: np.ndarray
    normals: np.ndarray | None = None
    gt: np.ndarray | None = None
    frame_id: str = ""
    degenerate_normals: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 3:
            raise ValueError(f"positions must have shape (N, 3), got {p.shape}")
        if not np.isfinite(p).all():
            raise ValueError("positions contain NaN or infinite values")
        self.positions = p
        if self.normals is not None:
            n = np.asarray(self.normals, dtype=np.float64)
            if n.shape != p.shape:
                raise ValueError("normals must match positions shape")
            self.normals = n
        if self.gt is not None:
            g = np.asarray(self.gt).astype(np.int8).reshape(-1)
            if g.shape[0] != p.shape[0]:
                raise ValueError("gt must have one class per point")
            self.gt = g

    def __len__(self) -> int:
        return self.positions.shape[0]

    def point(self, i: int) -> Point:
        normal = None if self.normals is None else self.normals[i]
        return Point(self.positions[i], normal)

    def subset(self, selector) -> "PointCloud":
        """Cloud restricted to a boolean mask or index array; order preserved."""
        return PointCloud(
            positions=self.positions[selector],
            normals=None if self.normals is None else self.normals[selector],
            gt=None if self.gt is None else self.gt[selector],
            frame_id=self.frame_id,
            degenerate_normals=(
                None
                if self.degenerate_normals is None
                else self.degenerate_normals[selector]
            ),
        )


class SpatialIndex:
    """Exact nearest-neighbor index over a fixed set of positions.

    Immutable after construction; concurrent read queries are safe.
    """

    def __init__(self, positions: np.ndarray):
        positions = as_positions(positions)
        if positions.shape[0] == 0:
            raise ValueError("empty input cloud")
        self._positions = positions
        self._tree = cKDTree(positions)

    def __len__(self) -> int:
        return self._positions.shape[0]

    @property
    def positions(self) -> np.ndarray:
        return self._positions

    def query(self, q, k: int = 1):
        """Distances (and indices) of the k nearest indexed points to each query."""
        return self._tree.query(np.asarray(q, dtype=np.float64), k=k)


def build_index(cloud: PointCloud | np.ndarray) -> SpatialIndex:
    """Build a nearest-neighbor index over a cloud's points."""
    positions = cloud.positions if isinstance(cloud, PointCloud) else cloud
    return SpatialIndex(positions)


def nearest_distance(index: SpatialIndex, q) -> float:
    """Minimum Euclidean distance from the query point to the indexed set."""
    d, _ = index.query(as_vector3(q, "query point"))
    return float(d)


def nearest_distances(index: SpatialIndex, queries) -> np.ndarray:
    """Vectorized :func:`nearest_distance` over an (M, 3) query array."""
    d, _ = index.query(as_positions(queries, "queries"))
    return np.asarray(d, dtype=np.float64)


def _pca_normals(positions: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Smallest-eigenvalue principal direction of each k-neighborhood.

    Returns (normals, degenerate_mask).  A neighborhood is degenerate when
    its points are collinear or coincident (second covariance eigenvalue
    numerically zero); those normals are set to +Z.
    """
    tree = cKDTree(positions)
    # k neighbors excluding the point itself
    _, idx = tree.query(positions, k=k + 1)
    neigh = positions[idx]  # (N, k+1, 3)
    centered = neigh - neigh.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / (k + 1)
    eigvals, eigvecs = np.linalg.eigh(cov)  # ascending eigenvalues
    normals = eigvecs[:, :, 0].copy()
    scale = np.maximum(eigvals[:, 2], 1.0)
    degenerate = eigvals[:, 1] <= 1e-12 * scale
    normals[degenerate] = (0.0, 0.0, 1.0)
    norms = np.linalg.norm(normals, axis=1, keepdims=True)
    normals /= norms
    return normals, degenerate


def estimate_normals(
    cloud: PointCloud,
    k: int = 16,
    viewpoint=None,
    return_degenerate: bool = False,
):
    """Attach PCA surface normals over k nearest neighbors to every point.

    The normal is the least-variance principal direction of the point's
    neighborhood, sign-oriented toward ``viewpoint`` (default: the cloud
    centroid lifted far along +Z, so flat scenes get upward normals).

    Parameters
    ----------
    cloud : PointCloud
        Needs at least k+1 points.
    k : int
        Neighborhood size, at least 3.
    viewpoint : 3-vector, optional
        Orientation target; normals are flipped to point toward it.
    return_degenerate : bool
        Also return the boolean mask of degenerate neighborhoods.
    """
    if k < 3:
        raise ValueError("k must be at least 3")
    if len(cloud) < k + 1:
        raise ValueError(f"cloud must have at least k+1 = {k + 1} points")
    normals, degenerate = _pca_normals(cloud.positions, k)

    if viewpoint is None:
        extent = cloud.positions.max(axis=0) - cloud.positions.min(axis=0)
        lift = max(100.0 * float(np.max(extent)), 100.0)
        viewpoint = cloud.positions.mean(axis=0) + np.array([0.0, 0.0, lift])
    viewpoint = as_vector3(viewpoint, "viewpoint")
    to_view = viewpoint[None, :] - cloud.positions
    flip = np.einsum("ni,ni->n", to_view, normals) < 0.0
    normals[flip] *= -1.0

    out = PointCloud(
        positions=cloud.positions,
        normals=normals,
        gt=cloud.gt,
        frame_id=cloud.frame_id,
        degenerate_normals=degenerate,
    )
    if return_degenerate:
        return out, degenerate
    return out


class NormalEstimator(BaseEstimator, TransformerMixin):
    """Sklearn-style transformer appending PCA normals to positions.

    ``transform`` maps an (N, 3) position array to an (N, 6) array of
    ``[x y z nx ny nz]``.  Stateless: normals are always computed from the
    array being transformed.
    """

    def __init__(self, k: int = 16, viewpoint=None):
        self.k = k
        self.viewpoint = viewpoint

    def fit(self, X, y=None):
        as_positions(X)
        return self

    def transform(self, X) -> np.ndarray:
        cloud = PointCloud(as_positions(X))
        out, degenerate = estimate_normals(
            cloud, k=self.k, viewpoint=self.viewpoint, return_degenerate=True
        )
        self.degenerate_mask_ = degenerate
        return np.hstack([out.positions, out.normals])
