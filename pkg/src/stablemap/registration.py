"""Rigid registration of filtered observations onto the reference session.

Point-to-point ICP with a fixed correspondence distance gate; the inner
rigid fit is the closed-form cross-covariance (SVD) solution with the
reflection case corrected to a proper rotation.
"""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .cloud import PointCloud, SpatialIndex
from .validation import as_positions, as_vector3

__all__ = [
    "RigidTransform",
    "IcpParams",
    "IcpResult",
    "best_rigid_transform",
    "icp_align",
    "icp_align_refined",
    "apply_transform",
    "IcpRegistration",
]

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class RigidTransform:
    """Proper rigid motion p -> R @ p + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = as_vector3(self.translation, "translation")
        if r.shape != (3, 3):
            raise ValueError("rotation must be a 3x3 matrix")
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-6:
            raise ValueError("rotation must be orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise ValueError("rotation must be proper (det = +1)")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def apply(self, positions: np.ndarray) -> np.ndarray:
        return np.asarray(positions, dtype=np.float64) @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self ∘ other)(p) = self(other(p))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def rotation_angle(self) -> float:
        """Rotation magnitude in radians."""
        c = (np.trace(self.rotation) - 1.0) / 2.0
        return float(np.arccos(np.clip(c, -1.0, 1.0)))


@dataclass
class IcpParams:
    max_iterations: int = 50
    max_correspondence_dist: float = 2.0
    convergence_eps: float = 1e-5
    initial_guess: RigidTransform = field(default_factory=RigidTransform.identity)
    # Optional centroid pre-alignment.  Off by default: when sessions differ
    # in content (objects moved or gone), the centroid shift encodes the
    # content change, not the frame offset, and poisons the start pose.
    center_init: bool = False

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.max_correspondence_dist <= 0:
            raise ValueError("max_correspondence_dist must be positive")


@dataclass(frozen=True)
class IcpResult:
    transform: RigidTransform
    residual_rmse: float
    iterations: int
    stalled: bool
    residual_history: np.ndarray


def best_rigid_transform(source_points, target_points) -> RigidTransform:
    """Least-squares proper rigid transform mapping source points onto targets.

    Closed-form solution via SVD of the cross-covariance of the centered
    pairs.  Requires at least 3 pairs that are not all collinear; a
    reflection solution is corrected to det(R) = +1.
    """
    a = as_positions(source_points, "source points")
    b = as_positions(target_points, "target points")
    if a.shape != b.shape:
        raise ValueError("source and target pair counts differ")
    if a.shape[0] < 3:
        raise ValueError("degenerate correspondence set")

    ca = a.mean(axis=0)
    cb = b.mean(axis=0)
    h = (a - ca).T @ (b - cb)
    u, s, vt = np.linalg.svd(h)
    if s[1] <= 1e-12 * max(s[0], 1e-300):
        raise ValueError("degenerate correspondence set")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    t = cb - r @ ca
    return RigidTransform(r, t)


def apply_transform(t: RigidTransform, cloud: PointCloud) -> PointCloud:
    """Map a cloud into another frame: positions get R p + t, normals R n."""
    return PointCloud(
        positions=t.apply(cloud.positions),
        normals=None if cloud.normals is None else cloud.normals @ t.rotation.T,
        gt=cloud.gt,
        frame_id=cloud.frame_id,
        degenerate_normals=cloud.degenerate_normals,
    )


def icp_align(
    source: PointCloud | np.ndarray,
    target: PointCloud | np.ndarray,
    params: IcpParams | None = None,
) -> IcpResult:
    """Align source onto target with point-to-point ICP.

    Correspondences beyond ``max_correspondence_dist`` are rejected each
    iteration so scene changes (moved objects, partial overlap) do not
    drag the fit.  Terminates on residual convergence, iteration budget,
    or a 5-iteration stall; a stall returns the best transform seen with
    ``stalled=True`` instead of failing, since changed scenes guarantee
    imperfect overlap.
    """
    params = params or IcpParams()
    src = source.positions if isinstance(source, PointCloud) else as_positions(source)
    tgt = target.positions if isinstance(target, PointCloud) else as_positions(target)
    if src.shape[0] < 3 or tgt.shape[0] < 3:
        raise ValueError("registration degenerate")

    index = SpatialIndex(tgt)
    current = params.initial_guess
    if params.center_init:
        shift = tgt.mean(axis=0) - current.apply(src).mean(axis=0)
        current = RigidTransform(np.eye(3), shift).compose(current)

    best: RigidTransform = current
    best_residual = np.inf
    prev_residual = np.inf
    stall_count = 0
    history = []
    iterations = 0
    stalled = False

    for iterations in range(1, params.max_iterations + 1):
        moved = current.apply(src)
        dist, idx = index.query(moved)
        mask = dist <= params.max_correspondence_dist
        if int(mask.sum()) < 3:
            raise ValueError("registration degenerate")

        residual = float(np.sqrt(np.mean(dist[mask] ** 2)))
        history.append(residual)

        if residual < best_residual:
            best_residual = residual
            best = current
            stall_count = 0
        else:
            stall_count += 1
            if stall_count >= 5:
                stalled = True
                break

        if abs(prev_residual - residual) < params.convergence_eps:
            break
        prev_residual = residual

        step = best_rigid_transform(moved[mask], tgt[idx[mask]])
        current = step.compose(current)

    return IcpResult(
        transform=best,
        residual_rmse=float(best_residual),
        iterations=iterations,
        stalled=stalled,
        residual_history=np.asarray(history),
    )


def icp_align_refined(
    source: PointCloud | np.ndarray,
    target: PointCloud | np.ndarray,
    params: IcpParams | None = None,
    refine_gates=(0.8, 0.3),
) -> IcpResult:
    """icp_align followed by re-alignments at progressively tighter gates.

    A gate wide enough to capture the initial frame offset also admits
    correspondences onto moved objects, and those bias the equilibrium
    pose by tens of centimeters.  Re-running from the coarse result with
    a tighter gate rejects them; each stage is a plain ``icp_align`` call,
    so every contract (monotone descent, stall guard) holds per stage.
    """
    params = params or IcpParams()
    result = icp_align(source, target, params)
    history = [result.residual_history]
    iterations = result.iterations
    for gate in refine_gates:
        if gate >= params.max_correspondence_dist:
            continue
        stage = IcpParams(
            max_iterations=params.max_iterations,
            max_correspondence_dist=gate,
            convergence_eps=params.convergence_eps,
            initial_guess=result.transform,
        )
        result = icp_align(source, target, stage)
        history.append(result.residual_history)
        iterations += result.iterations
    return IcpResult(
        transform=result.transform,
        residual_rmse=result.residual_rmse,
        iterations=iterations,
        stalled=result.stalled,
        residual_history=np.concatenate(history),
    )


class IcpRegistration(BaseEstimator):
    """Sklearn-style ICP: ``fit(X, y)`` aligns source X onto target y.

    Fitted attributes: ``rotation_``, ``translation_``, ``residual_rmse_``,
    ``n_iterations_``, ``stalled_``.  ``transform`` maps positions with the
    fitted rigid motion.
    """

    def __init__(
        self,
        max_iterations: int = 50,
        max_correspondence_dist: float = 2.0,
        convergence_eps: float = 1e-5,
        center_init: bool = False,
    ):
        self.max_iterations = max_iterations
        self.max_correspondence_dist = max_correspondence_dist
        self.convergence_eps = convergence_eps
        self.center_init = center_init

    def fit(self, X, y):
        result = icp_align(
            as_positions(X, "source"),
            as_positions(y, "target"),
            IcpParams(
                max_iterations=self.max_iterations,
                max_correspondence_dist=self.max_correspondence_dist,
                convergence_eps=self.convergence_eps,
                center_init=self.center_init,
            ),
        )
        self.rotation_ = result.transform.rotation
        self.translation_ = result.transform.translation
        self.residual_rmse_ = result.residual_rmse
        self.n_iterations_ = result.iterations
        self.stalled_ = result.stalled
        self.result_ = result
        return self

    def transform(self, X) -> np.ndarray:
        return self.result_.transform.apply(as_positions(X))
