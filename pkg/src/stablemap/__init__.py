"""stablemap: unsupervised long-term stability labelling for point-cloud maps.

Multi-session maps of the same environment are ground-filtered, outlier
cleaned, co-registered, and compared point-wise: the per-point maximum
nearest-neighbor distance across all other sessions is squashed into a
[0, 1] stability score.  Labelled maps are cut into fixed-size submaps for
model training, and per-point predictions can be fused back and evaluated
against ground truth.
"""

from .cloud import (
    NormalEstimator,
    Point,
    PointCloud,
    SpatialIndex,
    build_index,
    estimate_normals,
    nearest_distance,
    nearest_distances,
)
from .io import (
    BatchFile,
    SessionEntry,
    SessionManifest,
    read_batch,
    read_manifest,
    read_ply,
    read_predictions,
    write_batch,
    write_manifest,
    write_ply,
    write_predictions,
    write_report,
)
from .labelling import (
    LabelledCloud,
    LabellingParams,
    StabilityLabeller,
    distance_features,
    label_map,
    label_to_distance,
    stability_label,
)
from .metrics import (
    EvaluationReport,
    RocCurve,
    auc,
    evaluate_map,
    miou,
    optimal_threshold_gmean,
    roc_curve,
)
from .preprocess import (
    CsfGroundFilter,
    CsfParams,
    SorOutlierFilter,
    SorParams,
    ground_mask_csf,
    remove_ground_csf,
    remove_outliers_sor,
    sor_inlier_mask,
)
from .registration import (
    IcpParams,
    IcpRegistration,
    IcpResult,
    RigidTransform,
    apply_transform,
    best_rigid_transform,
    icp_align,
    icp_align_refined,
)
from .synthetic import SceneSpec, SessionBundle, generate_scene
from .tiling import (
    Submap,
    SubmapTiler,
    TilingParams,
    VoteAccumulator,
    accumulate_votes,
    resolve_votes,
    tile_grid_origins,
    tile_submaps,
)
from .weighting import (
    DensityWeighter,
    WeightParams,
    dense_weights,
    label_density,
    rmse,
    weighted_rmse,
)

__version__ = "0.1.0"

__all__ = [
    "Point",
    "PointCloud",
    "SpatialIndex",
    "build_index",
    "nearest_distance",
    "nearest_distances",
    "estimate_normals",
    "NormalEstimator",
    "CsfParams",
    "SorParams",
    "ground_mask_csf",
    "remove_ground_csf",
    "sor_inlier_mask",
    "remove_outliers_sor",
    "CsfGroundFilter",
    "SorOutlierFilter",
    "RigidTransform",
    "IcpParams",
    "IcpResult",
    "best_rigid_transform",
    "apply_transform",
    "icp_align",
    "icp_align_refined",
    "IcpRegistration",
    "LabellingParams",
    "LabelledCloud",
    "distance_features",
    "stability_label",
    "label_to_distance",
    "label_map",
    "StabilityLabeller",
    "TilingParams",
    "Submap",
    "VoteAccumulator",
    "tile_grid_origins",
    "tile_submaps",
    "accumulate_votes",
    "resolve_votes",
    "SubmapTiler",
    "WeightParams",
    "label_density",
    "dense_weights",
    "weighted_rmse",
    "rmse",
    "DensityWeighter",
    "RocCurve",
    "EvaluationReport",
    "roc_curve",
    "auc",
    "optimal_threshold_gmean",
    "miou",
    "evaluate_map",
    "SceneSpec",
    "SessionBundle",
    "generate_scene",
    "SessionEntry",
    "SessionManifest",
    "BatchFile",
    "read_ply",
    "write_ply",
    "read_manifest",
    "write_manifest",
    "read_batch",
    "write_batch",
    "read_predictions",
    "write_predictions",
    "write_report",
    "__version__",
]
