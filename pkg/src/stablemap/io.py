"""ASCII file formats: PLY clouds, session manifests, batch and prediction files.

Everything is plain text by design — diffable, language-neutral for the
trainer side, and lossless for float64 (all floats are written with 17
significant digits, which round-trips exactly).
"""

import json
import os
from dataclasses import dataclass
from io import StringIO

import numpy as np

from .cloud import PointCloud
from .labelling import LabelledCloud, LabellingParams
from .preprocess import CsfParams, SorParams
from .registration import IcpParams
from .tiling import Submap, TilingParams
from .weighting import WeightParams

__all__ = [
    "SessionEntry",
    "SessionManifest",
    "BatchFile",
    "read_ply",
    "write_ply",
    "read_manifest",
    "write_manifest",
    "write_batch",
    "read_batch",
    "write_predictions",
    "read_predictions",
    "write_report",
    "format_report",
]

_FLOAT_FMT = "%.17g"
_PLY_FLOAT_PROPS = ("x", "y", "z", "nx", "ny", "nz", "label")
_PLY_INT_PROPS = ("gt",)


def _fmt(value: float) -> str:
    return _FLOAT_FMT % value


# ---------------------------------------------------------------------------
# PLY


def write_ply(cloud, path) -> None:
    """Write a PointCloud or LabelledCloud as ASCII PLY.

    Emits x,y,z always; nx,ny,nz when normals exist; label for labelled
    clouds; gt when ground truth is attached.
    """
    if isinstance(cloud, LabelledCloud):
        base = cloud.cloud
        labels = cloud.labels
        gt = cloud.ground_truth
    else:
        base = cloud
        labels = None
        gt = cloud.gt

    columns = [base.positions]
    names = ["x", "y", "z"]
    if base.normals is not None:
        columns.append(base.normals)
        names += ["nx", "ny", "nz"]
    if labels is not None:
        columns.append(labels.reshape(-1, 1))
        names.append("label")

    data = np.hstack(columns)
    n = len(base)
    with open(path, "w") as f:
        f.write("ply\nformat ascii 1.0\n")
        f.write("element vertex %d\n" % n)
        for name in names:
            f.write("property double %s\n" % name)
        if gt is not None:
            f.write("property uchar gt\n")
        f.write("end_header\n")
        float_part = [" ".join(_fmt(v) for v in row) for row in data]
        if gt is not None:
            f.write("".join("%s %d\n" % (row, g) for row, g in zip(float_part, gt)))
        else:
            f.write("".join(row + "\n" for row in float_part))


def _parse_ply_header(lines, path):
    if not lines or lines[0].strip() != "ply":
        raise ValueError(f"{path}:1: malformed header (missing 'ply' magic)")
    if len(lines) < 2 or lines[1].strip() != "format ascii 1.0":
        raise ValueError(f"{path}:2: malformed header (only 'format ascii 1.0' supported)")
    n_vertices = None
    properties = []
    i = 2
    while i < len(lines):
        parts = lines[i].split()
        lineno = i + 1
        if not parts or parts[0] == "comment":
            i += 1
            continue
        if parts[0] == "element":
            if len(parts) != 3 or parts[1] != "vertex":
                raise ValueError(f"{path}:{lineno}: malformed header (only vertex elements supported)")
            n_vertices = int(parts[2])
        elif parts[0] == "property":
            if n_vertices is None or len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: malformed header (property outside vertex element)")
            ptype, pname = parts[1], parts[2]
            if pname in _PLY_FLOAT_PROPS and ptype not in ("double", "float", "float32", "float64"):
                raise ValueError(f"{path}:{lineno}: property {pname} must be float-typed")
            properties.append(pname)
        elif parts[0] == "end_header":
            return n_vertices, properties, lineno
        else:
            raise ValueError(f"{path}:{lineno}: malformed header (unexpected '{parts[0]}')")
        i += 1
    raise ValueError(f"{path}: malformed header (no end_header)")


def read_ply(path):
    """Read an ASCII PLY; returns LabelledCloud when a label property exists,
    otherwise PointCloud.  Errors carry the offending line number."""
    with open(path) as f:
        lines = f.read().splitlines()
    n_vertices, properties, header_end = _parse_ply_header(lines, path)
    if n_vertices is None:
        raise ValueError(f"{path}: malformed header (no vertex element)")
    for required in ("x", "y", "z"):
        if required not in properties:
            raise ValueError(f"{path}: missing required property \"{required}\"")
    for name in properties:
        if name not in _PLY_FLOAT_PROPS and name not in _PLY_INT_PROPS:
            raise ValueError(f"{path}: unsupported property \"{name}\"")
    has_normals = all(p in properties for p in ("nx", "ny", "nz"))
    if any(p in properties for p in ("nx", "ny", "nz")) and not has_normals:
        raise ValueError(f"{path}: missing required property \"nx/ny/nz\" (incomplete normals)")

    body = lines[header_end : header_end + n_vertices]
    if len(body) < n_vertices:
        raise ValueError(f"{path}:{len(lines)}: truncated body (expected {n_vertices} vertices)")
    try:
        data = np.loadtxt(StringIO("\n".join(body)), ndmin=2)
    except ValueError:
        data = None
    if data is None or data.shape != (n_vertices, len(properties)):
        for offset, line in enumerate(body):
            values = line.split()
            if len(values) != len(properties):
                raise ValueError(
                    f"{path}:{header_end + offset + 1}: expected {len(properties)} values, got {len(values)}"
                )
            try:
                [float(v) for v in values]
            except ValueError:
                raise ValueError(f"{path}:{header_end + offset + 1}: unparseable value") from None
        raise ValueError(f"{path}: malformed body")
    bad = ~np.isfinite(data)
    if bad.any():
        row = int(np.argwhere(bad.any(axis=1))[0, 0])
        name = properties[int(np.argwhere(bad[row])[0, 0])]
        raise ValueError(f"{path}:{header_end + row + 1}: non-finite value in property \"{name}\"")

    col = {name: data[:, j] for j, name in enumerate(properties)}
    positions = np.column_stack([col["x"], col["y"], col["z"]])
    normals = np.column_stack([col["nx"], col["ny"], col["nz"]]) if has_normals else None
    gt = None
    if "gt" in col:
        gt = col["gt"]
        if not np.all(np.isin(gt, (0.0, 1.0))):
            row = int(np.argwhere(~np.isin(gt, (0.0, 1.0)))[0, 0])
            raise ValueError(f"{path}:{header_end + row + 1}: gt must be 0 or 1")
        gt = gt.astype(np.int8)
    cloud = PointCloud(positions, normals=normals, gt=gt)
    if "label" in col:
        labels = col["label"]
        if labels.min() < 0.0 or labels.max() > 1.0:
            row = int(np.argwhere((labels < 0) | (labels > 1))[0, 0])
            raise ValueError(f"{path}:{header_end + row + 1}: label outside [0, 1]")
        return LabelledCloud(cloud=cloud, labels=labels, ground_truth=gt)
    return cloud


# ---------------------------------------------------------------------------
# Manifest


@dataclass
class SessionEntry:
    session_id: str
    path: str
    role: str  # "reference" | "other"


@dataclass
class SessionManifest:
    sessions: list
    csf: CsfParams
    sor: SorParams
    icp: IcpParams
    labelling: LabellingParams
    tiling: TilingParams
    weighting: WeightParams
    seed: int = 0

    @property
    def reference_index(self) -> int:
        return next(i for i, s in enumerate(self.sessions) if s.role == "reference")


_PARAM_KEYS = {
    "csf": ("cloth_resolution", "rigidness", "iterations", "class_threshold", "time_step"),
    "sor": ("k", "std_multiplier"),
    "icp": ("max_iterations", "max_correspondence_dist", "convergence_eps"),
    "labelling": ("lambda",),
    "tiling": ("submap_size_xy", "stride_fraction", "points_per_submap", "min_points"),
    "weighting": ("alpha", "epsilon", "density_estimator", "bins", "bandwidth"),
}


def _build_params(group: str, cls, raw: dict, **extra):
    unknown = set(raw) - set(_PARAM_KEYS[group])
    if unknown:
        raise ValueError(f"manifest: unknown {group} parameter {sorted(unknown)[0]!r}")
    kwargs = {("lam" if k == "lambda" else k): v for k, v in raw.items()}
    return cls(**kwargs, **extra)


def read_manifest(path) -> SessionManifest:
    """Load and validate a JSON session manifest.

    Cloud paths are resolved relative to the manifest's directory and must
    exist; exactly one session must carry the reference role.
    """
    with open(path) as f:
        doc = json.load(f)
    base = os.path.dirname(os.path.abspath(path))

    raw_sessions = doc.get("sessions")
    if not raw_sessions:
        raise ValueError("manifest: no sessions listed")
    sessions = []
    for entry in raw_sessions:
        role = entry.get("role", "other")
        if role not in ("reference", "other"):
            raise ValueError(f"manifest: invalid role {role!r}")
        cloud_path = os.path.join(base, entry["path"])
        if not os.path.exists(cloud_path):
            raise ValueError(f"manifest: cloud path not resolvable: {entry['path']}")
        sessions.append(SessionEntry(str(entry.get("id", len(sessions))), cloud_path, role))
    n_ref = sum(1 for s in sessions if s.role == "reference")
    if n_ref != 1:
        raise ValueError(f"manifest: exactly one reference session required, found {n_ref}")

    params = doc.get("params", {})
    unknown = set(params) - set(_PARAM_KEYS)
    if unknown:
        raise ValueError(f"manifest: unknown parameter group {sorted(unknown)[0]!r}")
    seed = int(doc.get("seed", 0))
    ref_index = next(i for i, s in enumerate(sessions) if s.role == "reference")
    return SessionManifest(
        sessions=sessions,
        csf=_build_params("csf", CsfParams, params.get("csf", {})),
        sor=_build_params("sor", SorParams, params.get("sor", {})),
        icp=_build_params("icp", IcpParams, params.get("icp", {})),
        labelling=_build_params(
            "labelling", LabellingParams, params.get("labelling", {}), reference_index=ref_index
        ),
        tiling=_build_params("tiling", TilingParams, params.get("tiling", {}), seed=seed),
        weighting=_build_params("weighting", WeightParams, params.get("weighting", {})),
        seed=seed,
    )


def write_manifest(path, session_files, reference: int = 0, seed: int = 0, params: dict | None = None) -> None:
    """Write a manifest for the given cloud files (paths stored relative)."""
    base = os.path.dirname(os.path.abspath(path))
    doc = {
        "seed": seed,
        "sessions": [
            {
                "id": f"session_{i}",
                "path": os.path.relpath(os.path.abspath(p), base),
                "role": "reference" if i == reference else "other",
            }
            for i, p in enumerate(session_files)
        ],
        "params": params or {},
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------------------
# Batch file (tiled submaps -> trainer)

_BATCH_MAGIC = "stablemap-batch 1"
_FEATURE_LAYOUT = "x y z nx ny nz label"


@dataclass
class BatchFile:
    submaps: list
    map_size: int
    lam: float
    alpha: float
    tiling: TilingParams
    seed: int = 0


def write_batch(path, submaps, map_size: int, lam: float, alpha: float, tiling: TilingParams, seed: int = 0) -> None:
    """Serialize tiled submaps with their source-index tables.

    Every submap must carry normals — the trainer's input layout is fixed
    at six channels plus the label column.
    """
    with open(path, "w") as f:
        f.write(_BATCH_MAGIC + "\n")
        f.write("seed %d\n" % seed)
        f.write("lambda %s\n" % _fmt(lam))
        f.write("alpha %s\n" % _fmt(alpha))
        f.write("tile_size %s\n" % _fmt(tiling.submap_size_xy))
        f.write("stride_fraction %s\n" % _fmt(tiling.stride_fraction))
        f.write("points_per_submap %d\n" % tiling.points_per_submap)
        f.write("map_size %d\n" % map_size)
        f.write("features %s\n" % _FEATURE_LAYOUT)
        f.write("submaps %d\n" % len(submaps))
        for i, sm in enumerate(submaps):
            if sm.normals is None:
                raise ValueError(f"submap {i} lacks normals; cannot serialize feature layout")
            f.write(
                "submap %d %s %s %d\n"
                % (i, _fmt(sm.tile_origin[0]), _fmt(sm.tile_origin[1]), len(sm.source_indices))
            )
            block = np.hstack([sm.positions, sm.normals, sm.labels.reshape(-1, 1)])
            f.write(
                "".join(
                    "%d %s\n" % (idx, " ".join(_fmt(v) for v in row))
                    for idx, row in zip(sm.source_indices, block)
                )
            )


def _header_line(lines, i, key, path):
    if i >= len(lines):
        raise ValueError(f"{path}:{i + 1}: truncated header (expected {key})")
    parts = lines[i].split()
    if not parts or parts[0] != key:
        raise ValueError(f"{path}:{i + 1}: expected {key}, got {lines[i]!r}")
    return parts[1:]


def read_batch(path) -> BatchFile:
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != _BATCH_MAGIC:
        raise ValueError(f"{path}:1: not a batch file (bad magic)")
    seed = int(_header_line(lines, 1, "seed", path)[0])
    lam = float(_header_line(lines, 2, "lambda", path)[0])
    alpha = float(_header_line(lines, 3, "alpha", path)[0])
    tile_size = float(_header_line(lines, 4, "tile_size", path)[0])
    stride = float(_header_line(lines, 5, "stride_fraction", path)[0])
    pps = int(_header_line(lines, 6, "points_per_submap", path)[0])
    map_size = int(_header_line(lines, 7, "map_size", path)[0])
    features = " ".join(_header_line(lines, 8, "features", path))
    if features != _FEATURE_LAYOUT:
        raise ValueError(f"{path}:9: unsupported feature layout {features!r}")
    n_submaps = int(_header_line(lines, 9, "submaps", path)[0])

    tiling = TilingParams(
        submap_size_xy=tile_size, stride_fraction=stride, points_per_submap=pps, seed=seed
    )
    submaps = []
    i = 10
    for s in range(n_submaps):
        parts = _header_line(lines, i, "submap", path)
        if len(parts) != 4 or int(parts[0]) != s:
            raise ValueError(f"{path}:{i + 1}: malformed submap header")
        origin = np.array([float(parts[1]), float(parts[2])])
        count = int(parts[3])
        block = lines[i + 1 : i + 1 + count]
        if len(block) < count:
            raise ValueError(f"{path}:{len(lines)}: truncated submap {s}")
        data = np.loadtxt(StringIO("\n".join(block)), ndmin=2)
        if data.shape != (count, 8):
            for off, line in enumerate(block):
                if len(line.split()) != 8:
                    raise ValueError(f"{path}:{i + 2 + off}: expected 8 values per record")
            raise ValueError(f"{path}:{i + 2}: malformed submap body")
        idx = data[:, 0]
        if np.any(idx != np.round(idx)) or idx.min() < 0 or idx.max() >= map_size:
            raise ValueError(f"{path}:{i + 2}: source index outside [0, {map_size})")
        submaps.append(
            Submap(
                positions=np.ascontiguousarray(data[:, 1:4]),
                normals=np.ascontiguousarray(data[:, 4:7]),
                labels=np.ascontiguousarray(data[:, 7]),
                source_indices=idx.astype(np.int64),
                tile_origin=origin,
            )
        )
        i += 1 + count
    if i != len(lines):
        raise ValueError(f"{path}:{i + 1}: trailing content after last submap")
    return BatchFile(submaps=submaps, map_size=map_size, lam=lam, alpha=alpha, tiling=tiling, seed=seed)


# ---------------------------------------------------------------------------
# Predictions file (trainer -> voting layer)

_PRED_MAGIC = "stablemap-predictions 1"


def write_predictions(path, submap_predictions, map_size: int) -> None:
    """submap_predictions: list of (source_indices, predictions) pairs."""
    with open(path, "w") as f:
        f.write(_PRED_MAGIC + "\n")
        f.write("map_size %d\n" % map_size)
        f.write("submaps %d\n" % len(submap_predictions))
        for i, (indices, preds) in enumerate(submap_predictions):
            indices = np.asarray(indices)
            preds = np.asarray(preds, dtype=np.float64)
            if indices.shape != preds.shape:
                raise ValueError(f"submap {i}: index/prediction length mismatch")
            f.write("submap %d %d\n" % (i, len(indices)))
            f.write("".join("%d %s\n" % (ix, _fmt(p)) for ix, p in zip(indices, preds)))


def read_predictions(path):
    """Returns (list of (source_indices, predictions), map_size)."""
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != _PRED_MAGIC:
        raise ValueError(f"{path}:1: not a predictions file (bad magic)")
    map_size = int(_header_line(lines, 1, "map_size", path)[0])
    n_submaps = int(_header_line(lines, 2, "submaps", path)[0])
    out = []
    i = 3
    for s in range(n_submaps):
        parts = _header_line(lines, i, "submap", path)
        if len(parts) != 2 or int(parts[0]) != s:
            raise ValueError(f"{path}:{i + 1}: malformed submap header")
        count = int(parts[1])
        block = lines[i + 1 : i + 1 + count]
        if len(block) < count:
            raise ValueError(f"{path}:{len(lines)}: truncated submap {s}")
        data = np.loadtxt(StringIO("\n".join(block)), ndmin=2)
        if data.shape != (count, 2):
            raise ValueError(f"{path}:{i + 2}: expected 2 values per record")
        idx = data[:, 0]
        if np.any(idx != np.round(idx)) or (count and (idx.min() < 0 or idx.max() >= map_size)):
            raise ValueError(f"{path}:{i + 2}: source index outside [0, {map_size})")
        preds = data[:, 1]
        if count and (preds.min() < 0.0 or preds.max() > 1.0):
            raise ValueError(f"{path}:{i + 2}: prediction outside [0, 1]")
        out.append((idx.astype(np.int64), preds))
        i += 1 + count
    if i != len(lines):
        raise ValueError(f"{path}:{i + 1}: trailing content after last submap")
    return out, map_size


# ---------------------------------------------------------------------------
# Evaluation report


def format_report(report) -> str:
    """Aligned plain-text rendering of an evaluation report."""
    rows = []
    for key, value in report.to_dict().items():
        if value is None:
            continue
        if isinstance(value, float):
            rows.append((key, "%.6f" % value))
        else:
            rows.append((key, str(value)))
    width = max(len(k) for k, _ in rows)
    return "\n".join("%-*s  %s" % (width, k, v) for k, v in rows) + "\n"


def write_report(report, json_path, text_path=None) -> None:
    with open(json_path, "w") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    if text_path is not None:
        with open(text_path, "w") as f:
            f.write(format_report(report))
