"""Readers and writers for the text formats the trainer exchanges with the
mapping pipeline.

Two formats cross the boundary:

* batch files (``stablemap-batch 1``) carry tiled, recentred submaps with a
  fixed ``x y z nx ny nz label`` feature layout plus the indices of each
  point in the source map;
* prediction files (``stablemap-predictions 1``) carry per-submap
  ``source_index prediction`` pairs back to the aggregation side.

The trainer deliberately owns its parsing: the file format is the interface,
and nothing here imports from the mapping package.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BATCH_MAGIC = "stablemap-batch 1"
PREDICTIONS_MAGIC = "stablemap-predictions 1"
FEATURE_LAYOUT = "x y z nx ny nz label"

_FLOAT = "%.17g"


@dataclass
class SubmapSample:
    """One training sample: a recentred tile of fixed point count.

    ``features`` is ``(n, 6)`` float64 — positions then normals, matching the
    declared feature layout. ``labels`` is ``(n,)`` in ``[0, 1]`` and
    ``source_indices`` maps each row back into the original map.
    """

    features: np.ndarray
    labels: np.ndarray
    source_indices: np.ndarray
    tile_origin: tuple = (0.0, 0.0)

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass
class TrainingBatch:
    """Parsed batch file: header metadata plus the submap samples."""

    submaps: list = field(default_factory=list)
    map_size: int = 0
    lam: float = 0.5
    alpha: float = 0.0
    tile_size: float = 10.0
    stride_fraction: float = 0.5
    points_per_submap: int = 4096
    seed: int = 0

    def __len__(self) -> int:
        return len(self.submaps)


class _Cursor:
    """Line cursor with one-based positions for error messages."""

    def __init__(self, path):
        self.path = str(path)
        with open(path) as f:
            self.lines = f.read().splitlines()
        self.pos = 0

    def next(self):
        if self.pos >= len(self.lines):
            raise ValueError(f"{self.path}:{self.pos + 1}: unexpected end of file")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def keyed(self, key):
        """Consume a ``key value...`` line and return the value tokens."""
        line = self.next()
        parts = line.split()
        if not parts or parts[0] != key:
            raise ValueError(f"{self.path}:{self.pos}: expected '{key}' header, got {line!r}")
        return parts[1:]

    def block(self, count):
        """Consume ``count`` raw lines."""
        if self.pos + count > len(self.lines):
            raise ValueError(f"{self.path}:{len(self.lines)}: truncated record block")
        out = self.lines[self.pos : self.pos + count]
        self.pos += count
        return out

    def done(self):
        if self.pos != len(self.lines):
            raise ValueError(f"{self.path}:{self.pos + 1}: trailing content after last submap")


def read_training_batch(path) -> TrainingBatch:
    """Parse a batch file into submap samples, validating layout and indices."""
    cur = _Cursor(path)
    if cur.next() != BATCH_MAGIC:
        raise ValueError(f"{cur.path}:1: not a batch file (bad magic)")
    seed = int(cur.keyed("seed")[0])
    lam = float(cur.keyed("lambda")[0])
    alpha = float(cur.keyed("alpha")[0])
    tile_size = float(cur.keyed("tile_size")[0])
    stride = float(cur.keyed("stride_fraction")[0])
    pps = int(cur.keyed("points_per_submap")[0])
    map_size = int(cur.keyed("map_size")[0])
    layout = " ".join(cur.keyed("features"))
    if layout != FEATURE_LAYOUT:
        raise ValueError(f"{cur.path}:{cur.pos}: unsupported feature layout {layout!r}")
    n_submaps = int(cur.keyed("submaps")[0])

    batch = TrainingBatch(
        map_size=map_size,
        lam=lam,
        alpha=alpha,
        tile_size=tile_size,
        stride_fraction=stride,
        points_per_submap=pps,
        seed=seed,
    )
    for s in range(n_submaps):
        head = cur.keyed("submap")
        if len(head) != 4 or int(head[0]) != s:
            raise ValueError(f"{cur.path}:{cur.pos}: malformed header for submap {s}")
        origin = (float(head[1]), float(head[2]))
        count = int(head[3])
        start = cur.pos
        rows = np.empty((count, 8), dtype=np.float64)
        for r, line in enumerate(cur.block(count)):
            parts = line.split()
            if len(parts) != 8:
                raise ValueError(f"{cur.path}:{start + r + 1}: expected 8 values per record")
            rows[r] = [float(p) for p in parts]
        idx = rows[:, 0]
        if count and (np.any(idx != np.round(idx)) or idx.min() < 0 or idx.max() >= map_size):
            raise ValueError(f"{cur.path}:{start + 1}: source index outside [0, {map_size})")
        labels = rows[:, 7]
        if count and (labels.min() < 0.0 or labels.max() > 1.0):
            raise ValueError(f"{cur.path}:{start + 1}: label outside [0, 1]")
        batch.submaps.append(
            SubmapSample(
                features=np.ascontiguousarray(rows[:, 1:7]),
                labels=np.ascontiguousarray(labels),
                source_indices=idx.astype(np.int64),
                tile_origin=origin,
            )
        )
    cur.done()
    return batch


def write_predictions(path, submap_predictions, map_size: int) -> None:
    """Write per-submap (source_indices, predictions) pairs.

    Predictions must already be in ``[0, 1]``; floats are rendered with
    enough digits to round-trip exactly.
    """
    lines = [PREDICTIONS_MAGIC, "map_size %d" % map_size, "submaps %d" % len(submap_predictions)]
    for i, (indices, preds) in enumerate(submap_predictions):
        indices = np.asarray(indices)
        preds = np.asarray(preds, dtype=np.float64)
        if indices.shape != preds.shape:
            raise ValueError(f"submap {i}: index/prediction length mismatch")
        if len(preds) and (preds.min() < 0.0 or preds.max() > 1.0):
            raise ValueError(f"submap {i}: prediction outside [0, 1]")
        lines.append("submap %d %d" % (i, len(indices)))
        lines.extend("%d %s" % (ix, _FLOAT % p) for ix, p in zip(indices, preds))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_predictions(path):
    """Parse a predictions file; returns (list of (indices, predictions), map_size)."""
    cur = _Cursor(path)
    if cur.next() != PREDICTIONS_MAGIC:
        raise ValueError(f"{cur.path}:1: not a predictions file (bad magic)")
    map_size = int(cur.keyed("map_size")[0])
    n_submaps = int(cur.keyed("submaps")[0])
    out = []
    for s in range(n_submaps):
        head = cur.keyed("submap")
        if len(head) != 2 or int(head[0]) != s:
            raise ValueError(f"{cur.path}:{cur.pos}: malformed header for submap {s}")
        count = int(head[1])
        start = cur.pos
        idx = np.empty(count, dtype=np.int64)
        preds = np.empty(count, dtype=np.float64)
        for r, line in enumerate(cur.block(count)):
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{cur.path}:{start + r + 1}: expected 2 values per record")
            idx[r] = int(parts[0])
            preds[r] = float(parts[1])
        if count and (idx.min() < 0 or idx.max() >= map_size):
            raise ValueError(f"{cur.path}:{start + 1}: source index outside [0, {map_size})")
        if count and (preds.min() < 0.0 or preds.max() > 1.0):
            raise ValueError(f"{cur.path}:{start + 1}: prediction outside [0, 1]")
        out.append((idx, preds))
    cur.done()
    return out, map_size
