"""Batch inference: load a checkpoint, predict every submap, emit predictions.

Points are sorted into a canonical lexicographic order (by position, then
normal, then source index) before they enter the network. Sampling inside
the model depends on row order, so canonicalizing the order first makes the
predictions a pure function of the point *set* — permuting a submap's rows
changes nothing.
"""

from __future__ import annotations

import numpy as np
import torch

from .formats import TrainingBatch, read_training_batch, write_predictions
from .train import load_checkpoint

__all__ = ["canonical_order", "predict_submaps", "run_inference"]


def canonical_order(features: np.ndarray, source_indices: np.ndarray) -> np.ndarray:
    """Row order sorting by x, y, z, nx, ny, nz, then source index."""
    f = features
    return np.lexsort((source_indices, f[:, 5], f[:, 4], f[:, 3], f[:, 2], f[:, 1], f[:, 0]))


def predict_submaps(model, batch: TrainingBatch, batch_size: int = 16, device: str = "cpu"):
    """Per-submap (source_indices, predictions) pairs, in submap order.

    Submaps of equal point count are stacked and run together; rows within
    each submap are canonically sorted first (see module docstring).
    """
    if not batch.submaps:
        raise ValueError("batch has no submaps")
    if model.config.in_channels != batch.submaps[0].features.shape[1]:
        raise ValueError(
            f"checkpoint expects {model.config.in_channels} input channels, "
            f"batch provides {batch.submaps[0].features.shape[1]}"
        )
    dev = torch.device(device)
    model = model.to(dev)
    model.eval()
    orders = [canonical_order(sm.features, sm.source_indices) for sm in batch.submaps]

    by_count: dict[int, list[int]] = {}
    for i, sm in enumerate(batch.submaps):
        by_count.setdefault(len(sm), []).append(i)

    results: list = [None] * len(batch.submaps)
    with torch.no_grad():
        for _count, ids in sorted(by_count.items()):
            for start in range(0, len(ids), batch_size):
                chunk = ids[start : start + batch_size]
                stacked = np.stack([batch.submaps[i].features[orders[i]] for i in chunk])
                pred = model(torch.tensor(stacked, dtype=torch.float32, device=dev))
                pred = pred.cpu().numpy().astype(np.float64)
                for row, i in enumerate(chunk):
                    results[i] = (batch.submaps[i].source_indices[orders[i]], pred[row])
    return results


def run_inference(checkpoint_path, batch_path, out_path, batch_size: int = 16,
                  device: str = "cpu") -> int:
    """File-to-file inference; returns the number of submaps predicted."""
    model, _ = load_checkpoint(checkpoint_path)
    batch = read_training_batch(batch_path)
    if not batch.submaps:
        raise ValueError(f"{batch_path}: batch file has no submaps")
    results = predict_submaps(model, batch, batch_size=batch_size, device=device)
    write_predictions(out_path, results, batch.map_size)
    return len(results)
