"""Training loop: SGD with momentum over submap batches.

The unit of batching is a whole submap — every point in a tile goes through
the network together, and the loss is the density-weighted RMSE over all
points in the mini-batch. Weights are fitted once on the training split's
label population and stay fixed; validation points are weighted by the same
fitted model so the two losses are comparable.

Runs are reproducible: the seed drives the split, the epoch shuffling and
dropout, and all computation is single-process CPU by default.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .formats import TrainingBatch
from .model import ModelConfig, PointStabilityNet
from .weighting import WeightModel, weighted_rmse_loss

__all__ = [
    "TrainConfig",
    "EpochStats",
    "TrainResult",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_MAGIC",
]

CHECKPOINT_MAGIC = "stabnet-checkpoint 1"


@dataclass
class TrainConfig:
    """Optimization hyperparameters.

    ``alpha`` controls the density weighting and must match the batch file
    header; leaving it ``None`` adopts the header value. The batch size
    counts submaps, not points.
    """

    learning_rate: float = 0.001
    momentum: float = 0.9
    epochs: int = 60
    batch_size: int = 16
    val_fraction: float = 0.1
    alpha: float | None = None
    seed: int = 0
    weight_epsilon: float = 1e-6
    weight_bins: int = 100
    device: str = "cpu"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in [0, 1)")
        if self.alpha is not None and self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.weight_epsilon <= 0:
            raise ValueError("weight_epsilon must be positive")
        if self.weight_bins < 1:
            raise ValueError("weight_bins must be at least 1")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float | None = None


@dataclass
class TrainResult:
    model: PointStabilityNet
    history: list = field(default_factory=list)
    alpha: float = 0.0
    train_indices: tuple = ()
    val_indices: tuple = ()


def _stack(batch: TrainingBatch, device):
    counts = {len(sm) for sm in batch.submaps}
    if len(counts) != 1:
        raise ValueError("submaps must share a point count for batched training")
    feats = torch.tensor(
        np.stack([sm.features for sm in batch.submaps]), dtype=torch.float32, device=device
    )
    labels = torch.tensor(
        np.stack([sm.labels for sm in batch.submaps]), dtype=torch.float64, device=device
    )
    return feats, labels


def _split(n: int, val_fraction: float):
    n_val = min(n - 1, int(round(val_fraction * n)))
    perm = torch.randperm(n)
    val = sorted(perm[:n_val].tolist())
    training = sorted(perm[n_val:].tolist())
    return training, val


def _loss_over(model, feats, labels, weights, indices, batch_size):
    """Eval-mode weighted RMSE over a set of submaps, without gradients."""
    total = 0.0
    count = 0
    was_training = model.training
    model.eval()
    with torch.no_grad():
        for start in range(0, len(indices), batch_size):
            sel = indices[start : start + batch_size]
            pred = model(feats[sel]).double()
            err = weights[sel] * (pred - labels[sel]) ** 2
            total += float(err.sum())
            count += err.numel()
    if was_training:
        model.train()
    return math.sqrt(total / count)


def train(batch: TrainingBatch, model_config: ModelConfig | None = None,
          config: TrainConfig | None = None, log=None) -> TrainResult:
    """Fit a network to a training batch; returns the model plus loss history.

    Raises if the config's alpha disagrees with the batch header — the
    weighting baked into the labels' file is part of the training contract.
    """
    model_config = model_config or ModelConfig()
    config = config or TrainConfig()
    if not batch.submaps:
        raise ValueError("training batch has no submaps")
    if config.alpha is None:
        alpha = batch.alpha
    elif config.alpha != batch.alpha:
        raise ValueError(
            f"alpha mismatch: config has {config.alpha}, batch header has {batch.alpha}"
        )
    else:
        alpha = config.alpha

    n_points = len(batch.submaps[0])
    if n_points < model_config.points_per_level[0]:
        raise ValueError(
            f"submaps have {n_points} points but the first abstraction stage "
            f"samples {model_config.points_per_level[0]} centers"
        )

    torch.manual_seed(config.seed)
    device = torch.device(config.device)
    feats, labels = _stack(batch, device)
    train_idx, val_idx = _split(len(batch.submaps), config.val_fraction)

    weighting = WeightModel(alpha, epsilon=config.weight_epsilon, bins=config.weight_bins)
    weighting.fit(np.concatenate([batch.submaps[i].labels for i in train_idx]))
    weights = torch.tensor(
        np.stack([weighting.weights(sm.labels) for sm in batch.submaps]),
        dtype=torch.float64,
        device=device,
    )

    model = PointStabilityNet(model_config).to(device)
    optimizer = torch.optim.SGD(
        model.parameters(), lr=config.learning_rate, momentum=config.momentum
    )

    history = []
    model.train()
    for epoch in range(1, config.epochs + 1):
        order = [train_idx[i] for i in torch.randperm(len(train_idx)).tolist()]
        total = 0.0
        count = 0
        for start in range(0, len(order), config.batch_size):
            sel = order[start : start + config.batch_size]
            optimizer.zero_grad()
            pred = model(feats[sel])
            loss = weighted_rmse_loss(pred, labels[sel], weights[sel])
            loss.backward()
            optimizer.step()
            with torch.no_grad():
                err = weights[sel] * (pred.double() - labels[sel]) ** 2
                total += float(err.sum())
                count += err.numel()
        train_loss = math.sqrt(total / count)
        val_loss = None
        if val_idx:
            val_loss = _loss_over(model, feats, labels, weights, val_idx, config.batch_size)
        history.append(EpochStats(epoch=epoch, train_loss=train_loss, val_loss=val_loss))
        if log is not None:
            line = f"epoch {epoch}/{config.epochs}  train {train_loss:.6f}"
            if val_loss is not None:
                line += f"  val {val_loss:.6f}"
            log(line)
    model.eval()
    return TrainResult(
        model=model,
        history=history,
        alpha=alpha,
        train_indices=tuple(train_idx),
        val_indices=tuple(val_idx),
    )


def save_checkpoint(path, model: PointStabilityNet, train_config: TrainConfig | None = None,
                    history=None) -> None:
    """Serialize the model weights together with the configs that built them."""
    payload = {
        "format": CHECKPOINT_MAGIC,
        "model_config": asdict(model.config),
        "train_config": asdict(train_config) if train_config is not None else None,
        "history": [asdict(h) for h in history] if history else [],
        "model_state": model.state_dict(),
    }
    torch.save(payload, path)


def load_checkpoint(path):
    """Rebuild a model from a checkpoint; returns (model in eval mode, payload).

    The payload keeps the stored training config and loss history for
    inspection. Weight tensors must match the stored architecture exactly.
    """
    try:
        payload = torch.load(path, map_location="cpu")
    except OSError:
        raise
    except Exception as exc:
        raise ValueError(f"{path}: not a model checkpoint ({exc})") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint")
    model = PointStabilityNet(ModelConfig(**payload["model_config"]))
    try:
        model.load_state_dict(payload["model_state"])
    except RuntimeError as exc:
        raise ValueError(f"{path}: checkpoint does not match its model configuration: {exc}")
    model.eval()
    return model, payload
