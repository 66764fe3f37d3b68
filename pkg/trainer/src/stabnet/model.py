"""Hierarchical point-set network for per-point stability regression.

The encoder stacks five set-abstraction stages: each samples a shrinking
subset of centers by farthest-point sampling, gathers neighbors inside a
growing radius, and runs a shared MLP over the local groups followed by a
max-pool. The decoder mirrors it with five feature-propagation stages that
interpolate coarse features back onto finer point sets (inverse-distance,
three nearest neighbors) and fuse them with the skip features from the
encoder. A small per-point head ends in a sigmoid, so predictions live in
[0, 1] like the labels.

Sampling is deterministic: farthest-point sampling always starts at row 0
and ball queries keep the lowest-index neighbors, so a given input ordering
always produces the same output. Callers that need order independence sort
their points first (see ``infer``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

__all__ = ["ModelConfig", "PointStabilityNet"]


@dataclass
class ModelConfig:
    """Architecture hyperparameters.

    ``points_per_level`` and ``radii`` define the five abstraction stages
    (always exactly five): center counts must decrease strictly while
    search radii increase strictly, one entry per stage. ``in_channels``
    counts the per-point input features (positions plus normals). The MLP
    widths are one tuple per stage; ``fp_channels`` is listed deepest stage
    first, the order the decoder applies them.
    """

    points_per_level: tuple = (1024, 512, 256, 128, 32)
    radii: tuple = (0.1, 0.2, 0.4, 0.8, 1.4)
    neighbors_per_ball: int = 32
    in_channels: int = 6
    sa_channels: tuple = (
        (32, 32, 64),
        (64, 64, 128),
        (128, 128, 256),
        (256, 256, 512),
        (512, 512, 1024),
    )
    fp_channels: tuple = (
        (512, 512),
        (256, 256),
        (256, 128),
        (128, 128),
        (128, 64),
    )
    head_channels: tuple = (64,)
    dropout: float = 0.5

    def __post_init__(self):
        self.points_per_level = tuple(int(n) for n in self.points_per_level)
        self.radii = tuple(float(r) for r in self.radii)
        self.sa_channels = tuple(tuple(int(c) for c in m) for m in self.sa_channels)
        self.fp_channels = tuple(tuple(int(c) for c in m) for m in self.fp_channels)
        self.head_channels = tuple(int(c) for c in self.head_channels)
        levels = len(self.points_per_level)
        if levels != 5:
            raise ValueError("the architecture has exactly five abstraction stages")
        if len(self.radii) != levels or len(self.sa_channels) != levels or len(self.fp_channels) != levels:
            raise ValueError("points_per_level, radii, sa_channels and fp_channels must have equal length")
        if any(n <= 0 for n in self.points_per_level):
            raise ValueError("center counts must be positive")
        if any(a <= b for a, b in zip(self.points_per_level, self.points_per_level[1:])):
            raise ValueError("center counts must decrease strictly")
        if any(r <= 0 for r in self.radii):
            raise ValueError("radii must be positive")
        if any(a >= b for a, b in zip(self.radii, self.radii[1:])):
            raise ValueError("radii must increase strictly")
        if self.neighbors_per_ball < 1:
            raise ValueError("neighbors_per_ball must be at least 1")
        if self.in_channels < 3:
            raise ValueError("in_channels must include at least the positions")
        if any(len(m) == 0 for m in self.sa_channels + self.fp_channels):
            raise ValueError("every MLP needs at least one layer")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")


def square_distance(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Pairwise squared distances, (B, M, 3) x (B, N, 3) -> (B, M, N)."""
    aa = (a * a).sum(-1, keepdim=True)
    bb = (b * b).sum(-1).unsqueeze(1)
    return (aa + bb - 2.0 * torch.bmm(a, b.transpose(1, 2))).clamp_min_(0.0)


def index_points(points: torch.Tensor, idx: torch.Tensor) -> torch.Tensor:
    """Gather rows of (B, N, C) by an index tensor shaped (B, ...)."""
    batch_shape = [points.shape[0]] + [1] * (idx.dim() - 1)
    batch = torch.arange(points.shape[0], device=points.device).view(batch_shape).expand_as(idx)
    return points[batch, idx]


def farthest_point_sample(xyz: torch.Tensor, n_samples: int) -> torch.Tensor:
    """Greedy farthest-point subset of (B, N, 3), always seeded at row 0.

    Returns (B, n_samples) indices. Ties in the farthest distance resolve
    to the lowest index, so the result depends only on the point ordering.
    """
    B, N, _ = xyz.shape
    if n_samples > N:
        raise ValueError(f"cannot sample {n_samples} centers from {N} points")
    idx = torch.empty(B, n_samples, dtype=torch.long, device=xyz.device)
    closest = torch.full((B, N), torch.inf, dtype=xyz.dtype, device=xyz.device)
    current = torch.zeros(B, dtype=torch.long, device=xyz.device)
    rows = torch.arange(B, device=xyz.device)
    for i in range(n_samples):
        idx[:, i] = current
        delta = xyz - xyz[rows, current].unsqueeze(1)
        closest = torch.minimum(closest, (delta * delta).sum(-1))
        current = closest.argmax(-1)
    return idx


def ball_query(xyz: torch.Tensor, centers: torch.Tensor, radius: float, n_neighbors: int) -> torch.Tensor:
    """Lowest-index neighbors of each center within ``radius``.

    Returns (B, M, n_neighbors) indices into ``xyz``; centers with fewer
    neighbors than requested repeat their first hit. Centers must be drawn
    from ``xyz`` so every row has at least itself in range. Batch elements
    are processed one at a time to keep the (M, N) distance matrix small.
    """
    B, N, _ = xyz.shape
    M = centers.shape[1]
    r2 = radius * radius
    k = min(n_neighbors, N)
    arange = torch.arange(N, device=xyz.device)
    out = torch.empty(B, M, n_neighbors, dtype=torch.long, device=xyz.device)
    for b in range(B):
        sq = square_distance(centers[b : b + 1], xyz[b : b + 1])[0]
        candidates = torch.where(sq <= r2, arange.unsqueeze(0), N)
        nearest = candidates.topk(k, dim=-1, largest=False).values
        if k < n_neighbors:
            nearest = torch.cat([nearest, nearest[:, :1].expand(M, n_neighbors - k)], dim=1)
        first = nearest[:, :1]
        out[b] = torch.where(nearest == N, first, nearest)
    return out


def three_nearest(fine: torch.Tensor, coarse: torch.Tensor):
    """Distances and indices of up to three nearest coarse points per fine point."""
    B, Nc, _ = coarse.shape
    k = min(3, Nc)
    dists = torch.empty(fine.shape[0], fine.shape[1], k, dtype=fine.dtype, device=fine.device)
    idx = torch.empty(fine.shape[0], fine.shape[1], k, dtype=torch.long, device=fine.device)
    for b in range(fine.shape[0]):
        sq = square_distance(fine[b : b + 1], coarse[b : b + 1])[0]
        d, i = sq.topk(k, dim=-1, largest=False)
        dists[b], idx[b] = d, i
    return dists, idx


class SetAbstraction(nn.Module):
    """Sample centers, group neighbors, run a shared MLP, max-pool per group."""

    def __init__(self, n_centers: int, radius: float, n_neighbors: int, in_channels: int, mlp: tuple):
        super().__init__()
        self.n_centers = n_centers
        self.radius = radius
        self.n_neighbors = n_neighbors
        layers = []
        prev = in_channels + 3
        for width in mlp:
            layers += [nn.Conv2d(prev, width, 1), nn.BatchNorm2d(width), nn.ReLU(inplace=True)]
            prev = width
        self.mlp = nn.Sequential(*layers)

    def forward(self, xyz, feats):
        centers = index_points(xyz, farthest_point_sample(xyz, self.n_centers))
        group_idx = ball_query(xyz, centers, self.radius, self.n_neighbors)
        grouped_xyz = index_points(xyz, group_idx) - centers.unsqueeze(2)
        grouped = torch.cat([grouped_xyz, index_points(feats, group_idx)], dim=-1)
        # (B, M, K, C+3) -> (B, C+3, K, M) for the shared MLP
        pooled = self.mlp(grouped.permute(0, 3, 2, 1)).max(dim=2).values
        return centers, pooled.transpose(1, 2)


class FeaturePropagation(nn.Module):
    """Interpolate coarse features onto fine points and fuse with the skip."""

    def __init__(self, in_channels: int, mlp: tuple):
        super().__init__()
        layers = []
        prev = in_channels
        for width in mlp:
            layers += [nn.Conv1d(prev, width, 1), nn.BatchNorm1d(width), nn.ReLU(inplace=True)]
            prev = width
        self.mlp = nn.Sequential(*layers)

    def forward(self, fine_xyz, coarse_xyz, fine_feats, coarse_feats):
        if coarse_xyz.shape[1] == 1:
            interpolated = coarse_feats.expand(-1, fine_xyz.shape[1], -1)
        else:
            d, idx = three_nearest(fine_xyz, coarse_xyz)
            w = 1.0 / (d + 1e-8)
            w = w / w.sum(dim=-1, keepdim=True)
            interpolated = (index_points(coarse_feats, idx) * w.unsqueeze(-1)).sum(dim=2)
        fused = torch.cat([fine_feats, interpolated], dim=-1)
        return self.mlp(fused.transpose(1, 2)).transpose(1, 2)


class PointStabilityNet(nn.Module):
    """Encoder-decoder over point sets with a sigmoid regression head.

    Input is (B, N, in_channels) with positions in the first three columns;
    output is (B, N) in [0, 1].
    """

    def __init__(self, config: ModelConfig | None = None):
        super().__init__()
        self.config = config or ModelConfig()
        cfg = self.config

        self.abstraction = nn.ModuleList()
        channels = [cfg.in_channels]
        for n, r, mlp in zip(cfg.points_per_level, cfg.radii, cfg.sa_channels):
            self.abstraction.append(SetAbstraction(n, r, cfg.neighbors_per_ball, channels[-1], mlp))
            channels.append(mlp[-1])

        self.propagation = nn.ModuleList()
        carried = channels[-1]
        for level, mlp in zip(range(len(channels) - 2, -1, -1), cfg.fp_channels):
            self.propagation.append(FeaturePropagation(carried + channels[level], mlp))
            carried = mlp[-1]

        head = []
        prev = carried
        for width in cfg.head_channels:
            head += [nn.Conv1d(prev, width, 1), nn.BatchNorm1d(width), nn.ReLU(inplace=True)]
            prev = width
        if cfg.dropout > 0:
            head.append(nn.Dropout(cfg.dropout))
        head.append(nn.Conv1d(prev, 1, 1))
        self.head = nn.Sequential(*head)

    def forward(self, points: torch.Tensor) -> torch.Tensor:
        if points.dim() != 3 or points.shape[-1] != self.config.in_channels:
            raise ValueError(f"expected (B, N, {self.config.in_channels}) input, got {tuple(points.shape)}")
        xyz = [points[..., :3].contiguous()]
        feats = [points]
        for sa in self.abstraction:
            new_xyz, new_feats = sa(xyz[-1], feats[-1])
            xyz.append(new_xyz)
            feats.append(new_feats)
        carried = feats[-1]
        for i, fp in enumerate(self.propagation):
            level = len(xyz) - 2 - i
            carried = fp(xyz[level], xyz[level + 1], feats[level], carried)
        logits = self.head(carried.transpose(1, 2)).squeeze(1)
        return torch.sigmoid(logits)
