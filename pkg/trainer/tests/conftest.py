"""Shared fixtures: a small but fully real training batch.

The scene below runs through the actual mapping stack (ground removal,
outlier filtering, registration, labelling, tiling), so every trainer test
that wants realistic data reads the same files a production run would
produce. Building it takes a few seconds; it is session-scoped.
"""

from dataclasses import dataclass

import numpy as np
import pytest

import stablemap as sm
import stabnet as sn


@dataclass
class SceneBatch:
    batch_path: str
    batch: sn.TrainingBatch
    labelled: sm.LabelledCloud
    spec: sm.SceneSpec


def _build(tmp_dir) -> SceneBatch:
    spec = sm.SceneSpec(
        seed=3,
        extent=(20.0, 12.0),
        sessions=3,
        n_poles=2,
        n_trees=1,
        n_walls=1,
        n_dynamic=2,
        ghost_trails=0,
        min_separation=3.0,
        ground_density=8.0,
        surface_density=30.0,
    )
    bundle = sm.generate_scene(spec)
    filtered = []
    for cloud in bundle.clouds:
        offground, _ = sm.remove_ground_csf(cloud)
        filtered.append(sm.remove_outliers_sor(offground))
    registered = [sm.estimate_normals(filtered[0])]
    for cloud in filtered[1:]:
        result = sm.icp_align_refined(cloud, filtered[0])
        registered.append(sm.apply_transform(result.transform, cloud))
    labelled = sm.label_map(registered, sm.LabellingParams(lam=0.5, reference_index=0))
    tiling = sm.TilingParams(seed=0)
    submaps = sm.tile_submaps(labelled, tiling)
    path = str(tmp_dir / "batch.txt")
    sm.write_batch(
        path, submaps, map_size=len(labelled.cloud), lam=0.5, alpha=1.0, tiling=tiling, seed=0
    )
    return SceneBatch(
        batch_path=path, batch=sn.read_training_batch(path), labelled=labelled, spec=spec
    )


@pytest.fixture(scope="session")
def scene_batch(tmp_path_factory) -> SceneBatch:
    return _build(tmp_path_factory.mktemp("scene"))


def make_toy_config(**overrides) -> sn.ModelConfig:
    """Five-stage config small enough for sub-second forward passes."""
    base = dict(
        points_per_level=(48, 32, 16, 8, 4),
        radii=(0.3, 0.6, 1.0, 1.5, 2.5),
        neighbors_per_ball=8,
        sa_channels=((8, 8), (8, 16), (16, 16), (16, 32), (32, 32)),
        fp_channels=((16, 16), (16, 16), (16, 8), (8, 8), (8, 8)),
        head_channels=(8,),
        dropout=0.0,
    )
    base.update(overrides)
    return sn.ModelConfig(**base)


def make_toy_batch(n_submaps=2, n_points=96, seed=0, labels=None, alpha=1.0) -> sn.TrainingBatch:
    """In-memory batch of random tiles; ``labels`` may be a fill value."""
    rng = np.random.default_rng(seed)
    batch = sn.TrainingBatch(map_size=n_submaps * n_points, alpha=alpha,
                             points_per_submap=n_points)
    for s in range(n_submaps):
        positions = np.column_stack(
            [
                rng.uniform(-5.0, 5.0, n_points),
                rng.uniform(-5.0, 5.0, n_points),
                rng.uniform(0.0, 4.0, n_points),
            ]
        )
        normals = rng.normal(size=(n_points, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        if labels is None:
            y = rng.uniform(0.0, 1.0, n_points)
        else:
            y = np.full(n_points, float(labels))
        batch.submaps.append(
            sn.SubmapSample(
                features=np.hstack([positions, normals]),
                labels=y,
                source_indices=np.arange(s * n_points, (s + 1) * n_points),
            )
        )
    return batch


@pytest.fixture
def toy_config() -> sn.ModelConfig:
    return make_toy_config()


@pytest.fixture
def toy_config_factory():
    return make_toy_config


@pytest.fixture
def toy_batch() -> sn.TrainingBatch:
    return make_toy_batch()


@pytest.fixture
def toy_batch_factory():
    return make_toy_batch
