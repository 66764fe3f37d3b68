import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stablemap import (
    LabelledCloud,
    PointCloud,
    Submap,
    SubmapTiler,
    TilingParams,
    VoteAccumulator,
    accumulate_votes,
    resolve_votes,
    tile_grid_origins,
    tile_submaps,
)


def make_labelled(rng, n=5000, extent=(40.0, 30.0)):
    pts = np.column_stack(
        [
            rng.uniform(0, extent[0], n),
            rng.uniform(0, extent[1], n),
            rng.uniform(0, 3, n),
        ]
    )
    return LabelledCloud(cloud=PointCloud(pts), labels=rng.uniform(0, 1, n))


class TestGridOrigins:
    def test_counts_by_arithmetic(self):
        # extent 40x30, size 10, stride 5 -> ceil(30/5)+1 = 7 by ceil(20/5)+1 = 5
        origins = tile_grid_origins((0.0, 0.0), (40.0, 30.0), 10.0, 0.5)
        assert len(origins) == 7 * 5
        xs = sorted({o[0] for o in origins})
        ys = sorted({o[1] for o in origins})
        assert xs == [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]
        assert ys == [0.0, 5.0, 10.0, 15.0, 20.0]

    def test_small_extent_single_tile(self):
        assert tile_grid_origins((0.0, 0.0), (4.0, 3.0), 10.0, 0.5) == [(0.0, 0.0)]

    def test_exact_multiple_no_phantom_tile(self):
        # extent exactly size: one origin, not two
        origins = tile_grid_origins((0.0, 0.0), (10.0, 10.0), 10.0, 0.5)
        assert origins == [(0.0, 0.0)]

    @settings(max_examples=60, deadline=None)
    @given(
        w=st.floats(0.5, 200, allow_nan=False),
        h=st.floats(0.5, 200, allow_nan=False),
        stride=st.floats(0.1, 1.0, allow_nan=False),
    )
    def test_property_footprints_cover_box(self, w, h, stride):
        size = 10.0
        origins = tile_grid_origins((0.0, 0.0), (w, h), size, stride)
        xs = np.array([o[0] for o in origins])
        ys = np.array([o[1] for o in origins])
        # every box corner and the far edge midpoints fall inside some tile
        for qx, qy in [(0, 0), (w, 0), (0, h), (w, h), (w / 2, h), (w, h / 2)]:
            hit = (xs <= qx) & (qx <= xs + size) & (ys <= qy) & (qy <= ys + size)
            assert hit.any()


class TestTileSubmaps:
    def test_exact_submap_size(self):
        rng = np.random.default_rng(0)
        labelled = make_labelled(rng)
        submaps = tile_submaps(labelled, TilingParams(points_per_submap=512))
        assert len(submaps) > 0
        assert all(len(s) == 512 for s in submaps)

    def test_coverage_of_dense_map(self):
        rng = np.random.default_rng(1)
        labelled = make_labelled(rng, n=20000)
        submaps = tile_submaps(labelled, TilingParams(points_per_submap=4096))
        seen = np.zeros(len(labelled), dtype=bool)
        for s in submaps:
            seen[s.source_indices] = True
        assert seen.mean() >= 0.99

    def test_recentering_bounds(self):
        rng = np.random.default_rng(2)
        labelled = make_labelled(rng)
        for s in tile_submaps(labelled, TilingParams(points_per_submap=256)):
            # x,y recentered to the tile center: coordinates within ±size/2
            assert np.abs(s.positions[:, :2]).max() <= 5.0 + 1e-12
            # z untouched
            src_z = labelled.cloud.positions[s.source_indices, 2]
            assert np.array_equal(s.positions[:, 2], src_z)

    def test_source_indices_consistent(self):
        rng = np.random.default_rng(3)
        labelled = make_labelled(rng)
        for s in tile_submaps(labelled, TilingParams(points_per_submap=128)):
            src = labelled.cloud.positions[s.source_indices]
            center = np.array([*(s.tile_origin + 5.0), 0.0])
            assert np.allclose(s.positions, src - center)
            assert np.array_equal(s.labels, labelled.labels[s.source_indices])

    def test_sparse_tile_sampled_with_replacement(self):
        rng = np.random.default_rng(4)
        pts = np.column_stack([rng.uniform(0, 8, 100), rng.uniform(0, 8, 100), np.zeros(100)])
        labelled = LabelledCloud(cloud=PointCloud(pts), labels=np.zeros(100))
        submaps = tile_submaps(labelled, TilingParams(points_per_submap=256, min_points=64))
        assert len(submaps) == 1
        s = submaps[0]
        assert len(s) == 256
        assert len(np.unique(s.source_indices)) <= 100

    def test_min_points_skips_sparse_tiles(self):
        rng = np.random.default_rng(5)
        # two clusters 100 m apart; the empty space between them produces
        # candidate tiles with zero points, which must be skipped silently
        a = np.column_stack([rng.uniform(0, 5, 500), rng.uniform(0, 5, 500), np.zeros(500)])
        b = a + [100.0, 0.0, 0.0]
        labelled = LabelledCloud(
            cloud=PointCloud(np.vstack([a, b])), labels=np.zeros(1000)
        )
        submaps = tile_submaps(labelled, TilingParams(points_per_submap=64, min_points=64))
        for s in submaps:
            ox = s.tile_origin[0]
            assert ox <= 5.0 or ox >= 90.0

    def test_reproducible_with_seed(self):
        rng = np.random.default_rng(6)
        labelled = make_labelled(rng)
        a = tile_submaps(labelled, TilingParams(points_per_submap=512, seed=9))
        b = tile_submaps(labelled, TilingParams(points_per_submap=512, seed=9))
        assert len(a) == len(b)
        for sa, sb in zip(a, b):
            assert np.array_equal(sa.source_indices, sb.source_indices)
            assert np.array_equal(sa.positions, sb.positions)

    def test_normals_carried(self):
        rng = np.random.default_rng(7)
        pts = np.column_stack([rng.uniform(0, 5, 200), rng.uniform(0, 5, 200), np.zeros(200)])
        n = np.tile([0.0, 0.0, 1.0], (200, 1))
        labelled = LabelledCloud(cloud=PointCloud(pts, normals=n), labels=np.zeros(200))
        s = tile_submaps(labelled, TilingParams(points_per_submap=64))[0]
        assert np.array_equal(s.normals, n[s.source_indices])

    def test_empty_map_rejected(self):
        labelled = LabelledCloud(cloud=PointCloud(np.zeros((0, 3))), labels=np.zeros(0))
        with pytest.raises(ValueError, match="empty map"):
            tile_submaps(labelled)

    def test_param_validation(self):
        with pytest.raises(ValueError):
            TilingParams(stride_fraction=0.0)
        with pytest.raises(ValueError):
            TilingParams(stride_fraction=1.5)
        with pytest.raises(ValueError):
            TilingParams(points_per_submap=0)


class TestVotes:
    def test_single_vote_identity(self):
        acc = VoteAccumulator.empty(5)
        accumulate_votes(acc, np.array([0, 2, 4]), np.array([0.1, 0.5, 0.9]))
        scores, covered = resolve_votes(acc)
        assert np.array_equal(covered, [True, False, True, False, True])
        assert scores[0] == pytest.approx(0.1)
        assert scores[2] == pytest.approx(0.5)
        assert scores[4] == pytest.approx(0.9)
        assert np.isnan(scores[1]) and np.isnan(scores[3])

    def test_overlapping_votes_average(self):
        acc = VoteAccumulator.empty(3)
        accumulate_votes(acc, np.array([0, 1]), np.array([0.2, 0.4]))
        accumulate_votes(acc, np.array([1, 2]), np.array([0.8, 1.0]))
        scores, _ = resolve_votes(acc)
        assert scores[1] == pytest.approx(0.6)

    def test_duplicates_collapse_to_one_vote(self):
        # the same source point sampled twice in one submap must not get
        # double weight against another submap's single vote
        acc = VoteAccumulator.empty(1)
        accumulate_votes(acc, np.array([0, 0]), np.array([0.0, 1.0]))
        accumulate_votes(acc, np.array([0]), np.array([0.2]))
        scores, _ = resolve_votes(acc)
        assert scores[0] == pytest.approx((0.5 + 0.2) / 2.0)

    def test_mean_oracle_random(self):
        rng = np.random.default_rng(8)
        map_size = 40
        acc = VoteAccumulator.empty(map_size)
        votes = {}  # oracle: per-point list of per-submap vote values
        for _ in range(30):
            n = rng.integers(1, 20)
            idx = rng.integers(0, map_size, n)
            pred = rng.uniform(0, 1, n)
            accumulate_votes(acc, idx, pred)
            for i in np.unique(idx):
                votes.setdefault(int(i), []).append(pred[idx == i].mean())
        scores, covered = resolve_votes(acc)
        for i in range(map_size):
            if i in votes:
                assert covered[i]
                assert scores[i] == pytest.approx(np.mean(votes[i]), abs=1e-12)
            else:
                assert not covered[i]

    def test_length_mismatch_rejected(self):
        acc = VoteAccumulator.empty(3)
        with pytest.raises(ValueError, match="predictions length"):
            accumulate_votes(acc, np.array([0, 1]), np.array([0.5]))

    def test_merge(self):
        a = VoteAccumulator.empty(2)
        b = VoteAccumulator.empty(2)
        accumulate_votes(a, np.array([0]), np.array([0.4]))
        accumulate_votes(b, np.array([0]), np.array([0.8]))
        scores, _ = resolve_votes(a.merge(b))
        assert scores[0] == pytest.approx(0.6)

    def test_submap_object_accepted(self):
        rng = np.random.default_rng(9)
        labelled = make_labelled(rng, n=2000)
        submaps = tile_submaps(labelled, TilingParams(points_per_submap=256))
        acc = VoteAccumulator.empty(len(labelled))
        for s in submaps:
            accumulate_votes(acc, s, s.labels)
        scores, covered = resolve_votes(acc)
        # feeding back the true labels must reconstruct them exactly where covered
        assert np.allclose(scores[covered], labelled.labels[covered], atol=1e-12)


class TestRoundTripIdentity:
    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_property_label_passthrough(self, seed):
        # tiling then voting with the stored labels is the identity on
        # every covered point, for any seed
        rng = np.random.default_rng(seed)
        labelled = make_labelled(rng, n=800, extent=(15.0, 12.0))
        submaps = tile_submaps(labelled, TilingParams(points_per_submap=128, min_points=16))
        acc = VoteAccumulator.empty(len(labelled))
        for s in submaps:
            accumulate_votes(acc, s, s.labels)
        scores, covered = resolve_votes(acc)
        assert np.allclose(scores[covered], labelled.labels[covered], atol=1e-12)


class TestSubmapTiler:
    def test_seven_column_features(self):
        rng = np.random.default_rng(10)
        n = 600
        X = np.column_stack(
            [
                rng.uniform(0, 12, n),
                rng.uniform(0, 12, n),
                rng.uniform(0, 2, n),
                np.tile([0.0, 0.0, 1.0], (n, 1)),
                rng.uniform(0, 1, n),
            ]
        )
        submaps = SubmapTiler(points_per_submap=128).fit(X).transform(X)
        assert all(isinstance(s, Submap) for s in submaps)
        assert all(s.normals is not None for s in submaps)

    def test_bad_column_count(self):
        with pytest.raises(ValueError, match="expected columns"):
            SubmapTiler().transform(np.zeros((10, 5)))
