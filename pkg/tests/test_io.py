import json

import numpy as np
import pytest

from stablemap import (
    LabelledCloud,
    PointCloud,
    TilingParams,
    evaluate_map,
    read_batch,
    read_manifest,
    read_ply,
    read_predictions,
    tile_submaps,
    write_batch,
    write_manifest,
    write_ply,
    write_predictions,
    write_report,
)
from stablemap.io import format_report


def random_cloud(rng, n=50, normals=True, gt=True):
    pos = rng.uniform(-100, 100, size=(n, 3))
    nrm = None
    if normals:
        nrm = rng.normal(size=(n, 3))
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    g = rng.integers(0, 2, n).astype(np.int8) if gt else None
    return PointCloud(pos, normals=nrm, gt=g)


class TestPly:
    def test_positions_bit_exact_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        cloud = random_cloud(rng, normals=False, gt=False)
        p = tmp_path / "c.ply"
        write_ply(cloud, p)
        back = read_ply(p)
        assert np.array_equal(back.positions, cloud.positions)  # %.17g is lossless
        assert back.normals is None and back.gt is None

    def test_full_cloud_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        cloud = random_cloud(rng)
        p = tmp_path / "c.ply"
        write_ply(cloud, p)
        back = read_ply(p)
        assert np.array_equal(back.positions, cloud.positions)
        assert np.array_equal(back.normals, cloud.normals)
        assert np.array_equal(back.gt, cloud.gt)

    def test_labelled_cloud_roundtrip(self, tmp_path):
        rng = np.random.default_rng(2)
        cloud = random_cloud(rng)
        labelled = LabelledCloud(
            cloud=cloud, labels=rng.uniform(size=50), ground_truth=cloud.gt
        )
        p = tmp_path / "l.ply"
        write_ply(labelled, p)
        back = read_ply(p)
        assert isinstance(back, LabelledCloud)
        assert np.array_equal(back.labels, labelled.labels)
        assert np.array_equal(back.ground_truth, labelled.ground_truth)
        assert back.d_max is None

    def test_tiny_and_extreme_values_roundtrip(self, tmp_path):
        pos = np.array(
            [
                [1e-300, -1e300, np.pi],
                [np.nextafter(0.0, 1.0), 1.0 / 3.0, -0.0],
                [2**53 + 1.0, 1e-17, 123456.789012345678],
            ]
        )
        p = tmp_path / "x.ply"
        write_ply(PointCloud(pos), p)
        assert np.array_equal(read_ply(p).positions, pos)

    def test_missing_magic(self, tmp_path):
        p = tmp_path / "bad.ply"
        p.write_text("plo\nend_header\n")
        with pytest.raises(ValueError, match="malformed header"):
            read_ply(p)

    def test_missing_property_z(self, tmp_path):
        p = tmp_path / "bad.ply"
        p.write_text(
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property double x\nproperty double y\nend_header\n0 0\n"
        )
        with pytest.raises(ValueError, match='missing required property "z"'):
            read_ply(p)

    def test_truncated_body(self, tmp_path):
        p = tmp_path / "bad.ply"
        p.write_text(
            "ply\nformat ascii 1.0\nelement vertex 3\n"
            "property double x\nproperty double y\nproperty double z\n"
            "end_header\n0 0 0\n1 1 1\n"
        )
        with pytest.raises(ValueError, match="truncated body"):
            read_ply(p)

    def test_non_finite_value(self, tmp_path):
        p = tmp_path / "bad.ply"
        p.write_text(
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property double x\nproperty double y\nproperty double z\n"
            "end_header\n0 nan 0\n"
        )
        with pytest.raises(ValueError, match="non-finite value"):
            read_ply(p)

    def test_bad_gt_value(self, tmp_path):
        p = tmp_path / "bad.ply"
        p.write_text(
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property double x\nproperty double y\nproperty double z\n"
            "property uchar gt\nend_header\n0 0 0 2\n"
        )
        with pytest.raises(ValueError, match="gt must be 0 or 1"):
            read_ply(p)

    def test_label_out_of_range(self, tmp_path):
        p = tmp_path / "bad.ply"
        p.write_text(
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property double x\nproperty double y\nproperty double z\n"
            "property double label\nend_header\n0 0 0 1.5\n"
        )
        with pytest.raises(ValueError, match=r"label outside \[0, 1\]"):
            read_ply(p)

    def test_errors_carry_line_numbers(self, tmp_path):
        p = tmp_path / "bad.ply"
        p.write_text(
            "ply\nformat ascii 1.0\nelement vertex 2\n"
            "property double x\nproperty double y\nproperty double z\n"
            "end_header\n0 0 0\n0 inf 0\n"
        )
        with pytest.raises(ValueError, match=r"bad\.ply:9"):
            read_ply(p)


class TestManifest:
    def write_session_files(self, tmp_path, n=3):
        rng = np.random.default_rng(3)
        files = []
        for i in range(n):
            f = tmp_path / f"s{i}.ply"
            write_ply(random_cloud(rng, normals=False, gt=False), f)
            files.append(str(f))
        return files

    def test_roundtrip_defaults(self, tmp_path):
        files = self.write_session_files(tmp_path)
        mpath = tmp_path / "manifest.json"
        write_manifest(mpath, files, reference=1, seed=42)
        m = read_manifest(mpath)
        assert len(m.sessions) == 3
        assert m.reference_index == 1
        assert m.seed == 42
        assert m.tiling.seed == 42  # seed feeds the sampler
        assert m.labelling.reference_index == 1

    def test_params_override_and_lambda_key(self, tmp_path):
        files = self.write_session_files(tmp_path)
        mpath = tmp_path / "manifest.json"
        write_manifest(
            mpath,
            files,
            params={
                "labelling": {"lambda": 0.8},
                "tiling": {"points_per_submap": 256},
                "csf": {"class_threshold": 0.3},
            },
        )
        m = read_manifest(mpath)
        assert m.labelling.lam == 0.8
        assert m.tiling.points_per_submap == 256
        assert m.csf.class_threshold == 0.3
        assert m.sor.k == 12  # untouched groups keep defaults

    def test_paths_relative_to_manifest(self, tmp_path):
        files = self.write_session_files(tmp_path)
        sub = tmp_path / "nested"
        sub.mkdir()
        mpath = sub / "manifest.json"
        write_manifest(mpath, files)
        m = read_manifest(mpath)
        import os

        for s in m.sessions:
            assert os.path.exists(s.path)

    def test_exactly_one_reference_enforced(self, tmp_path):
        files = self.write_session_files(tmp_path, n=2)
        mpath = tmp_path / "manifest.json"
        doc = {
            "sessions": [
                {"id": "a", "path": "s0.ply", "role": "other"},
                {"id": "b", "path": "s1.ply", "role": "other"},
            ]
        }
        mpath.write_text(json.dumps(doc))
        with pytest.raises(ValueError, match="exactly one reference"):
            read_manifest(mpath)

    def test_unknown_group_rejected(self, tmp_path):
        files = self.write_session_files(tmp_path, n=2)
        mpath = tmp_path / "manifest.json"
        write_manifest(mpath, files, params={"smoothing": {"x": 1}})
        with pytest.raises(ValueError, match="unknown parameter group 'smoothing'"):
            read_manifest(mpath)

    def test_unknown_key_rejected(self, tmp_path):
        files = self.write_session_files(tmp_path, n=2)
        mpath = tmp_path / "manifest.json"
        write_manifest(mpath, files, params={"sor": {"kk": 5}})
        with pytest.raises(ValueError, match="unknown sor parameter 'kk'"):
            read_manifest(mpath)

    def test_missing_cloud_file(self, tmp_path):
        mpath = tmp_path / "manifest.json"
        doc = {"sessions": [{"id": "a", "path": "ghost.ply", "role": "reference"}]}
        mpath.write_text(json.dumps(doc))
        with pytest.raises(ValueError, match="not resolvable"):
            read_manifest(mpath)

    def test_empty_sessions(self, tmp_path):
        mpath = tmp_path / "manifest.json"
        mpath.write_text(json.dumps({"sessions": []}))
        with pytest.raises(ValueError, match="no sessions"):
            read_manifest(mpath)


def tiled_fixture(rng, n=3000):
    pos = np.column_stack(
        [rng.uniform(0, 25, n), rng.uniform(0, 20, n), rng.uniform(0, 2, n)]
    )
    normals = rng.normal(size=(n, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    labelled = LabelledCloud(
        cloud=PointCloud(pos, normals=normals), labels=rng.uniform(size=n)
    )
    params = TilingParams(points_per_submap=512, min_points=32, seed=5)
    return labelled, tile_submaps(labelled, params), params


class TestBatch:
    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(4)
        labelled, submaps, params = tiled_fixture(rng)
        p = tmp_path / "batch.txt"
        write_batch(p, submaps, len(labelled), lam=0.5, alpha=1.0, tiling=params, seed=5)
        batch = read_batch(p)
        assert batch.map_size == len(labelled)
        assert batch.lam == 0.5
        assert batch.alpha == 1.0
        assert batch.seed == 5
        assert batch.tiling.submap_size_xy == params.submap_size_xy
        assert len(batch.submaps) == len(submaps)
        for got, want in zip(batch.submaps, submaps):
            assert np.array_equal(got.positions, want.positions)
            assert np.array_equal(got.normals, want.normals)
            assert np.array_equal(got.labels, want.labels)
            assert np.array_equal(got.source_indices, want.source_indices)
            assert np.array_equal(got.tile_origin, want.tile_origin)

    def test_rewrite_is_byte_identical(self, tmp_path):
        rng = np.random.default_rng(5)
        labelled, submaps, params = tiled_fixture(rng)
        p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
        write_batch(p1, submaps, len(labelled), 0.5, 1.0, params, seed=5)
        batch = read_batch(p1)
        write_batch(p2, batch.submaps, batch.map_size, batch.lam, batch.alpha, batch.tiling, batch.seed)
        assert p1.read_bytes() == p2.read_bytes()

    def test_normals_required(self, tmp_path):
        rng = np.random.default_rng(6)
        pos = np.column_stack([rng.uniform(0, 8, 200), rng.uniform(0, 8, 200), np.zeros(200)])
        labelled = LabelledCloud(cloud=PointCloud(pos), labels=np.zeros(200))
        params = TilingParams(points_per_submap=64, min_points=16)
        submaps = tile_submaps(labelled, params)
        with pytest.raises(ValueError, match="lacks normals"):
            write_batch(tmp_path / "b.txt", submaps, 200, 0.5, 1.0, params)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "b.txt"
        p.write_text("not-a-batch\n")
        with pytest.raises(ValueError, match="bad magic"):
            read_batch(p)

    def test_source_index_bounds_checked(self, tmp_path):
        rng = np.random.default_rng(7)
        labelled, submaps, params = tiled_fixture(rng, n=600)
        p = tmp_path / "b.txt"
        write_batch(p, submaps, len(labelled), 0.5, 1.0, params, seed=5)
        text = p.read_text().splitlines()
        # corrupt one record's source index beyond map_size
        for i, line in enumerate(text):
            if not line.startswith(("stablemap", "seed", "lambda", "alpha", "tile",
                                    "stride", "points", "map_size", "features", "submap")):
                text[i] = "999999" + line[line.index(" "):]
                break
        p.write_text("\n".join(text) + "\n")
        with pytest.raises(ValueError, match="source index outside"):
            read_batch(p)

    def test_trailing_content_rejected(self, tmp_path):
        rng = np.random.default_rng(8)
        labelled, submaps, params = tiled_fixture(rng, n=600)
        p = tmp_path / "b.txt"
        write_batch(p, submaps, len(labelled), 0.5, 1.0, params, seed=5)
        with open(p, "a") as f:
            f.write("0 0 0 0 0 0 0 0\n")
        with pytest.raises(ValueError, match="trailing content"):
            read_batch(p)


class TestPredictions:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(9)
        pairs = [
            (rng.integers(0, 100, 20), rng.uniform(size=20)),
            (rng.integers(0, 100, 5), rng.uniform(size=5)),
        ]
        p = tmp_path / "pred.txt"
        write_predictions(p, pairs, map_size=100)
        back, map_size = read_predictions(p)
        assert map_size == 100
        assert len(back) == 2
        for (gi, gp), (wi, wp) in zip(back, pairs):
            assert np.array_equal(gi, wi)
            assert np.array_equal(gp, wp)

    def test_prediction_out_of_range(self, tmp_path):
        p = tmp_path / "pred.txt"
        p.write_text(
            "stablemap-predictions 1\nmap_size 10\nsubmaps 1\nsubmap 0 1\n3 1.5\n"
        )
        with pytest.raises(ValueError, match=r"prediction outside \[0, 1\]"):
            read_predictions(p)

    def test_index_out_of_range(self, tmp_path):
        p = tmp_path / "pred.txt"
        p.write_text(
            "stablemap-predictions 1\nmap_size 10\nsubmaps 1\nsubmap 0 1\n10 0.5\n"
        )
        with pytest.raises(ValueError, match="source index outside"):
            read_predictions(p)

    def test_length_mismatch_on_write(self, tmp_path):
        with pytest.raises(ValueError, match="length mismatch"):
            write_predictions(
                tmp_path / "p.txt", [(np.arange(3), np.zeros(2))], map_size=5
            )


class TestReport:
    def make_report(self):
        truth = np.array([0, 1] * 20)
        scores = np.where(truth == 1, 0.9, 0.1) + np.linspace(0, 0.05, 40)
        return evaluate_map(scores, truth)

    def test_json_report(self, tmp_path):
        report = self.make_report()
        jp = tmp_path / "report.json"
        write_report(report, jp)
        doc = json.loads(jp.read_text())
        assert doc["auc"] == report.auc
        assert doc["n_points"] == 40

    def test_text_report_aligned(self, tmp_path):
        import re

        report = self.make_report()
        text = format_report(report)
        lines = text.strip().split("\n")
        # two-column layout: every value starts at one column
        starts = {re.search(r"\S+$", l).start() for l in lines}
        assert len(starts) == 1
        assert any(l.startswith("auc") for l in lines)

    def test_none_fields_omitted(self):
        report = self.make_report()
        assert report.rmse is None
        assert "rmse" not in format_report(report)
