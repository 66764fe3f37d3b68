"""Command-line pipeline driver.

Subcommands mirror the processing stages (synth, preprocess, register,
label, tile, evaluate, threshold) and `pipeline` runs the whole chain from
a session manifest.  Every stage reads and writes the ASCII formats from
the io module, so `pipeline` output equals the composition of the
individual subcommands.
"""

import argparse
import contextlib
import os
import sys

import numpy as np

from . import io as formats
from .cloud import PointCloud, estimate_normals
from .labelling import LabelledCloud, LabellingParams, label_map, label_to_distance
from .metrics import evaluate_map, optimal_threshold_gmean, roc_curve
from .preprocess import CsfParams, SorParams, remove_ground_csf, remove_outliers_sor
from .registration import IcpParams, apply_transform, icp_align_refined
from .synthetic import SceneSpec, generate_scene
from .tiling import TilingParams, accumulate_votes, resolve_votes, tile_submaps, VoteAccumulator

__all__ = ["main", "run_pipeline", "PipelineError"]


class PipelineError(RuntimeError):
    """Stage-qualified failure; message already names stage and session."""


@contextlib.contextmanager
def _stage(name, session=None):
    where = name if session is None else f"{name} (session {session})"
    try:
        yield
    except PipelineError:
        raise
    except (ValueError, OSError) as exc:
        raise PipelineError(f"{where}: {exc}") from exc


def _as_cloud(obj) -> PointCloud:
    return obj.cloud if isinstance(obj, LabelledCloud) else obj


def _with_normals(cloud: PointCloud, k: int = 16) -> PointCloud:
    return estimate_normals(cloud, k=min(k, max(len(cloud) - 1, 3)))


def run_pipeline(manifest: formats.SessionManifest, out_dir) -> dict:
    """CSF -> SOR -> ICP-to-reference -> labelling -> tiling, all artifacts on disk.

    Returns a dict of artifact paths; an evaluation report is included only
    when the input clouds carry ground truth.
    """
    os.makedirs(out_dir, exist_ok=True)
    filtered_dir = os.path.join(out_dir, "filtered")
    registered_dir = os.path.join(out_dir, "registered")
    os.makedirs(filtered_dir, exist_ok=True)
    os.makedirs(registered_dir, exist_ok=True)

    filtered = []
    for entry in manifest.sessions:
        with _stage("preprocess", entry.session_id):
            cloud = _as_cloud(formats.read_ply(entry.path))
            offground, _ = remove_ground_csf(cloud, manifest.csf)
            kept = remove_outliers_sor(offground, manifest.sor)
            formats.write_ply(kept, os.path.join(filtered_dir, f"{entry.session_id}.ply"))
            filtered.append(kept)

    ref = manifest.reference_index
    registered = []
    for i, entry in enumerate(manifest.sessions):
        if i == ref:
            registered.append(filtered[i])
            continue
        with _stage("register", entry.session_id):
            result = icp_align_refined(filtered[i], filtered[ref], manifest.icp)
            registered.append(apply_transform(result.transform, filtered[i]))
    for entry, cloud in zip(manifest.sessions, registered):
        formats.write_ply(cloud, os.path.join(registered_dir, f"{entry.session_id}.ply"))

    with _stage("label", manifest.sessions[ref].session_id):
        registered[ref] = _with_normals(registered[ref])
        labelled = label_map(registered, manifest.labelling)
    labelled_path = os.path.join(out_dir, "labelled_map.ply")
    formats.write_ply(labelled, labelled_path)

    with _stage("tile"):
        submaps = tile_submaps(labelled, manifest.tiling)
        batch_path = os.path.join(out_dir, "batch.txt")
        formats.write_batch(
            batch_path,
            submaps,
            map_size=len(labelled.cloud),
            lam=manifest.labelling.lam,
            alpha=manifest.weighting.alpha,
            tiling=manifest.tiling,
            seed=manifest.seed,
        )

    artifacts = {
        "labelled_map": labelled_path,
        "batch": batch_path,
        "filtered": filtered_dir,
        "registered": registered_dir,
    }
    if labelled.ground_truth is not None and len(np.unique(labelled.ground_truth)) == 2:
        with _stage("evaluate"):
            report = evaluate_map(labelled.labels, labelled.ground_truth, lam=manifest.labelling.lam)
            report_json = os.path.join(out_dir, "report.json")
            report_text = os.path.join(out_dir, "report.txt")
            formats.write_report(report, report_json, report_text)
            artifacts["report"] = report_json
            artifacts["report_text"] = report_text
    return artifacts


# ---------------------------------------------------------------------------
# subcommands


def _cmd_synth(args) -> int:
    spec = SceneSpec(
        extent=(args.extent[0], args.extent[1]),
        sessions=args.sessions,
        n_poles=args.poles,
        n_trees=args.trees,
        n_walls=args.walls,
        n_dynamic=args.dynamic,
        ghost_trails=args.ghosts,
        sensor_noise_sigma=args.noise,
        ground_density=args.ground_density,
        surface_density=args.surface_density,
        min_separation=args.min_separation,
        seed=args.seed,
    )
    with _stage("synth"):
        bundle = generate_scene(spec)
        os.makedirs(args.out, exist_ok=True)
        paths = []
        for k, cloud in enumerate(bundle.clouds):
            path = os.path.join(args.out, f"session_{k}.ply")
            formats.write_ply(cloud, path)
            paths.append(path)
        manifest_path = os.path.join(args.out, "manifest.json")
        formats.write_manifest(manifest_path, paths, reference=0, seed=args.seed)
    print(f"wrote {len(paths)} sessions and {manifest_path}")
    return 0


def _cmd_preprocess(args) -> int:
    csf = CsfParams(
        cloth_resolution=args.cloth_resolution,
        rigidness=args.rigidness,
        iterations=args.iterations,
        class_threshold=args.class_threshold,
        time_step=args.time_step,
    )
    sor = SorParams(k=args.sor_k, std_multiplier=args.sor_std)
    with _stage("preprocess"):
        cloud = _as_cloud(formats.read_ply(args.input))
        offground, ground = remove_ground_csf(cloud, csf)
        kept = remove_outliers_sor(offground, sor)
        formats.write_ply(kept, args.out)
        if args.ground_out:
            formats.write_ply(ground, args.ground_out)
    print(f"{len(cloud)} points -> {len(ground)} ground, {len(offground) - len(kept)} outliers, {len(kept)} kept")
    return 0


def _cmd_register(args) -> int:
    params = IcpParams(
        max_iterations=args.max_iterations,
        max_correspondence_dist=args.max_dist,
        convergence_eps=args.eps,
    )
    gates = tuple(float(g) for g in args.refine_gates.split(",") if g.strip()) if args.refine_gates else ()
    with _stage("register"):
        source = _as_cloud(formats.read_ply(args.source))
        target = _as_cloud(formats.read_ply(args.target))
        result = icp_align_refined(source, target, params, refine_gates=gates)
        formats.write_ply(apply_transform(result.transform, source), args.out)
        if args.transform_out:
            import json

            with open(args.transform_out, "w") as f:
                json.dump(
                    {
                        "rotation": result.transform.rotation.tolist(),
                        "translation": result.transform.translation.tolist(),
                        "residual_rmse": result.residual_rmse,
                        "iterations": result.iterations,
                        "stalled": result.stalled,
                    },
                    f,
                    indent=2,
                )
                f.write("\n")
    print(
        f"aligned in {result.iterations} iterations, residual {result.residual_rmse:.6f} m"
        + (" (stalled)" if result.stalled else "")
    )
    return 0


def _cmd_label(args) -> int:
    with _stage("label"):
        maps = [_as_cloud(formats.read_ply(args.reference))]
        maps += [_as_cloud(formats.read_ply(p)) for p in args.others]
        if not args.skip_normals:
            maps[0] = _with_normals(maps[0])
        labelled = label_map(maps, LabellingParams(lam=args.lam, reference_index=0))
        formats.write_ply(labelled, args.out)
    print(f"labelled {len(labelled.cloud)} points against {len(args.others)} other sessions")
    return 0


def _cmd_tile(args) -> int:
    tiling = TilingParams(
        submap_size_xy=args.tile_size,
        stride_fraction=args.stride_fraction,
        points_per_submap=args.points_per_submap,
        min_points=args.min_points,
        seed=args.seed,
    )
    with _stage("tile"):
        labelled = formats.read_ply(args.input)
        if not isinstance(labelled, LabelledCloud):
            raise PipelineError("tile: input has no label property")
        if labelled.cloud.normals is None:
            raise PipelineError("tile: input has no normals (run label without --skip-normals)")
        submaps = tile_submaps(labelled, tiling)
        formats.write_batch(
            args.out,
            submaps,
            map_size=len(labelled.cloud),
            lam=args.lam,
            alpha=args.alpha,
            tiling=tiling,
            seed=args.seed,
        )
    print(f"wrote {len(submaps)} submaps covering {len(labelled.cloud)} points")
    return 0


def _cmd_evaluate(args) -> int:
    with _stage("evaluate"):
        labelled = formats.read_ply(args.input)
        if not isinstance(labelled, LabelledCloud):
            raise PipelineError("evaluate: input has no label property")
        if labelled.ground_truth is None:
            raise PipelineError("evaluate: input has no ground truth")
        gt = labelled.ground_truth
        if args.predictions:
            per_submap, map_size = formats.read_predictions(args.predictions)
            if map_size != len(labelled.cloud):
                raise PipelineError(
                    f"evaluate: predictions map_size {map_size} != cloud size {len(labelled.cloud)}"
                )
            acc = VoteAccumulator.empty(map_size)
            for indices, preds in per_submap:
                accumulate_votes(acc, indices, preds)
            scores, covered = resolve_votes(acc)
            print(f"covered {int(covered.sum())}/{map_size} points")
            report = evaluate_map(
                scores[covered],
                gt[covered],
                lam=args.lam,
                reference_labels=labelled.labels[covered],
            )
        else:
            report = evaluate_map(labelled.labels, gt, lam=args.lam)
        formats.write_report(report, args.report, args.text)
    sys.stdout.write(formats.format_report(report))
    return 0


def _cmd_threshold(args) -> int:
    with _stage("threshold"):
        labelled = formats.read_ply(args.input)
        if not isinstance(labelled, LabelledCloud):
            raise PipelineError("threshold: input has no label property")
        if labelled.ground_truth is None:
            raise PipelineError("threshold: input has no ground truth")
        curve = roc_curve(labelled.labels, labelled.ground_truth)
        threshold, gmean = optimal_threshold_gmean(curve)
        meters = label_to_distance(min(threshold, 1.0 - 1e-15), lam=args.lam)
    print(f"threshold  {threshold:.6f}")
    print(f"meters     {meters:.6f}")
    print(f"gmean      {gmean:.6f}")
    return 0


def _cmd_pipeline(args) -> int:
    with _stage("manifest"):
        manifest = formats.read_manifest(args.manifest)
    artifacts = run_pipeline(manifest, args.out)
    for name in sorted(artifacts):
        print(f"{name}: {artifacts[name]}")
    if "report_text" in artifacts:
        with open(artifacts["report_text"]) as f:
            sys.stdout.write(f.read())
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stablemap",
        description="Long-term stability labelling for multi-session point-cloud maps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic multi-session scene")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sessions", type=int, default=5)
    p.add_argument("--extent", type=float, nargs=2, default=(40.0, 30.0), metavar=("X", "Y"))
    p.add_argument("--poles", type=int, default=3)
    p.add_argument("--trees", type=int, default=3)
    p.add_argument("--walls", type=int, default=2)
    p.add_argument("--dynamic", type=int, default=6)
    p.add_argument("--ghosts", type=int, default=1)
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--ground-density", type=float, default=20.0)
    p.add_argument("--surface-density", type=float, default=60.0)
    p.add_argument("--min-separation", type=float, default=4.5)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("preprocess", help="remove ground (cloth simulation) and outliers")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--ground-out")
    p.add_argument("--cloth-resolution", type=float, default=0.5)
    p.add_argument("--rigidness", type=int, default=2)
    p.add_argument("--iterations", type=int, default=500)
    p.add_argument("--class-threshold", type=float, default=0.5)
    p.add_argument("--time-step", type=float, default=0.65)
    p.add_argument("--sor-k", type=int, default=12)
    p.add_argument("--sor-std", type=float, default=1.0)
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("register", help="rigidly align a session onto a target session")
    p.add_argument("source")
    p.add_argument("target")
    p.add_argument("--out", required=True)
    p.add_argument("--transform-out")
    p.add_argument("--max-iterations", type=int, default=50)
    p.add_argument("--max-dist", type=float, default=2.0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--refine-gates", default="0.8,0.3", help="comma-separated tighter gates; empty disables")
    p.set_defaults(func=_cmd_register)

    p = sub.add_parser("label", help="label a reference map against other registered maps")
    p.add_argument("reference")
    p.add_argument("others", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--skip-normals", action="store_true")
    p.set_defaults(func=_cmd_label)

    p = sub.add_parser("tile", help="cut a labelled map into fixed-size training submaps")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--tile-size", type=float, default=10.0)
    p.add_argument("--stride-fraction", type=float, default=0.5)
    p.add_argument("--points-per-submap", type=int, default=4096)
    p.add_argument("--min-points", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=1.0)
    p.set_defaults(func=_cmd_tile)

    p = sub.add_parser("evaluate", help="score labels (or aggregated predictions) against ground truth")
    p.add_argument("input")
    p.add_argument("--predictions")
    p.add_argument("--report", required=True)
    p.add_argument("--text")
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("threshold", help="report the g-mean optimal classification threshold")
    p.add_argument("input")
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.set_defaults(func=_cmd_threshold)

    p = sub.add_parser("pipeline", help="run the full chain from a session manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
