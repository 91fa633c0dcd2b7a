"""
Avatar CLI - Main entry point for the scene decomposition engine

    python app.py [--config run.json] [--set a.b=value ...] [--print-config] <command> [options]

Commands: synth, train, render, segment, extract-mesh, eval, gradcheck.
Exit codes: 0 success, 2 configuration error, 3 data/checkpoint error,
4 gradient check or acceptance failure.
"""

import argparse
import json
import logging
import os
import sys
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from autodiff import set_precision
from body import PoseDimensionError
from evalmesh import (
    MetricsReport,
    TriangleMesh,
    chamfer,
    mask_metrics,
    marching_cubes,
    normal_consistency,
    opacity_bimodality,
    pose_mesh,
    psnr,
    volumetric_iou,
)
from optimize import (
    DatasetMismatchError,
    MissingGroundTruthError,
    TrainState,
    build_state,
    objective_gradcheck,
    refine_poses_report,
    restore_state,
    save_state,
    train,
)
from render import RenderedImage, render_mask
from synthetic import (
    DatasetFormatError,
    DegenerateSceneError,
    FigureOutsideSphereError,
    SyntheticDataset,
    analytic_sdf,
    generate_dataset,
    oracle_surface_points,
)
from utils import CheckpointError, latest_checkpoint, load_checkpoint, write_gray, write_mask, write_rgb
from utils.config import ConfigError, RunConfig, dump_config, load_config, log_level

logger = logging.getLogger("app")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_CHECK = 4


def checkpoint_root(config: RunConfig) -> str:
    return os.path.join(config.output_dir, "checkpoints")


def resolve_checkpoint(config: RunConfig, explicit: Optional[str]) -> Optional[str]:
    path = explicit or config.checkpoint
    if path in (None, "latest"):
        return latest_checkpoint(checkpoint_root(config))
    return path


def load_trained(config: RunConfig, args) -> Tuple[TrainState, SyntheticDataset]:
    """Dataset plus the state stored in the requested (or newest) checkpoint."""
    dataset = SyntheticDataset.load(config.dataset_dir)
    path = resolve_checkpoint(config, getattr(args, "checkpoint", None))
    if path is None:
        raise CheckpointError(f"no checkpoint given and none found under {checkpoint_root(config)}")
    checkpoint = load_checkpoint(path)
    state = build_state(dataset, config.train, config.model, config.render, geometric_init=False)
    restore_state(state, checkpoint)
    return state, dataset


def selected_frames(dataset: SyntheticDataset, frames: Optional[Sequence[int]]) -> List[int]:
    chosen = list(range(dataset.n_frames)) if not frames else [int(f) for f in frames]
    bad = [f for f in chosen if not 0 <= f < dataset.n_frames]
    if bad:
        raise DatasetMismatchError(f"frames {bad} not in dataset of {dataset.n_frames} frames")
    return chosen


def render_frames(state: TrainState, dataset: SyntheticDataset, frames: Sequence[int],
                  n_jobs: int) -> Dict[int, RenderedImage]:
    poses = state.poses
    images = {}
    for i in frames:
        images[i] = state.renderer.render_image(dataset.frames[i].camera, poses[i], latent_index=i, n_jobs=n_jobs)
        logger.info(f"[RENDER] Frame {i} rendered")
    return images


def write_json(path: str, payload) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


# Commands

def cmd_synth(config: RunConfig, args) -> int:
    dataset = generate_dataset(config.scene, seed=config.scene.seed, n_jobs=config.n_jobs)
    dataset.save(config.dataset_dir)
    return EXIT_OK


def cmd_train(config: RunConfig, args) -> int:
    dataset = SyntheticDataset.load(config.dataset_dir)
    resume = resolve_checkpoint(config, args.resume) if args.resume else None
    state = build_state(dataset, config.train, config.model, config.render, geometric_init=resume is None)
    if resume:
        restore_state(state, load_checkpoint(resume))
    meta = {"config": config.model_dump(mode="json")}
    if args.init_only:
        save_state(state, os.path.join(checkpoint_root(config), f"step_{state.step:06d}"), meta)
        return EXIT_OK

    state = train(
        dataset,
        config.train,
        weights=config.loss,
        state=state,
        log_path=os.path.join(config.output_dir, "train_log.csv"),
        checkpoint_dir=checkpoint_root(config),
        run_meta=meta,
        progress=args.progress,
    )
    if dataset.true_poses() is not None:
        report = refine_poses_report(state, dataset)
        write_json(os.path.join(config.output_dir, "pose_report.json"), {
            "mean_angle_before_deg": report.mean_angle_before,
            "mean_angle_after_deg": report.mean_angle_after,
            "mean_translation_before": report.mean_translation_before,
            "mean_translation_after": report.mean_translation_after,
            "frames": report.as_rows(),
        })
    write_json(os.path.join(config.output_dir, "train_summary.json"), state.log.summary())
    return EXIT_OK


def cmd_render(config: RunConfig, args) -> int:
    state, dataset = load_trained(config, args)
    out = os.path.join(config.output_dir, "render")
    os.makedirs(out, exist_ok=True)
    frames = selected_frames(dataset, args.frames)
    for i, image in render_frames(state, dataset, frames, config.n_jobs).items():
        write_rgb(os.path.join(out, f"rgb_{i:04d}.png"), image.rgb)
        write_rgb(os.path.join(out, f"fg_{i:04d}.png"), image.foreground)
        write_rgb(os.path.join(out, f"bg_{i:04d}.png"), image.background)
        write_gray(os.path.join(out, f"opacity_{i:04d}.png"), image.opacity)
    for view in dataset.holdout:
        image = state.renderer.render_image(view.camera, state.poses[view.pose_frame], latent_index=None,
                                            n_jobs=config.n_jobs)
        write_rgb(os.path.join(out, f"holdout_{view.index:02d}.png"), image.rgb)
    logger.info(f"[RENDER] Wrote {len(frames)} frames and {len(dataset.holdout)} held-out views to {out}")
    return EXIT_OK


def mask_report(images: Dict[int, RenderedImage], dataset: SyntheticDataset, threshold: float,
                thresholds: Sequence[float]) -> Dict[str, object]:
    per_frame = []
    for i, image in images.items():
        m = mask_metrics(render_mask(image.opacity, threshold), dataset.frames[i].mask)
        per_frame.append({"frame": i, "precision": m.precision, "recall": m.recall, "f1": m.f1, "iou": m.iou})
    by_threshold = {
        f"{t:.2f}": float(np.mean([mask_metrics(render_mask(img.opacity, t), dataset.frames[i].mask).iou
                                   for i, img in images.items()]))
        for t in thresholds
    }
    return {
        "precision": float(np.mean([r["precision"] for r in per_frame])),
        "recall": float(np.mean([r["recall"] for r in per_frame])),
        "f1": float(np.mean([r["f1"] for r in per_frame])),
        "iou": float(np.mean([r["iou"] for r in per_frame])),
        "iou_by_threshold": by_threshold,
        "frames": per_frame,
    }


def cmd_segment(config: RunConfig, args) -> int:
    state, dataset = load_trained(config, args)
    out = os.path.join(config.output_dir, "segment")
    os.makedirs(out, exist_ok=True)
    frames = selected_frames(dataset, args.frames)
    images = render_frames(state, dataset, frames, config.n_jobs)
    for i, image in images.items():
        write_mask(os.path.join(out, f"mask_{i:04d}.png"), render_mask(image.opacity, config.render.mask_threshold))
    if all(dataset.frames[i].mask is not None for i in frames):
        report = mask_report(images, dataset, config.render.mask_threshold, config.eval.mask_thresholds)
        write_json(os.path.join(out, "mask_metrics.json"), report)
        logger.info(f"[EVAL] Mask IoU {report['iou']:.4f}, F1 {report['f1']:.4f}")
    return EXIT_OK


def canonical_mesh(state: TrainState, config: RunConfig, pose: np.ndarray) -> TriangleMesh:
    bound = config.eval.mesh_bound
    return marching_cubes(lambda p: state.fields.shape.sdf_numpy(p, pose), config.eval.mesh_resolution,
                          (-bound, bound))


def cmd_extract_mesh(config: RunConfig, args) -> int:
    state, dataset = load_trained(config, args)
    out = os.path.join(config.output_dir, "meshes")
    os.makedirs(out, exist_ok=True)
    rest = np.zeros(state.skeleton.pose_dim)
    canonical_mesh(state, config, rest).write_obj(os.path.join(out, "canonical.obj"))
    frames = selected_frames(dataset, args.frames or config.eval.posed_frames)
    for i in frames:
        pose = state.poses[i]
        posed = pose_mesh(canonical_mesh(state, config, pose), state.skeleton, pose)
        posed.write_obj(os.path.join(out, f"posed_{i:04d}.obj"))
    logger.info(f"[EVAL] Wrote canonical mesh and {len(frames)} posed meshes to {out}")
    return EXIT_OK


def cmd_eval(config: RunConfig, args) -> int:
    state, dataset = load_trained(config, args)
    frames = selected_frames(dataset, args.frames or config.eval.posed_frames)
    images = render_frames(state, dataset, frames, config.n_jobs)
    report = MetricsReport(frames=len(frames))
    report.psnr_input = float(np.mean([psnr(np.clip(images[i].rgb, 0, 1), dataset.frames[i].rgb) for i in frames]))
    report.opacity_bimodality = opacity_bimodality(np.concatenate([images[i].opacity.ravel() for i in frames]))

    if all(dataset.frames[i].mask is not None for i in frames):
        masks = mask_report(images, dataset, config.render.mask_threshold, config.eval.mask_thresholds)
        report.mask_precision, report.mask_recall = masks["precision"], masks["recall"]
        report.mask_f1, report.mask_iou = masks["f1"], masks["iou"]
        report.mask_iou_by_threshold = masks["iou_by_threshold"]

    if dataset.holdout:
        report.psnr_holdout = float(np.mean([
            psnr(np.clip(state.renderer.render_image(v.camera, state.poses[v.pose_frame], None,
                                                     config.n_jobs).rgb, 0, 1), v.rgb)
            for v in dataset.holdout
        ]))

    truth = dataset.true_poses()
    if truth is not None:
        count = config.eval.surface_samples
        distances, consistencies = [], []
        for i in frames:
            pose = state.poses[i]
            mesh = pose_mesh(canonical_mesh(state, config, pose), state.skeleton, pose)
            if mesh.is_empty:
                logger.warning(f"[EVAL] Frame {i}: extracted surface is empty")
                continue
            points, normals = mesh.sample_surface(count, seed=config.eval.seed)
            ref_points, ref_normals = oracle_surface_points(dataset.spec, truth[i], count, seed=config.eval.seed,
                                                            skeleton=state.skeleton)
            distances.append(chamfer(points, ref_points))
            consistencies.append(normal_consistency(points, normals, ref_points, ref_normals))
        if distances:
            report.chamfer = float(np.mean(distances))
            report.chamfer_cm = report.chamfer * dataset.cm_per_unit
            report.normal_consistency = float(np.mean(consistencies))
        rest = np.zeros(state.skeleton.pose_dim)
        bound = config.eval.mesh_bound
        report.volumetric_iou = volumetric_iou(lambda p: state.fields.shape.sdf_numpy(p, rest),
                                               lambda p: analytic_sdf(dataset.spec, p),
                                               config.eval.volume_resolution, (-bound, bound))
        poses = refine_poses_report(state, dataset)
        report.pose_angle_error_before_deg = poses.mean_angle_before
        report.pose_angle_error_after_deg = poses.mean_angle_after

    path = os.path.join(config.output_dir, "metrics.json")
    os.makedirs(config.output_dir, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(report.model_dump_json(indent=2))
    logger.info(f"[EVAL] Metrics written to {path}")
    return EXIT_OK


def cmd_gradcheck(config: RunConfig, args) -> int:
    set_precision(config.train.precision)
    dataset = SyntheticDataset.load(config.dataset_dir)
    path = resolve_checkpoint(config, args.checkpoint)
    state = build_state(dataset, config.train, config.model, config.render, geometric_init=path is None)
    if path is not None:
        restore_state(state, load_checkpoint(path))
    tolerance = args.tolerance or (1e-5 if config.train.precision == "float64" else 1e-3)
    reports = objective_gradcheck(state, dataset, config.loss, entries_per_param=args.entries,
                                  tolerance=tolerance, seed=config.train.seed)
    rows = []
    for term, report in reports.items():
        for row in report.as_rows():
            rows.append({"term": term, **row})
    for row in rows:
        print(f"{row['term']:<9} {row['parameter']:<28} {row['entries']:>4} "
              f"{row['max_rel_err']:.3e} {row['max_abs_err']:.3e} {row['status']}")
    write_json(os.path.join(config.output_dir, "gradcheck.json"), rows)
    passed = all(r.passed for r in reports.values())
    logger.info(f"[GRADCHECK] {'PASS' if passed else 'FAIL'} at tolerance {tolerance:.0e}")
    return EXIT_OK if passed else EXIT_CHECK


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "render": cmd_render,
    "segment": cmd_segment,
    "extract-mesh": cmd_extract_mesh,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="avatar", description="Articulated avatar scene decomposition engine")
    parser.add_argument("--config", help="run configuration JSON (default: $AVATAR_CONFIG)")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY.PATH=VALUE",
                        help="override one configuration value; repeatable")
    parser.add_argument("--print-config", action="store_true", help="print the resolved configuration and exit")
    sub = parser.add_subparsers(dest="command")

    sub.add_parser("synth", help="generate the synthetic dataset")
    train_parser = sub.add_parser("train", help="optimize fields and poses")
    train_parser.add_argument("--resume", help="checkpoint directory, or 'latest'")
    train_parser.add_argument("--init-only", action="store_true", help="save the initialized state and stop")
    train_parser.add_argument("--progress", action="store_true", help="show a progress bar")
    for name in ("render", "segment", "extract-mesh", "eval"):
        p = sub.add_parser(name)
        p.add_argument("--checkpoint", help="checkpoint directory (default: newest)")
        p.add_argument("--frames", type=int, nargs="*", help="frame indices (default: all)")
    check = sub.add_parser("gradcheck", help="finite-difference check of every loss term")
    check.add_argument("--checkpoint", help="checkpoint directory (default: newest, else a fresh state)")
    check.add_argument("--entries", type=int, default=4, help="entries probed per parameter")
    check.add_argument("--tolerance", type=float, help="max relative error")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=log_level(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config, args.overrides)
        if args.print_config:
            print(dump_config(config))
            return EXIT_OK
        if args.command is None:
            parser.print_help()
            return EXIT_CONFIG
        return COMMANDS[args.command](config, args)
    except (ConfigError, FigureOutsideSphereError, DegenerateSceneError) as e:
        logger.error(f"[CONFIG] {e}")
        return EXIT_CONFIG
    except (DatasetFormatError, CheckpointError, DatasetMismatchError, MissingGroundTruthError,
            PoseDimensionError) as e:
        logger.error(f"[DATA] {e}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
