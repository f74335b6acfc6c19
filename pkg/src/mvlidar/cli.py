"""Command-line interface.

Subcommands mirror the pipeline stages: calibrate, sync-sim, fuse, detect,
track, eval-det, eval-mot, pipeline, plus make-scene (synthetic data
export) and convert (binary frame <-> ASCII xyz).

Exit codes: 0 success, 2 bad input data or file format, 3 algorithmic
failure (for example calibration fitness below threshold), 4 bad
configuration.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys

import numpy as np

from .detector import DetectorConfig
from .errors import AlgorithmError, ConfigError, FormatError, MvLidarError
from .formats import (
    read_calibration,
    read_detections,
    read_frame,
    read_trajectories,
    read_xyz,
    write_calibration,
    write_detections,
    write_frame,
    write_trajectories,
    write_xyz,
)
from .fusion import ViewFrameSet, early_fuse
from .geometry import ObjectClass
from .metrics import (
    DetectionEvalConfig,
    MotEvalConfig,
    compute_ap,
    compute_clear_mot,
    format_ap_table,
    format_mot_table,
)
from .pipeline import (
    PipelineConfig,
    calibrate_node,
    config_digest,
    crossroad_hierarchy,
    detect_per_frame,
    export_scene,
    run_pipeline,
)
from .registration import HierarchyConfig, HierarchyLevel
from .scene import generate_synthetic_scene, standard_crossroad_spec
from .syncsim import (
    NetworkModel,
    SessionConfig,
    compute_time_error_report,
    simulate_session,
)
from .tracking import TrackerConfig, track_sequence

EXIT_OK = 0
EXIT_FORMAT = 2
EXIT_ALGORITHM = 3
EXIT_CONFIG = 4


def _frames_in(directory):
    paths = sorted(glob.glob(os.path.join(directory, "*.mvlc")))
    if not paths:
        raise FormatError(f"no .mvlc frames in {directory}")
    return [read_frame(path) for path in paths]


def _node_dirs(root):
    dirs = sorted(glob.glob(os.path.join(root, "node_*")))
    if not dirs:
        raise FormatError(f"no node_* directories in {root}")
    nodes = {}
    for path in dirs:
        try:
            node = int(os.path.basename(path).split("_", 1)[1])
        except ValueError:
            raise FormatError(f"cannot parse node id from {path}")
        nodes[node] = path
    return nodes


def _load_hierarchy(path) -> HierarchyConfig:
    if path is None:
        # scaled to the toolkit's crossroad-sized scenes; pass --config for
        # other scales
        return crossroad_hierarchy()
    try:
        with open(path) as handle:
            raw = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load hierarchy config: {exc}")
    if "levels" in raw:
        raw["levels"] = tuple(HierarchyLevel(*level) for level in raw["levels"])
    try:
        return HierarchyConfig(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc))


def _eval_config(args) -> DetectionEvalConfig:
    if args.iou_threshold is not None:
        return DetectionEvalConfig.with_threshold(args.iou_threshold)
    return DetectionEvalConfig()


def cmd_calibrate(args) -> int:
    reference = read_frame(args.reference)
    hierarchy = _load_hierarchy(args.config)
    nodes = _node_dirs(args.node_root)
    extrinsics = {}
    failures = []
    for node, directory in sorted(nodes.items()):
        frames = _frames_in(directory)
        try:
            result = calibrate_node(frames, reference, hierarchy,
                                    seed=args.seed + node,
                                    merge_duration_s=args.merge_duration)
        except AlgorithmError as exc:
            print(f"node {node}: FAILED ({exc})")
            failures.append(node)
            continue
        extrinsics[node] = result.transform
        print(f"node {node}: fitness {result.fitness:.3f}, "
              f"inlier RMSE {result.inlier_rmse * 100:.1f} cm")
    if extrinsics:
        write_calibration(args.out, extrinsics)
        print(f"wrote {args.out}")
    if failures:
        print(f"calibration failed for nodes: {failures}")
        return EXIT_ALGORITHM
    return EXIT_OK


def cmd_sync_sim(args) -> int:
    cfg = SessionConfig(node_count=args.nodes, duration_s=args.duration,
                        frame_rate_hz=args.frame_rate,
                        network=NetworkModel(delay_min_s=args.delay_min,
                                             delay_max_s=args.delay_max,
                                             drop_probability=args.drop),
                        seed=args.seed)
    trace = simulate_session(cfg)
    report = compute_time_error_report(trace)
    print(f"{'frame':>6}" + "".join(f"{f'node {n}':>12}" for n in report.nodes))
    step = max(1, len(report.errors_s) // args.max_rows)
    for frame in range(0, len(report.errors_s), step):
        row = report.errors_s[frame]
        print(f"{frame:>6}" + "".join(f"{v * 1e3:>12.4f}" for v in row))
    print("\nper-node summary (ms)")
    for stats in report.stats:
        flag = "  MISALIGNED" if stats.misaligned else ""
        print(f"node {stats.node}: max {stats.max_abs_s * 1e3:.4f}  "
              f"mean |e| {stats.mean_abs_s * 1e3:.4f}  "
              f"std {stats.std_s * 1e3:.4f}{flag}")
    if args.out:
        payload = {
            "per_node": [{"node": s.node, "max_abs_s": s.max_abs_s,
                          "mean_abs_s": s.mean_abs_s, "std_s": s.std_s,
                          "misaligned": s.misaligned} for s in report.stats],
            "errors_s": report.errors_s.tolist(),
        }
        with open(args.out, "w") as handle:
            json.dump(payload, handle, sort_keys=True, indent=2)
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_fuse(args) -> int:
    extrinsics = read_calibration(args.calib)
    nodes = _node_dirs(args.frames)
    missing = sorted(set(nodes) - set(extrinsics))
    if missing:
        raise ConfigError(f"calibration missing for nodes {missing}")
    per_node = {node: _frames_in(directory)
                for node, directory in nodes.items()}
    counts = {len(frames) for frames in per_node.values()}
    if len(counts) != 1:
        raise FormatError(f"unequal frame counts per node: {sorted(counts)}")
    os.makedirs(args.out, exist_ok=True)
    n_frames = counts.pop()
    for frame in range(n_frames):
        fused = early_fuse(ViewFrameSet(
            frames={node: per_node[node][frame] for node in per_node},
            extrinsics=extrinsics,
            sync_window_s=args.sync_window))
        write_frame(os.path.join(args.out, f"frame_{frame:05d}.mvlc"), fused)
    print(f"fused {n_frames} frames into {args.out}")
    return EXIT_OK


def cmd_detect(args) -> int:
    clouds = _frames_in(args.frames)
    cfg = DetectorConfig(seed=args.seed)
    boxes_per_frame = detect_per_frame(clouds, cfg)
    detections = [(frame, box) for frame, boxes in enumerate(boxes_per_frame)
                  for box in boxes]
    write_detections(args.out, detections)
    print(f"wrote {len(detections)} detections over {len(clouds)} frames "
          f"to {args.out}")
    return EXIT_OK


def cmd_track(args) -> int:
    detections = read_detections(args.detections)
    n_frames = max((frame for frame, _ in detections), default=-1) + 1
    per_frame = [[] for _ in range(n_frames)]
    for frame, box in detections:
        per_frame[frame].append(box)
    cfg = TrackerConfig(threshold=args.threshold, min_hits=args.min_hits,
                        max_age=args.max_age)
    trajectories = track_sequence(per_frame, cfg, frame_dt=args.frame_dt)
    write_trajectories(args.out, trajectories)
    print(f"wrote {len(trajectories)} tracks to {args.out}")
    return EXIT_OK


def cmd_eval_det(args) -> int:
    detections = read_detections(args.detections)
    ground_truth = read_detections(args.ground_truth)
    cfg = _eval_config(args)
    ap = {}
    for label in ObjectClass:
        if any(b.label is label for _, b in ground_truth):
            ap[label] = compute_ap(detections, ground_truth, label, cfg)
    print(format_ap_table({"detections": ap}))
    if args.out:
        with open(args.out, "w") as handle:
            json.dump({label.value: value for label, value in ap.items()},
                      handle, sort_keys=True, indent=2)
    return EXIT_OK


def cmd_eval_mot(args) -> int:
    hypotheses = read_trajectories(args.hypotheses)
    ground_truth = read_trajectories(args.ground_truth)
    cfg = MotEvalConfig(threshold=args.threshold)
    report = compute_clear_mot(hypotheses, ground_truth, cfg)
    print(format_mot_table({"hypotheses": report}))
    if args.out:
        with open(args.out, "w") as handle:
            json.dump({"mota": report.mota, "motp": report.motp,
                       "ids": report.ids, "frag": report.frag,
                       "fn": report.fn, "fp": report.fp, "gt": report.gt},
                      handle, sort_keys=True, indent=2)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    if args.config:
        cfg = PipelineConfig.from_json(args.config)
        digest = config_digest(args.config)
    else:
        cfg = PipelineConfig(seed=args.seed)
        digest = None
    manifest = run_pipeline(cfg, output_dir=args.out_dir, config_sha256=digest)
    out = args.out_dir or cfg.output_dir
    with open(os.path.join(out, "report.txt")) as handle:
        print(handle.read(), end="")
    print(f"outputs in {out}: {', '.join(manifest['outputs'])}")
    return EXIT_OK


def cmd_make_scene(args) -> int:
    spec = standard_crossroad_spec(n_frames=args.frames, seed=args.seed,
                                   with_occluders=not args.no_occluders)
    scene = generate_synthetic_scene(spec, seed=args.seed)
    export_scene(scene, args.out)
    total = sum(len(f) for frames in scene.node_frames.values() for f in frames)
    print(f"wrote {len(scene.node_frames)} nodes x {args.frames} frames "
          f"({total} points) to {args.out}")
    return EXIT_OK


def cmd_convert(args) -> int:
    if args.input.endswith(".mvlc"):
        write_xyz(args.output, read_frame(args.input))
    elif args.input.endswith(".xyz"):
        write_frame(args.output, read_xyz(args.input))
    else:
        raise ConfigError("input must end in .mvlc or .xyz")
    print(f"wrote {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvlidar",
        description="multi-view LiDAR calibration, fusion, tracking, and "
                    "evaluation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate",
                       help="register every node against a reference scan")
    p.add_argument("--node-root", required=True,
                   help="directory containing node_<id>/ frame directories")
    p.add_argument("--reference", required=True, help="reference .mvlc scan")
    p.add_argument("--out", required=True, help="output calibration .jsonl")
    p.add_argument("--config", help="hierarchy config JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--merge-duration", type=float, default=10.0,
                   help="seconds of frames to merge per node")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("sync-sim",
                       help="simulate a trigger/PPS synchronization session")
    p.add_argument("--nodes", type=int, default=4)
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--frame-rate", type=float, default=10.0)
    p.add_argument("--delay-min", type=float, default=0.001)
    p.add_argument("--delay-max", type=float, default=0.2)
    p.add_argument("--drop", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-rows", type=int, default=20,
                   help="cap on printed per-frame rows")
    p.add_argument("--out", help="write the full error table as JSON")
    p.set_defaults(func=cmd_sync_sim)

    p = sub.add_parser("fuse", help="early-fuse synchronized node frames")
    p.add_argument("--calib", required=True)
    p.add_argument("--frames", required=True,
                   help="directory containing node_<id>/ frame directories")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--sync-window", type=float, default=0.005)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("detect", help="run the geometric detector per frame")
    p.add_argument("--frames", required=True, help="directory of .mvlc frames")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("track", help="track detections across frames")
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.01)
    p.add_argument("--min-hits", type=int, default=3)
    p.add_argument("--max-age", type=int, default=2)
    p.add_argument("--frame-dt", type=float, default=0.1)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval-det", help="average precision per class")
    p.add_argument("--detections", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--iou-threshold", type=float,
                   help="same threshold for all classes (default: 0.7 cars, "
                        "0.5 cyclists/pedestrians)")
    p.add_argument("--out", help="write AP values as JSON")
    p.set_defaults(func=cmd_eval_det)

    p = sub.add_parser("eval-mot", help="CLEAR tracking metrics")
    p.add_argument("--hypotheses", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--threshold", type=float, default=0.25)
    p.add_argument("--out", help="write the report as JSON")
    p.set_defaults(func=cmd_eval_mot)

    p = sub.add_parser("pipeline", help="full chain with a run manifest")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--out-dir", help="override the config output directory")
    p.add_argument("--seed", type=int, default=0,
                   help="seed when no config file is given")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("make-scene",
                       help="export a synthetic crossroad scene to disk")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-occluders", action="store_true")
    p.set_defaults(func=cmd_make_scene)

    p = sub.add_parser("convert", help="convert .mvlc <-> .xyz")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_convert)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AlgorithmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ALGORITHM
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
