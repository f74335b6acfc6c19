"""End-to-end orchestration: calibrate, fuse, detect, track, evaluate.

The pipeline runs the full chain on a synthetic crossroad scene and writes
every stage's machine-readable output plus a run manifest (seed, config
hash, per-stage timings). All outputs except the manifest's timings are
byte-identical across reruns with the same config.

Also implements the two standing experiments: detection quality versus the
number of fused views (with temporal integration equalizing the per-frame
point budget), and early versus late fusion of detection boxes.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from dataclasses import replace as dc_replace

from .detector import DetectorConfig, detect_frame, subtract_background
from .errors import CalibrationFailedError, ConfigError
from .formats import (
    write_calibration,
    write_detections,
    write_frame,
    write_trajectories,
)
from .fusion import ViewFrameSet, early_fuse, late_fuse, temporal_integrate
from .geometry import ObjectClass, PointCloud, RigidTransform, apply_transform
from .metrics import (
    DetectionEvalConfig,
    MotEvalConfig,
    compute_ap,
    compute_clear_mot,
    detection_recall,
    format_ap_table,
    format_mot_table,
)
from .registration import (
    HierarchyConfig,
    HierarchyLevel,
    RegistrationResult,
    accumulate_frames,
    hierarchical_register,
)
from .scene import SceneSpec, SyntheticScene, calibration_capture, \
    generate_synthetic_scene, standard_crossroad_spec
from .syncsim import (
    NetworkModel,
    NodeClockModel,
    SessionConfig,
    compute_time_error_report,
    simulate_session,
)
from .tracking import TrackerConfig, TrajectorySet, track_sequence

FAILED_CALIBRATION_FITNESS = 0.2


def thread_budget() -> int:
    """Worker cap for per-frame stages; MVLK_THREADS overrides downward."""
    budget = os.cpu_count() or 1
    override = os.environ.get("MVLK_THREADS")
    if override:
        try:
            budget = max(1, min(budget, int(override)))
        except ValueError:
            raise ConfigError(f"MVLK_THREADS={override!r} is not an integer")
    return budget


def calibrate_node(frames: Sequence[PointCloud], reference: PointCloud,
                   cfg: HierarchyConfig = HierarchyConfig(), seed: int = 0,
                   merge_duration_s: float = 10.0,
                   reference_viewpoint=(0.0, 0.0, 2.0)) -> RegistrationResult:
    """Register one node against the reference scan.

    Merges the node's frames over merge_duration_s into a dense cloud, then
    runs the full hierarchical registration. Raises CalibrationFailedError
    when the final fitness is below the failure threshold, rather than
    handing back a garbage transform.
    """
    merged = accumulate_frames(frames, merge_duration_s)
    result = hierarchical_register(merged, reference, cfg, seed=seed,
                                   target_viewpoint=reference_viewpoint)
    if result.fitness < FAILED_CALIBRATION_FITNESS:
        raise CalibrationFailedError(
            f"fitness {result.fitness:.3f} below "
            f"{FAILED_CALIBRATION_FITNESS}; calibration failed")
    return result


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def detect_per_frame(clouds: Sequence[PointCloud], cfg: DetectorConfig,
                     workers: Optional[int] = None,
                     background: Optional[PointCloud] = None,
                     background_distance: float = 0.5,
                     crop_half_extent: Optional[float] = None) -> list:
    """Run the detector over frames, in parallel, preserving frame order.

    With a background cloud, static structure is subtracted per frame and
    the detector's own ground removal is skipped (the ground goes with the
    background). ``crop_half_extent`` restricts detection to the annotated
    central area (|x| and |y| below the bound).
    """
    if background is not None:
        # clouds are world-frame here and the scene ground is z=0
        cfg = dc_replace(cfg, ground_removal=False, ground_z=0.0)

    def run(cloud):
        if background is not None:
            cloud = subtract_background(cloud, background, background_distance)
        if crop_half_extent is not None and len(cloud):
            inside = np.max(np.abs(cloud.points[:, :2]), axis=1) <= crop_half_extent
            cloud = cloud.select(inside)
        return detect_frame(cloud, cfg)

    workers = workers or thread_budget()
    if workers <= 1 or len(clouds) <= 1:
        return [run(cloud) for cloud in clouds]
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, clouds))


def _fused_cloud(scene: SyntheticScene, extrinsics: dict, nodes, frame: int,
                 integrate: int = 1) -> PointCloud:
    start = max(0, frame - integrate + 1)
    frames = {}
    for node in nodes:
        stack = scene.node_frames[node][start:frame + 1]
        frames[node] = temporal_integrate(stack) if len(stack) > 1 else stack[0]
    return early_fuse(ViewFrameSet(frames=frames,
                                   extrinsics={n: extrinsics[n] for n in nodes}))


def run_view_group_experiment(scene: SyntheticScene, extrinsics: dict,
                              detector_cfg: DetectorConfig,
                              eval_cfg: DetectionEvalConfig,
                              groups: Sequence[tuple] = ((0,), (0, 2),
                                                         (0, 1, 2, 3)),
                              workers: Optional[int] = None) -> dict:
    """Detection quality per view group (the more-views-help experiment).

    Single- and double-view groups integrate enough consecutive frames to
    match the four-view per-frame point budget, tagging points with their
    frame index. Returns per-group per-class recall and AP plus the overall
    means, keyed by a "viewsA+B" group name.
    """
    annotations = scene.annotations()
    max_views = max(len(g) for g in groups)
    results = {}
    for group in groups:
        integrate = max(1, max_views // len(group))
        clouds = [_fused_cloud(scene, extrinsics, group, frame, integrate)
                  for frame in range(scene.spec.n_frames)]
        boxes_per_frame = detect_per_frame(
            clouds, detector_cfg, workers, background=scene.reference_cloud,
            crop_half_extent=0.6 * scene.spec.extent)
        detections = [(frame, box) for frame, boxes in enumerate(boxes_per_frame)
                      for box in boxes]
        per_class_recall, per_class_ap = {}, {}
        for label in ObjectClass:
            per_class_recall[label] = detection_recall(detections, annotations,
                                                       label, eval_cfg)
            per_class_ap[label] = compute_ap(detections, annotations, label,
                                             eval_cfg)
        name = "views" + "+".join(str(n) for n in group)
        results[name] = {
            "nodes": list(group),
            "frames_integrated": integrate,
            "recall": per_class_recall,
            "ap": per_class_ap,
            "overall_recall": float(np.mean(list(per_class_recall.values()))),
            "overall_ap": float(np.mean(list(per_class_ap.values()))),
        }
    return results


def run_fusion_comparison(scene: SyntheticScene, extrinsics: dict,
                          detector_cfg: DetectorConfig,
                          eval_cfg: DetectionEvalConfig,
                          overlap_threshold: float = 0.1,
                          workers: Optional[int] = None) -> dict:
    """Early fusion vs NMS/average late fusion vs single views, by AP."""
    nodes = sorted(scene.node_frames)
    annotations = scene.annotations()

    per_view_boxes = {}
    for node in nodes:
        clouds = [apply_transform(extrinsics[node],
                                  scene.node_frames[node][frame])
                  for frame in range(scene.spec.n_frames)]
        per_view_boxes[node] = detect_per_frame(
            clouds, detector_cfg, workers, background=scene.reference_cloud,
            crop_half_extent=0.6 * scene.spec.extent)

    early_clouds = [_fused_cloud(scene, extrinsics, nodes, frame)
                    for frame in range(scene.spec.n_frames)]
    early_boxes = detect_per_frame(
        early_clouds, detector_cfg, workers, background=scene.reference_cloud,
        crop_half_extent=0.6 * scene.spec.extent)

    methods = {}
    for node in nodes:
        methods[f"view {node}"] = [(f, b) for f, boxes in
                                   enumerate(per_view_boxes[node])
                                   for b in boxes]
    for method in ("nms", "average"):
        fused = []
        for frame in range(scene.spec.n_frames):
            views = [(node, per_view_boxes[node][frame]) for node in nodes]
            fused.extend((frame, box) for box in
                         late_fuse(views, overlap_threshold, method=method))
        methods[f"{method} fusion"] = fused
    methods["early fusion"] = [(f, b) for f, boxes in enumerate(early_boxes)
                               for b in boxes]

    results = {}
    for name, detections in methods.items():
        ap = {label: compute_ap(detections, annotations, label, eval_cfg)
              for label in ObjectClass}
        results[name] = {"ap": ap, "overall_ap": float(np.mean(list(ap.values())))}
    return results


# ---------------------------------------------------------------------------
# pipeline config and runner
# ---------------------------------------------------------------------------

_CLASS_BY_NAME = {c.value: c for c in ObjectClass}


def _take(section: dict, context: str, allowed: set) -> dict:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {context}: {sorted(unknown)}")
    return section


def crossroad_hierarchy() -> HierarchyConfig:
    """Registration schedule scaled to the ~44 m crossroad scenes."""
    return HierarchyConfig(levels=(HierarchyLevel(1.0, 2.0, 40),
                                   HierarchyLevel(0.4, 0.8, 60)),
                           fpfh_radius=3.0, normal_radius=2.5,
                           ransac_iterations=25_000,
                           ransac_inlier_threshold=1.5,
                           arbitration_hypotheses=48)


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    output_dir: str = "pipeline-out"
    scene_frames: int = 30
    scene_extent: float = 22.0
    scene_occluders: bool = True
    export_frames: bool = False
    hierarchy: HierarchyConfig = field(default_factory=crossroad_hierarchy)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    eval_det: DetectionEvalConfig = field(default_factory=DetectionEvalConfig)
    eval_mot: MotEvalConfig = field(default_factory=MotEvalConfig)
    sync: SessionConfig = field(default_factory=lambda: SessionConfig(
        node_count=4, duration_s=10.0))

    @staticmethod
    def from_dict(raw: dict) -> "PipelineConfig":
        _take(raw, "config", {"seed", "output_dir", "scene", "hierarchy",
                              "detector", "tracker", "eval_det", "eval_mot",
                              "sync"})
        kwargs: dict = {}
        kwargs["seed"] = int(raw.get("seed", 0))
        kwargs["output_dir"] = str(raw.get("output_dir", "pipeline-out"))

        scene = _take(dict(raw.get("scene", {})), "scene",
                      {"frames", "extent", "occluders", "export_frames"})
        kwargs["scene_frames"] = int(scene.get("frames", 30))
        kwargs["scene_extent"] = float(scene.get("extent", 22.0))
        kwargs["scene_occluders"] = bool(scene.get("occluders", True))
        kwargs["export_frames"] = bool(scene.get("export_frames", False))

        hierarchy = _take(dict(raw.get("hierarchy", {})), "hierarchy",
                          {"levels", "fpfh_radius", "normal_radius",
                           "ransac_iterations", "ransac_inlier_threshold",
                           "convergence_epsilon"})
        if "levels" in hierarchy:
            hierarchy["levels"] = tuple(HierarchyLevel(*level)
                                        for level in hierarchy["levels"])
        kwargs["hierarchy"] = HierarchyConfig(**hierarchy)

        detector = _take(dict(raw.get("detector", {})), "detector",
                         {"ground_distance_threshold",
                          "ransac_ground_iterations", "cluster_distance",
                          "min_cluster_points", "score_points_scale", "seed"})
        kwargs["detector"] = DetectorConfig(**detector)

        tracker = _take(dict(raw.get("tracker", {})), "tracker",
                        {"metric", "threshold", "min_hits", "max_age",
                         "process_noise", "measurement_noise"})
        kwargs["tracker"] = TrackerConfig(**tracker)

        eval_det = _take(dict(raw.get("eval_det", {})), "eval_det",
                         {"iou_thresholds", "recall_points"})
        if "iou_thresholds" in eval_det:
            eval_det["iou_thresholds"] = {
                _CLASS_BY_NAME[name]: float(value)
                for name, value in eval_det["iou_thresholds"].items()}
        kwargs["eval_det"] = DetectionEvalConfig(**eval_det)

        eval_mot = _take(dict(raw.get("eval_mot", {})), "eval_mot",
                         {"metric", "threshold", "prefer_previous_match"})
        kwargs["eval_mot"] = MotEvalConfig(**eval_mot)

        sync = _take(dict(raw.get("sync", {})), "sync",
                     {"node_count", "duration_s", "frame_rate_hz",
                      "delay_min_s", "delay_max_s", "drop_probability"})
        network = NetworkModel(
            delay_min_s=float(sync.pop("delay_min_s", 0.001)),
            delay_max_s=float(sync.pop("delay_max_s", 0.2)),
            drop_probability=float(sync.pop("drop_probability", 0.0)))
        kwargs["sync"] = SessionConfig(node_count=int(sync.get("node_count", 4)),
                                       duration_s=float(sync.get("duration_s", 10.0)),
                                       frame_rate_hz=float(sync.get("frame_rate_hz", 10.0)),
                                       network=network,
                                       seed=kwargs["seed"])
        try:
            return PipelineConfig(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc))

    @staticmethod
    def from_json(path) -> "PipelineConfig":
        try:
            with open(path) as handle:
                raw = json.load(handle)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load pipeline config {path}: {exc}")
        if not isinstance(raw, dict):
            raise ConfigError("pipeline config must be a JSON object")
        return PipelineConfig.from_dict(raw)


def _json_ready(value):
    if isinstance(value, dict):
        return {(k.value if isinstance(k, ObjectClass) else str(k)):
                _json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def _write_json(path, payload) -> None:
    from .formats import _atomic_write
    data = json.dumps(_json_ready(payload), sort_keys=True, indent=2) + "\n"
    _atomic_write(path, data.encode())


def export_scene(scene: SyntheticScene, directory, seed: int = 0) -> None:
    """Write a scene to disk in the CLI's on-disk layout.

    node_<i>/frame_<k>.mvlc per view (the capture), calib/node_<i>/ with
    each node's calibration pass, reference.mvlc, annotations.jsonl
    (detection records with track ids), gt_trajectories.jsonl, and the true
    extrinsics as calibration records in gt_calibration.jsonl.
    """
    os.makedirs(directory, exist_ok=True)
    for node, frames in scene.node_frames.items():
        node_dir = os.path.join(directory, f"node_{node}")
        os.makedirs(node_dir, exist_ok=True)
        for index, frame in enumerate(frames):
            write_frame(os.path.join(node_dir, f"frame_{index:05d}.mvlc"), frame)
        calib_dir = os.path.join(directory, "calib", f"node_{node}")
        os.makedirs(calib_dir, exist_ok=True)
        for index, frame in enumerate(calibration_capture(scene, node,
                                                          seed=seed)):
            write_frame(os.path.join(calib_dir, f"frame_{index:05d}.mvlc"),
                        frame)
    write_frame(os.path.join(directory, "reference.mvlc"),
                scene.reference_cloud)
    write_detections(os.path.join(directory, "annotations.jsonl"),
                     scene.annotations())
    write_trajectories(os.path.join(directory, "gt_trajectories.jsonl"),
                       scene.trajectories)
    write_calibration(os.path.join(directory, "gt_calibration.jsonl"),
                      scene.extrinsics)


def run_pipeline(cfg: PipelineConfig, output_dir: Optional[str] = None,
                 config_sha256: Optional[str] = None) -> dict:
    """Full chain on the standard crossroad scene; returns the manifest."""
    out = output_dir or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    manifest: dict = {"seed": cfg.seed, "config_sha256": config_sha256,
                      "stages": []}
    last_mark = time.monotonic()

    def stage(name):
        nonlocal last_mark
        now = time.monotonic()
        manifest["stages"].append({"name": name,
                                   "seconds": round(now - last_mark, 3)})
        last_mark = now

    spec = standard_crossroad_spec(n_frames=cfg.scene_frames, seed=cfg.seed,
                                   extent=cfg.scene_extent,
                                   with_occluders=cfg.scene_occluders)
    scene = generate_synthetic_scene(spec, seed=cfg.seed)
    if cfg.export_frames:
        export_scene(scene, os.path.join(out, "scene"))
    stage("scene")

    # spatial calibration against the reference scan, on each node's
    # pre-capture calibration pass over the static scene
    calibration: dict = {}
    fitness_report = {}
    for node in sorted(scene.node_frames):
        frames = calibration_capture(scene, node, seed=cfg.seed)
        result = calibrate_node(frames, scene.reference_cloud,
                                cfg.hierarchy, seed=cfg.seed + node,
                                reference_viewpoint=scene.reference_viewpoint)
        calibration[node] = result.transform
        fitness_report[node] = {"fitness": result.fitness,
                                "inlier_rmse": result.inlier_rmse}
    write_calibration(os.path.join(out, "calibration.jsonl"), calibration)
    stage("calibrate")

    # trigger/PPS synchronization report for the session
    trace = simulate_session(cfg.sync)
    sync_report = compute_time_error_report(trace)
    _write_json(os.path.join(out, "sync_report.json"), {
        "per_node": [{"node": s.node, "max_abs_s": s.max_abs_s,
                      "mean_abs_s": s.mean_abs_s, "std_s": s.std_s,
                      "misaligned": s.misaligned} for s in sync_report.stats],
        "max_abs_s": sync_report.max_abs_s})
    stage("sync-sim")

    # early fusion + detection on every frame, with recovered extrinsics and
    # the reference scan as the static background
    nodes = sorted(scene.node_frames)
    fused = [_fused_cloud(scene, calibration, nodes, frame)
             for frame in range(spec.n_frames)]
    boxes_per_frame = detect_per_frame(
        fused, cfg.detector, background=scene.reference_cloud,
        crop_half_extent=0.6 * spec.extent)
    detections = [(frame, box) for frame, boxes in enumerate(boxes_per_frame)
                  for box in boxes]
    write_detections(os.path.join(out, "detections.jsonl"), detections)
    stage("detect")

    trajectories = track_sequence(boxes_per_frame, cfg.tracker,
                                  frame_dt=1.0 / spec.frame_rate_hz)
    write_trajectories(os.path.join(out, "trajectories.jsonl"), trajectories)
    stage("track")

    annotations = scene.annotations()
    ap = {label: compute_ap(detections, annotations, label, cfg.eval_det)
          for label in ObjectClass}
    mot = compute_clear_mot(trajectories, scene.trajectories, cfg.eval_mot)
    view_groups = run_view_group_experiment(scene, calibration, cfg.detector,
                                            cfg.eval_det)
    fusion_methods = run_fusion_comparison(scene, calibration, cfg.detector,
                                           cfg.eval_det)
    _write_json(os.path.join(out, "metrics.json"), {
        "detection_ap": ap,
        "tracking": {"mota": mot.mota, "motp": mot.motp, "ids": mot.ids,
                     "frag": mot.frag, "fn": mot.fn, "fp": mot.fp,
                     "gt": mot.gt},
        "view_groups": view_groups,
        "fusion_methods": fusion_methods,
        "calibration_fitness": fitness_report,
    })

    report_lines = ["detection AP by view group",
                    format_ap_table({name: data["ap"]
                                     for name, data in view_groups.items()}),
                    "",
                    "detection AP by fusion method",
                    format_ap_table({name: data["ap"]
                                     for name, data in fusion_methods.items()}),
                    "",
                    "tracking (early fusion)",
                    format_mot_table({"early fusion": mot})]
    report = "\n".join(report_lines) + "\n"
    from .formats import _atomic_write
    _atomic_write(os.path.join(out, "report.txt"), report.encode())
    stage("evaluate")

    manifest["outputs"] = sorted(name for name in os.listdir(out)
                                 if name != "manifest.json")
    _write_json(os.path.join(out, "manifest.json"), manifest)
    return manifest


def config_digest(path) -> str:
    with open(path, "rb") as handle:
        return hashlib.sha256(handle.read()).hexdigest()
