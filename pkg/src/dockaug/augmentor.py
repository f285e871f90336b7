"""Generate augmented demonstrations for relocated docking poses.

Per frame the new action pose is paired with a source action pose, their
relative rigid transform is taken about the source end-effector frame, and
the labeled arm cluster (plus any carried object cluster) is re-posed by
it. Skill-segment frames are reused verbatim: action poses and gripper
commands stay bit-equal to the source, so the contact geometry is
untouched. Motion segments are replanned and retimed, which may change the
output length; the new segment table is produced alongside.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .demo_model import (
    LABEL_ARM,
    Action,
    Dataset,
    DemoFrame,
    Demonstration,
    PointCloud,
    Provenance,
    RobotState,
    validate_demo,
)
from .dock_sampler import FeasibilityReport, SamplerConfig, sample_docks
from .geometry import (
    PlanarPose,
    Pose,
    quat_conjugate,
    quat_mul,
    quat_norm_fix,
    relative_arrays,
    rotate_vectors,
)
from .motion_replanner import (
    MATCH_SOURCE_SPACING,
    PlannerConfig,
    plan_motion_segments,
    retime,
    retime_length,
    source_motion_step,
)
from .scene import Scene
from .trajectory_parser import (
    MOTION,
    SKILL,
    ParsedTrajectory,
    Segment,
    parse,
)


class LabelingError(ValueError):
    """The source cloud carries no labels the editor can act on."""


@dataclass(frozen=True, eq=False)
class AugmentationJob:
    source: Demonstration
    parsed: ParsedTrajectory
    dock: PlanarPose
    scene: Scene
    seed: int = 0
    report: FeasibilityReport | None = None
    source_id: str = "source"
    dock_id: str = "dock"
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    retime_policy: object = MATCH_SOURCE_SPACING

    def __post_init__(self):
        if self.report is not None and not self.report.accepted:
            raise ValueError(
                f"dock for {self.source_id!r} carries a rejected feasibility report"
            )


@dataclass(frozen=True, eq=False)
class _FramePlan:
    """Where each output frame comes from and what moves in its cloud."""

    actions: list  # Action per output frame
    segments: tuple  # new Segment table
    pairing: np.ndarray  # output frame -> source frame index
    moving_labels: list  # per output frame: tuple of extra label codes to re-pose
    passthrough: np.ndarray  # bool; frame is a verbatim skill-frame reuse


def _object_label(scene: Scene, object_id: str) -> int:
    return scene.object_by_id(object_id).label


def _plan_frames(job: AugmentationJob) -> _FramePlan:
    source, parsed, scene = job.source, job.parsed, job.scene
    paths = plan_motion_segments(
        source, parsed, job.dock, scene, job.planner, seed=job.seed
    )
    paths_by_segment = {p.segment_index: p for p in paths}
    median_step = source_motion_step(source, parsed)

    actions: list = []
    pairing: list = []
    moving: list = []
    passthrough: list = []
    new_segments: list = []
    carried: str | None = None
    cursor = 0

    for k, seg in enumerate(parsed.segments):
        if seg.kind == SKILL:
            for t in range(seg.start, seg.end):
                actions.append(source.frames[t].action)
                pairing.append(t)
                labels = {_object_label(scene, seg.object_id)}
                if carried is not None:
                    labels.add(_object_label(scene, carried))
                moving.append(tuple(sorted(labels)))
                passthrough.append(True)
            end_cmd = source.frames[seg.end - 1].action.gripper_cmd
            carried = seg.object_id if end_cmd == 1.0 else None
            new_segments.append(
                Segment(SKILL, cursor, cursor + len(seg), seg.object_id)
            )
            cursor += len(seg)
        else:
            path = paths_by_segment[k]
            n = retime_length(path, job.retime_policy, median_step)
            poses = retime(path, n)
            src_len = len(seg)
            seg_moving = (
                (_object_label(scene, carried),) if carried is not None else ()
            )
            for j, pose in enumerate(poses):
                f = j / (n - 1) if n > 1 else 0.0
                src_t = seg.start + int(round(f * (src_len - 1)))
                actions.append(
                    Action(pose, source.frames[src_t].action.gripper_cmd)
                )
                pairing.append(src_t)
                moving.append(seg_moving)
                passthrough.append(False)
            new_segments.append(Segment(MOTION, cursor, cursor + n))
            cursor += n

    return _FramePlan(
        actions=actions,
        segments=tuple(new_segments),
        pairing=np.asarray(pairing, dtype=np.int64),
        moving_labels=moving,
        passthrough=np.asarray(passthrough, dtype=bool),
    )


def generate_actions(job: AugmentationJob) -> tuple[list, tuple]:
    """New action sequence plus the segment table it tiles."""
    plan = _plan_frames(job)
    return plan.actions, plan.segments


def _edit_cloud(
    cloud: PointCloud, move_mask: np.ndarray, src_action: Pose, new_action: Pose
) -> PointCloud:
    # effective world map: new_action o inverse(src_action)
    q_m = quat_norm_fix(quat_mul(new_action.quaternion, quat_conjugate(src_action.quaternion)))
    t_m = new_action.position - rotate_vectors(q_m, src_action.position)
    points = cloud.points.copy()
    points[move_mask] = rotate_vectors(q_m, points[move_mask]) + t_m
    return PointCloud(points, cloud.labels, cloud.colors)


def synthesize_observation(
    job: AugmentationJob, t: int, source_frame: DemoFrame, new_action: Action
) -> tuple[PointCloud, RobotState]:
    """Synthesize one output frame's observation (convenience, per-frame).

    ``t`` indexes the output frame within the job's frame plan; batch
    generation in :func:`augment` does the same work vectorized.
    """
    plan = _plan_frames(job)
    if not (0 <= t < len(plan.actions)):
        raise IndexError(f"output frame {t} outside [0, {len(plan.actions)})")
    return _synthesize(
        source_frame, new_action, plan.moving_labels[t], bool(plan.passthrough[t])
    )


def _synthesize(
    source_frame: DemoFrame,
    new_action: Action,
    moving_labels: tuple,
    passthrough: bool,
) -> tuple[PointCloud, RobotState]:
    cloud = source_frame.cloud
    if not np.any(cloud.labels == LABEL_ARM):
        raise LabelingError("source frame cloud has no arm-labeled points")
    if passthrough:
        return cloud, source_frame.state
    src_action = source_frame.action.target_pose
    move_mask = cloud.labels == LABEL_ARM
    for code in moving_labels:
        move_mask |= cloud.labels == code
    new_cloud = _edit_cloud(cloud, move_mask, src_action, new_action.target_pose)
    dp, dq = relative_arrays(
        src_action.position,
        src_action.quaternion,
        new_action.target_pose.position,
        new_action.target_pose.quaternion,
    )
    o = source_frame.state.ee_pose
    new_pos = rotate_vectors(o.quaternion, dp) + o.position
    new_quat = quat_norm_fix(quat_mul(o.quaternion, dq))
    state = RobotState(Pose(new_pos, new_quat), source_frame.state.gripper)
    return new_cloud, state


def augment(job: AugmentationJob) -> Demonstration:
    """Build the full augmented demonstration for one accepted dock."""
    plan = _plan_frames(job)
    length = len(plan.actions)
    src_frames = [job.source.frames[int(i)] for i in plan.pairing]

    # batched pose algebra over all frames at once
    src_pos = np.stack([f.action.target_pose.position for f in src_frames])
    src_quat = np.stack([f.action.target_pose.quaternion for f in src_frames])
    new_pos = np.stack([a.target_pose.position for a in plan.actions])
    new_quat = np.stack([a.target_pose.quaternion for a in plan.actions])
    o_pos = np.stack([f.state.ee_pose.position for f in src_frames])
    o_quat = np.stack([f.state.ee_pose.quaternion for f in src_frames])
    dp, dq = relative_arrays(src_pos, src_quat, new_pos, new_quat)
    state_pos = rotate_vectors(o_quat, dp) + o_pos
    state_quat = quat_norm_fix(quat_mul(o_quat, dq))
    q_m = quat_norm_fix(quat_mul(new_quat, quat_conjugate(src_quat)))
    t_m = new_pos - rotate_vectors(q_m, src_pos)

    frames = []
    for t, action in enumerate(plan.actions):
        src = src_frames[t]
        cloud = src.cloud
        if not np.any(cloud.labels == LABEL_ARM):
            raise LabelingError("source frame cloud has no arm-labeled points")
        if plan.passthrough[t]:
            frames.append(DemoFrame(cloud, src.state, action, t))
            continue
        move_mask = cloud.labels == LABEL_ARM
        for code in plan.moving_labels[t]:
            move_mask |= cloud.labels == code
        points = cloud.points.copy()
        points[move_mask] = rotate_vectors(q_m[t], points[move_mask]) + t_m[t]
        state = RobotState(Pose(state_pos[t], state_quat[t]), src.state.gripper)
        frames.append(
            DemoFrame(PointCloud(points, cloud.labels, cloud.colors), state, action, t)
        )
    demo = Demonstration(
        frames,
        job.dock,
        job.source.scene_id,
        Provenance("augmented", job.source_id, job.dock_id),
    )
    n = len(job.source.frames[0].cloud)
    binary = all(
        f.action.gripper_cmd in (0.0, 1.0) and f.state.gripper in (0.0, 1.0)
        for f in job.source.frames
    )
    issues = validate_demo(demo, points_per_frame=n, binary_gripper=binary)
    if issues:
        raise ValueError(f"augmented demo invalid: {issues[0]}")
    return demo


# ---------------------------------------------------------------------------
# batch pipeline


@dataclass(frozen=True)
class BatchConfig:
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    threshold: float = 0.1
    min_seg_len: int = 3
    retime_policy: object = MATCH_SOURCE_SPACING
    include_sources: bool = True
    jobs: int = 1


def augment_batch(dataset: Dataset, out_root, cfg: BatchConfig, scenes: dict | None = None):
    """Parse, sample and augment every source demo; write a new dataset.

    Returns (Dataset, stats). Per-demo failures are recorded in the stats
    and the batch continues. The written directory is a pure function of
    (input dataset, cfg), so reruns are byte-identical; timing lives only
    in the stats.
    """
    from .scene import load_scene, save_scene

    t_start = time.perf_counter()
    if scenes is None:
        scenes = {
            sid: load_scene(dataset.root, sid) for sid in dataset.manifest["scenes"]
        }
    out = Dataset.create(
        out_root,
        dataset.manifest["points_per_frame"],
        dataset.manifest["binary_gripper"],
        dataset.labels,
    )
    stats = {
        "sources": [],
        "n_augmented": 0,
        "attempts": 0,
        "rejections": {"visibility": 0, "reachability": 0, "collision": 0},
        "failures": {},
        "timing_s": {"total": 0.0, "augmentations": []},
    }
    source_ids = [
        e["id"] for e in dataset.manifest["demos"] if e["provenance"]["kind"] == "source"
    ]
    jobs: list = []
    for i, sid in enumerate(sorted(source_ids)):
        try:
            source = dataset.read(sid)
            scene = scenes[source.scene_id]
            parsed = parse(source, scene, cfg.threshold, cfg.min_seg_len)
            sampler = SamplerConfig(
                n_docks=cfg.sampler.n_docks,
                range_ratio=cfg.sampler.range_ratio,
                yaw_jitter=cfg.sampler.yaw_jitter,
                seed=cfg.sampler.seed + i,
                max_attempts=cfg.sampler.max_attempts,
                min_visible_fraction=cfg.sampler.min_visible_fraction,
            )
            docks = sample_docks(scene, source, parsed, sampler, cfg.planner)
        except Exception as exc:  # per-demo isolation, batch continues
            stats["failures"][sid] = {
                "kind": type(exc).__name__,
                "error": str(exc),
            }
            continue
        stats["sources"].append(sid)
        if cfg.include_sources:
            out.add(sid, source)
        for j, (dock, report) in enumerate(docks):
            jobs.append(
                AugmentationJob(
                    source=source,
                    parsed=parsed,
                    dock=dock,
                    scene=scene,
                    seed=cfg.sampler.seed + i,
                    report=report,
                    source_id=sid,
                    dock_id=f"{sid}-d{j:02d}",
                    planner=cfg.planner,
                    retime_policy=cfg.retime_policy,
                )
            )
    results = _run_jobs(jobs, cfg.jobs)
    for job, outcome in results:
        demo_id = f"{job.source_id}-aug{job.dock_id.rsplit('-d', 1)[1]}"
        if isinstance(outcome, Exception):
            stats["failures"][demo_id] = {
                "kind": type(outcome).__name__,
                "error": str(outcome),
            }
            continue
        demo, elapsed = outcome
        out.add(demo_id, demo)
        stats["n_augmented"] += 1
        stats["timing_s"]["augmentations"].append(elapsed)
    for sid in sorted({j.source.scene_id for j in jobs} | set(dataset.manifest["scenes"])):
        if sid in scenes:
            save_scene(scenes[sid], out.root)
    out.save()
    stats["timing_s"]["total"] = time.perf_counter() - t_start
    return out, stats


def _run_one(job: AugmentationJob):
    t0 = time.perf_counter()
    demo = augment(job)
    return demo, time.perf_counter() - t0


def _run_jobs(jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        out = []
        for job in jobs:
            try:
                out.append((job, _run_one(job)))
            except Exception as exc:
                out.append((job, exc))
        return out
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_one, job) for job in jobs]
        out = []
        for job, fut in zip(jobs, futures):  # merge in submit order: deterministic
            try:
                out.append((job, fut.result()))
            except Exception as exc:
                out.append((job, exc))
        return out
