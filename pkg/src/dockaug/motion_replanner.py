"""Regenerate motion segments between skill segments for a relocated base.

Three planning tiers, all deterministic: straight-line SE(3) interpolation,
then a single lift-over via-point above the blocking obstacle, then a
seeded sampling search over via-points in the reach volume ordered by path
length. Paths are collision-checked continuously (segment vs. inflated
shape), which is strictly stronger than any discrete sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .demo_model import Demonstration
from .geometry import (
    PlanarPose,
    Pose,
    compose,
    inverse,
    planar_to_world,
    quat_angle,
    slerp,
)
from .scene import Scene, segment_hits_shape
from .trajectory_parser import MOTION, ParsedTrajectory

MATCH_SOURCE_SPACING = "match"


class PlanningFailure(RuntimeError):
    def __init__(self, message: str, shape_id: str | None = None, segment_index: int = -1):
        super().__init__(message)
        self.shape_id = shape_id
        self.segment_index = segment_index


@dataclass(frozen=True)
class PlannerConfig:
    max_step: float = 0.02
    max_rot_step: float = 0.1
    clearance: float = 0.025
    max_iters: int = 200
    ignore_collisions: bool = False  # test hook for negative controls


@dataclass(frozen=True, eq=False)
class MotionPath:
    waypoints: tuple
    segment_index: int

    def __post_init__(self):
        object.__setattr__(self, "waypoints", tuple(self.waypoints))
        if not self.waypoints:
            raise ValueError("a motion path needs at least one waypoint")

    @property
    def start(self) -> Pose:
        return self.waypoints[0]

    @property
    def goal(self) -> Pose:
        return self.waypoints[-1]

    def positions(self) -> np.ndarray:
        return np.stack([w.position for w in self.waypoints])

    def arc_length(self) -> float:
        pos = self.positions()
        if len(pos) < 2:
            return 0.0
        return float(np.sum(np.linalg.norm(np.diff(pos, axis=0), axis=1)))


def _interpolate(start: Pose, goal: Pose, cfg: PlannerConfig) -> list:
    dist = float(np.linalg.norm(goal.position - start.position))
    ang = quat_angle(start.quaternion, goal.quaternion)
    steps = max(
        int(math.ceil(dist / cfg.max_step)), int(math.ceil(ang / cfg.max_rot_step)), 1
    )
    ts = np.linspace(0.0, 1.0, steps + 1)
    poses = [start]
    for t in ts[1:-1]:
        pos = (1.0 - t) * start.position + t * goal.position
        poses.append(Pose(pos, slerp(start.quaternion, goal.quaternion, float(t))))
    poses.append(goal)
    return poses


def _first_collision(scene: Scene, waypoints: list, clearance: float):
    """(shape_id, shape) of the first segment-shape hit, or None."""
    for i in range(max(1, len(waypoints)) - 1):
        a = waypoints[i].position
        b = waypoints[i + 1].position
        for obj in scene.objects:
            if obj.shape is None:
                continue
            if segment_hits_shape(obj.shape, a, b, clearance):
                return obj.id, obj.shape
    if len(waypoints) == 1:
        p = waypoints[0].position
        for obj in scene.objects:
            if obj.shape is not None and segment_hits_shape(obj.shape, p, p, clearance):
                return obj.id, obj.shape
    return None


def replan(
    start: Pose,
    goal: Pose,
    scene: Scene,
    dock: PlanarPose,
    cfg: PlannerConfig | None = None,
    seed: int = 0,
    segment_index: int = 0,
) -> MotionPath:
    """Plan an end-effector path from start to goal, base fixed at dock."""
    cfg = cfg or PlannerConfig()
    same = float(np.linalg.norm(goal.position - start.position)) < 1e-12 and (
        quat_angle(start.quaternion, goal.quaternion) < 1e-12
    )
    if same:
        waypoints = [start]
    else:
        waypoints = _interpolate(start, goal, cfg)
    if cfg.ignore_collisions:
        return MotionPath(tuple(waypoints), segment_index)
    hit = _first_collision(scene, waypoints, cfg.clearance)
    if hit is None:
        return MotionPath(tuple(waypoints), segment_index)

    # tier 2: lift over the top of whatever blocks the straight line
    blocked_tops = [
        obj.shape.top_z() + 2.0 * cfg.clearance
        for obj in scene.objects
        if obj.shape is not None
        and segment_hits_shape(obj.shape, start.position, goal.position, cfg.clearance)
    ]
    if blocked_tops:
        mid = 0.5 * (start.position + goal.position)
        via_pos = np.array([mid[0], mid[1], max(blocked_tops)])
        via = Pose(via_pos, slerp(start.quaternion, goal.quaternion, 0.5))
        candidate = _interpolate(start, via, cfg) + _interpolate(via, goal, cfg)[1:]
        if _first_collision(scene, candidate, cfg.clearance) is None:
            return MotionPath(tuple(candidate), segment_index)

    # tier 3: seeded via-point sampling in the reach volume, best-first by length
    rng = np.random.default_rng(seed)
    ws = scene.workspace
    base = planar_to_world(dock, scene.base.height)
    candidates = []
    for _ in range(cfg.max_iters):
        r = rng.uniform(ws.r_min, ws.r_max)
        theta = rng.uniform(-math.pi, math.pi)
        z = rng.uniform(ws.z_min, ws.z_max)
        via_pos = base.position + np.array([r * math.cos(theta), r * math.sin(theta), z])
        length = float(
            np.linalg.norm(via_pos - start.position)
            + np.linalg.norm(goal.position - via_pos)
        )
        candidates.append((length, via_pos))
    candidates.sort(key=lambda c: c[0])
    for _, via_pos in candidates:
        via = Pose(via_pos, slerp(start.quaternion, goal.quaternion, 0.5))
        candidate = _interpolate(start, via, cfg) + _interpolate(via, goal, cfg)[1:]
        if _first_collision(scene, candidate, cfg.clearance) is None:
            return MotionPath(tuple(candidate), segment_index)

    raise PlanningFailure(
        f"no collision-free path for motion segment {segment_index} "
        f"(blocked by {hit[0]!r})",
        shape_id=hit[0],
        segment_index=segment_index,
    )


def retime(path: MotionPath, target_len: int) -> list:
    """Arc-length-uniform resampling to target_len poses, endpoints exact."""
    if target_len < 2:
        raise ValueError("target_len must be at least 2")
    wps = list(path.waypoints)
    if len(wps) == 1:
        wps = [wps[0], wps[0]]
    pos = np.stack([w.position for w in wps])
    seg_len = np.linalg.norm(np.diff(pos, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = float(cum[-1])
    out = [wps[0]]
    for i in range(1, target_len - 1):
        s = total * i / (target_len - 1)
        if total < 1e-12:
            # no translation: interpolate by index instead
            f = i / (target_len - 1) * (len(wps) - 1)
            j = min(int(f), len(wps) - 2)
            u = f - j
        else:
            j = int(np.searchsorted(cum, s, side="right") - 1)
            j = min(max(j, 0), len(wps) - 2)
            u = (s - cum[j]) / seg_len[j] if seg_len[j] > 1e-300 else 0.0
        p = (1.0 - u) * pos[j] + u * pos[j + 1]
        q = slerp(wps[j].quaternion, wps[j + 1].quaternion, float(u))
        out.append(Pose(p, q))
    out.append(wps[-1])
    return out


def source_motion_step(demo: Demonstration, parsed: ParsedTrajectory) -> float:
    """Median translation step inside the source's motion segments."""
    steps = []
    for seg in parsed.motion_segments():
        for t in range(seg.start, seg.end - 1):
            a = demo.frames[t].action.target_pose.position
            b = demo.frames[t + 1].action.target_pose.position
            steps.append(float(np.linalg.norm(b - a)))
    if not steps:
        return 0.02
    return float(np.median(steps))


def retime_length(path: MotionPath, policy, median_step: float) -> int:
    """Waypoint count for a policy: int => fixed, "match" => source spacing."""
    if isinstance(policy, int):
        return max(2, policy)
    if policy == MATCH_SOURCE_SPACING:
        arc = path.arc_length()
        if median_step <= 1e-12 or arc <= 1e-12:
            return max(2, len(path.waypoints))
        return max(2, int(math.ceil(arc / median_step)) + 1)
    raise ValueError(f"unknown retime policy {policy!r}")


def relocated_home_pose(source: Demonstration, dock: PlanarPose, base_height: float) -> Pose:
    """The source's initial ee pose, re-expressed at a new base placement."""
    src_base = planar_to_world(source.docking, base_height)
    new_base = planar_to_world(dock, base_height)
    local = compose(inverse(src_base), source.frames[0].state.ee_pose)
    return compose(new_base, local)


def _segment_boundaries(source: Demonstration, parsed: ParsedTrajectory, dock: PlanarPose, scene: Scene):
    """(start, goal, index) per motion segment, in trajectory order."""
    frames = source.frames
    current = relocated_home_pose(source, dock, scene.base.height)
    out = []
    segs = parsed.segments
    for k, seg in enumerate(segs):
        if seg.kind != MOTION:
            current = frames[seg.end - 1].action.target_pose
            continue
        if k + 1 < len(segs):
            goal = frames[segs[k + 1].start].action.target_pose
        else:
            # trailing motion: head to the source's final target, base-relative
            src_base = planar_to_world(source.docking, scene.base.height)
            new_base = planar_to_world(dock, scene.base.height)
            local = compose(inverse(src_base), frames[-1].action.target_pose)
            goal = compose(new_base, local)
        out.append((current, goal, k))
        current = goal
    return out


def plan_motion_segments(
    source: Demonstration,
    parsed: ParsedTrajectory,
    dock: PlanarPose,
    scene: Scene,
    cfg: PlannerConfig | None = None,
    seed: int = 0,
) -> list:
    """Replan every motion segment for a dock; raises PlanningFailure."""
    cfg = cfg or PlannerConfig()
    paths = []
    for start, goal, k in _segment_boundaries(source, parsed, dock, scene):
        paths.append(replan(start, goal, scene, dock, cfg, seed=seed, segment_index=k))
    return paths
