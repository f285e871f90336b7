"""Sample docking candidates and gate them on the three feasibility checks.

A candidate passes when (1) enough of the target object's points stay
visible from the fixed camera with the relocated base as an occluder,
(2) every skill-segment waypoint stays inside the reach annulus of the new
base placement, and (3) every motion segment replans collision-free and
the base footprint avoids the floorplan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .demo_model import Demonstration
from .geometry import PlanarPose, wrap_angle
from .motion_replanner import PlannerConfig, PlanningFailure, plan_motion_segments
from .scene import (
    Scene,
    base_occluder_box,
    disk_hits_polygon,
    quat_to_matrix,
    segment_hits_shape,
    segments_hit_shape,
)
from .trajectory_parser import SKILL, ParsedTrajectory, first_frame_centroids


@dataclass(frozen=True)
class SamplerConfig:
    n_docks: int = 4
    range_ratio: tuple = (0.8, 1.2)
    yaw_jitter: float = 0.35
    seed: int = 0
    max_attempts: int = 128
    min_visible_fraction: float = 0.5

    def __post_init__(self):
        lo, hi = self.range_ratio
        if not (0.0 < lo <= hi):
            raise ValueError(f"range_ratio must satisfy 0 < lo <= hi, got {self.range_ratio}")
        if self.n_docks < 1:
            raise ValueError("n_docks must be at least 1")


@dataclass(frozen=True, eq=False)
class FeasibilityReport:
    dock: PlanarPose
    visibility_pass: bool
    visible_fraction: float
    reachability_pass: bool
    reach_margin: float
    collision_pass: bool
    failing_segment: int | None
    accepted: bool

    def to_json(self) -> dict:
        return {
            "dock": {"x": self.dock.x, "y": self.dock.y, "yaw": self.dock.yaw},
            "visibility": {"pass": self.visibility_pass, "fraction": self.visible_fraction},
            "reachability": {"pass": self.reachability_pass, "margin": self.reach_margin},
            "collision_free": {"pass": self.collision_pass, "failing_segment": self.failing_segment},
            "accepted": self.accepted,
        }


class FeasibilityExhaustion(RuntimeError):
    def __init__(self, attempts: int, histogram: dict):
        parts = ", ".join(f"{k}={v}" for k, v in sorted(histogram.items()))
        super().__init__(
            f"no feasible dock after {attempts} attempts (failures: {parts})"
        )
        self.attempts = attempts
        self.histogram = dict(histogram)


def check_visibility(
    scene: Scene, dock: PlanarPose, target_id: str, min_fraction: float
) -> tuple[bool, float]:
    """Fraction of target points in-frustum and unoccluded from the camera."""
    target = scene.object_by_id(target_id)
    pts = target.points
    cam = scene.camera
    rot = quat_to_matrix(cam.pose.quaternion)
    local = (pts - cam.pose.position) @ rot  # camera frame, +z forward
    z = local[:, 2]
    with np.errstate(invalid="ignore"):
        in_frustum = (
            (z > 1e-9)
            & (np.abs(np.arctan2(local[:, 0], z)) <= cam.h_fov / 2.0)
            & (np.abs(np.arctan2(local[:, 1], z)) <= cam.v_fov / 2.0)
        )
    occluders = [
        obj.shape for obj in scene.objects if obj.id != target_id and obj.shape is not None
    ]
    occluders.append(base_occluder_box(scene, dock))
    starts = np.broadcast_to(cam.pose.position, pts.shape)
    # stop each ray just short of its endpoint so the target's own surface
    # resting on an occluder does not count as occluded
    ends = cam.pose.position + 0.999 * (pts - cam.pose.position)
    occluded = np.zeros(len(pts), dtype=bool)
    for shape in occluders:
        occluded |= segments_hit_shape(shape, starts, ends, 0.0)
    visible = in_frustum & ~occluded
    fraction = float(np.count_nonzero(visible)) / max(1, len(pts))
    return fraction >= min_fraction, fraction


def check_reachability(
    scene: Scene, dock: PlanarPose, parsed: ParsedTrajectory, demo: Demonstration
) -> tuple[bool, float]:
    """Min margin of skill-segment waypoints to the reach annulus boundary."""
    ws = scene.workspace
    margin = math.inf
    base_xy = np.array([dock.x, dock.y])
    for seg in parsed.segments:
        if seg.kind != SKILL:
            continue
        for t in range(seg.start, seg.end):
            p = demo.frames[t].action.target_pose.position
            r = float(np.linalg.norm(p[:2] - base_xy))
            z = float(p[2]) - scene.base.height
            margin = min(margin, r - ws.r_min, ws.r_max - r, z - ws.z_min, ws.z_max - z)
    if math.isinf(margin):
        margin = -math.inf
    return margin > 0.0, margin


def check_collision_free(
    scene: Scene, dock: PlanarPose, candidate_motion_paths, clearance: float = 0.025
) -> tuple[bool, int | None]:
    """Paths keep the ee clear of inflated shapes; footprint avoids walls."""
    for polygon in scene.floorplan:
        if disk_hits_polygon(polygon, (dock.x, dock.y), scene.base.footprint_radius):
            return False, None
    for path in candidate_motion_paths:
        wps = [w.position for w in path.waypoints]
        legs = max(1, len(wps) - 1)
        for i in range(legs):
            a = wps[i]
            b = wps[min(i + 1, len(wps) - 1)]
            for obj in scene.objects:
                if obj.shape is None:
                    continue
                if segment_hits_shape(obj.shape, a, b, clearance):
                    return False, path.segment_index
    return True, None


def evaluate_dock(
    scene: Scene,
    source: Demonstration,
    parsed: ParsedTrajectory,
    dock: PlanarPose,
    target_id: str,
    cfg: SamplerConfig,
    planner: PlannerConfig,
    seed: int,
) -> FeasibilityReport:
    vis_ok, fraction = check_visibility(scene, dock, target_id, cfg.min_visible_fraction)
    reach_ok, margin = check_reachability(scene, dock, parsed, source)
    col_ok, failing = False, None
    if reach_ok:
        try:
            paths = plan_motion_segments(source, parsed, dock, scene, planner, seed=seed)
        except PlanningFailure as exc:
            col_ok, failing = False, exc.segment_index
        else:
            col_ok, failing = check_collision_free(scene, dock, paths, planner.clearance)
    return FeasibilityReport(
        dock=dock,
        visibility_pass=vis_ok,
        visible_fraction=fraction,
        reachability_pass=reach_ok,
        reach_margin=margin,
        collision_pass=col_ok,
        failing_segment=failing,
        accepted=vis_ok and reach_ok and col_ok,
    )


def primary_target(parsed: ParsedTrajectory) -> str:
    for seg in parsed.segments:
        if seg.kind == SKILL:
            return seg.object_id
    raise ValueError("parsed trajectory has no skill segment")


def sample_docks(
    scene: Scene,
    source: Demonstration,
    parsed: ParsedTrajectory,
    cfg: SamplerConfig,
    planner: PlannerConfig | None = None,
) -> list:
    """Draw candidates around the target until n_docks are accepted.

    Candidates keep the source's polar placement around the target object:
    radius scaled by U(lo, hi), polar angle and facing yaw jittered by
    U(-yaw_jitter, +yaw_jitter). Deterministic given cfg.seed.
    """
    planner = planner or PlannerConfig()
    target_id = primary_target(parsed)
    centers = first_frame_centroids(source, scene)
    if target_id not in centers:
        raise ValueError(f"target object {target_id!r} has no first-frame points")
    cx, cy = centers[target_id][:2]
    dx = source.docking.x - cx
    dy = source.docking.y - cy
    src_dist = math.hypot(dx, dy)
    src_angle = math.atan2(dy, dx)

    rng = np.random.default_rng(cfg.seed)
    accepted: list = []
    histogram = {"visibility": 0, "reachability": 0, "collision": 0}
    lo, hi = cfg.range_ratio
    attempts = 0
    while len(accepted) < cfg.n_docks:
        if attempts >= cfg.max_attempts:
            raise FeasibilityExhaustion(attempts, histogram)
        attempts += 1
        radius = src_dist * rng.uniform(lo, hi)
        angle = src_angle + rng.uniform(-cfg.yaw_jitter, cfg.yaw_jitter)
        x = cx + radius * math.cos(angle)
        y = cy + radius * math.sin(angle)
        yaw = wrap_angle(
            math.atan2(cy - y, cx - x) + rng.uniform(-cfg.yaw_jitter, cfg.yaw_jitter)
        )
        dock = PlanarPose(x, y, yaw)
        report = evaluate_dock(
            scene, source, parsed, dock, target_id, cfg, planner, cfg.seed
        )
        if report.accepted:
            accepted.append((dock, report))
        else:
            if not report.visibility_pass:
                histogram["visibility"] += 1
            if not report.reachability_pass:
                histogram["reachability"] += 1
            if report.reachability_pass and not report.collision_pass:
                histogram["collision"] += 1
    return accepted
