"""Desk-scale kinematic world: scripted demos, replay checks, 1-NN eval.

The world is purely kinematic (no dynamics or friction): the end-effector
teleports to each commanded pose subject to a reach-annulus limit, grasps
bind the nearest object within a radius on a rising gripper edge, and held
objects track the gripper with a fixed offset. Replay therefore verifies
geometric and logical consistency of a demonstration, not physics.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .demo_model import (
    LABEL_ARM,
    LABEL_OTHER,
    Action,
    DemoFrame,
    Demonstration,
    PointCloud,
    Provenance,
    RobotState,
)
from .geometry import (
    PlanarPose,
    Pose,
    compose,
    inverse,
    matrix_to_quat,
    planar_to_world,
    quat_from_axis_angle,
    quat_from_yaw,
    quat_mul,
    quat_norm_fix,
    slerp,
)
from .pointcloud_ops import Aabb, concat, crop_aabb, fps_downsample
from .scene import (
    BaseModel,
    CameraModel,
    Scene,
    SceneObject,
    SphereShape,
    Workspace,
    disk_hits_polygon,
    points_in_shape,
)

GRASP_RADIUS = 0.05
HOME_OFFSET_POS = np.array([0.35, 0.0, 0.05])  # in the base frame
HOME_OFFSET_TILT = 0.3  # pitch of the gripper at home, radians
FEATURE_VERSION = "dockaug-nn-features-v1"

_GRIPPER_POINTS = 128
_OBJECT_POINTS = 64
_SURFACE_POINTS = 1100
_SPILL_POINTS = 80


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """Camera pose with +z toward target, +x right, +y down (OpenCV)."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward = forward / np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    rot = np.stack([right, down, forward], axis=1)
    return Pose(eye, matrix_to_quat(rot))


def _scene_seed(scene_id: str) -> int:
    return zlib.crc32(scene_id.encode())


def _sphere_cluster(center, radius: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    # fibonacci sphere plus a little jitter
    i = np.arange(_OBJECT_POINTS, dtype=np.float64)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    z = 1.0 - 2.0 * (i + 0.5) / _OBJECT_POINTS
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    pts = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    pts = pts * radius + rng.normal(scale=0.002, size=(_OBJECT_POINTS, 3))
    return np.asarray(center, dtype=np.float64) + pts


def _ring_cluster(center, radius: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    theta = np.linspace(0.0, 2.0 * math.pi, _OBJECT_POINTS, endpoint=False)
    z = rng.uniform(0.0, 0.05, size=_OBJECT_POINTS)
    pts = np.stack(
        [radius * np.cos(theta), radius * np.sin(theta), z], axis=1
    ) + rng.normal(scale=0.002, size=(_OBJECT_POINTS, 3))
    return np.asarray(center, dtype=np.float64) + pts


def gripper_template(seed: int) -> np.ndarray:
    """Two finger slabs plus a palm, in the end-effector frame."""
    rng = np.random.default_rng(seed)
    n_finger = _GRIPPER_POINTS * 3 // 8
    n_palm = _GRIPPER_POINTS - 2 * n_finger
    parts = []
    for side in (-1.0, 1.0):
        pts = np.stack(
            [
                rng.uniform(0.015, 0.055, size=n_finger),
                side * rng.uniform(0.012, 0.022, size=n_finger),
                rng.uniform(-0.012, 0.012, size=n_finger),
            ],
            axis=1,
        )
        parts.append(pts)
    palm = np.stack(
        [
            rng.uniform(-0.03, 0.015, size=n_palm),
            rng.uniform(-0.03, 0.03, size=n_palm),
            rng.uniform(-0.02, 0.02, size=n_palm),
        ],
        axis=1,
    )
    parts.append(palm)
    return np.concatenate(parts)


def _surface_template(seed: int) -> tuple[np.ndarray, np.ndarray]:
    """(desk points kept by the crop, spill points the crop removes)."""
    rng = np.random.default_rng(seed)
    desk = np.stack(
        [
            rng.uniform(-0.45, 0.55, size=_SURFACE_POINTS),
            rng.uniform(-0.5, 0.5, size=_SURFACE_POINTS),
            rng.normal(scale=0.001, size=_SURFACE_POINTS),
        ],
        axis=1,
    )
    spill = np.stack(
        [
            rng.uniform(-0.6, 0.7, size=_SPILL_POINTS),
            rng.uniform(-0.6, 0.6, size=_SPILL_POINTS),
            rng.uniform(-0.3, -0.1, size=_SPILL_POINTS),
        ],
        axis=1,
    )
    return desk, spill


def default_crop() -> Aabb:
    return Aabb([-0.7, -0.7, -0.02], [0.8, 0.7, 0.9])


# ---------------------------------------------------------------------------
# bundled scenes


def bundled_scene(name: str) -> Scene:
    if name in ("pick", "pick_desk"):
        return _pick_scene()
    if name in ("place", "place_desk"):
        return _place_scene()
    raise KeyError(f"no bundled scene named {name!r}")


def _pick_scene() -> Scene:
    seed = _scene_seed("pick_desk")
    banana = SceneObject(
        "banana",
        2,
        _sphere_cluster([0.0, 0.0, 0.03], 0.03, seed + 1),
        SphereShape([0.0, 0.0, 0.03], 0.025),
    )
    rock = SceneObject(
        "rock",
        3,
        _sphere_cluster([-0.22, -0.13, 0.05], 0.05, seed + 2),
        SphereShape([-0.22, -0.13, 0.05], 0.05),
    )
    return Scene(
        id="pick_desk",
        objects=(banana, rock),
        camera=CameraModel(look_at([0.85, -0.55, 0.95], [-0.05, 0.0, 0.05]), 1.4, 1.1),
        workspace=Workspace(0.22, 0.80, -0.29, 0.55),
        base=BaseModel(0.3, (0.08, 0.08, 0.15), 0.12),
        floorplan=(np.array([[-1.6, -1.2], [-1.5, -1.2], [-1.5, 1.2], [-1.6, 1.2]]),),
        task={"kind": "pick_lift", "target": "banana", "dz": 0.05},
    )


def _place_scene() -> Scene:
    seed = _scene_seed("place_desk")
    can = SceneObject(
        "can",
        2,
        _sphere_cluster([0.0, 0.05, 0.03], 0.03, seed + 1),
        SphereShape([0.0, 0.05, 0.03], 0.025),
    )
    # the bin must stay inside the reach annulus of every plausible dock
    bin_center = np.array([0.20, -0.15, 0.0])
    bin_obj = SceneObject(
        "bin", 3, _ring_cluster([0.20, -0.15, 0.02], 0.06, seed + 2), None
    )
    rock = SceneObject(
        "rock",
        4,
        _sphere_cluster([-0.2, -0.16, 0.045], 0.045, seed + 3),
        SphereShape([-0.2, -0.16, 0.045], 0.045),
    )
    region = {
        "min": list(bin_center + np.array([-0.08, -0.08, 0.0])),
        "max": list(bin_center + np.array([0.08, 0.08, 0.14])),
    }
    return Scene(
        id="place_desk",
        objects=(can, bin_obj, rock),
        camera=CameraModel(look_at([0.85, 0.6, 0.95], [0.1, -0.05, 0.05]), 1.4, 1.1),
        workspace=Workspace(0.22, 0.85, -0.29, 0.55),
        base=BaseModel(0.3, (0.08, 0.08, 0.15), 0.12),
        floorplan=(np.array([[-1.6, -1.2], [-1.5, -1.2], [-1.5, 1.2], [-1.6, 1.2]]),),
        task={"kind": "place_into", "target": "can", "region": region},
    )


def source_dock(scene: Scene, distance: float = 0.55, angle: float = math.pi) -> PlanarPose:
    """A dock on the sampling ring, facing the task target."""
    target = scene.object_by_id(scene.task["target"])
    cx, cy = target.points.mean(axis=0)[:2]
    x = cx + distance * math.cos(angle)
    y = cy + distance * math.sin(angle)
    return PlanarPose(x, y, math.atan2(cy - y, cx - x))


# ---------------------------------------------------------------------------
# tasks


@dataclass(frozen=True, eq=False)
class SuccessPredicate:
    kind: str  # pick_lift | place_into | reach_pose
    target: str | None = None
    dz: float = 0.05
    region: Aabb | None = None
    pose: Pose | None = None
    tol: float = 0.02

    def __post_init__(self):
        if self.kind not in ("pick_lift", "place_into", "reach_pose"):
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.kind == "pick_lift" and self.dz <= 0:
            raise ValueError("dz must be positive")
        if self.kind == "reach_pose" and self.tol <= 0:
            raise ValueError("tol must be positive")


def task_from_scene(scene: Scene) -> SuccessPredicate:
    spec = scene.task
    if spec is None:
        raise ValueError(f"scene {scene.id!r} declares no task")
    if spec["kind"] == "pick_lift":
        return SuccessPredicate("pick_lift", spec["target"], dz=spec.get("dz", 0.05))
    if spec["kind"] == "place_into":
        region = Aabb(spec["region"]["min"], spec["region"]["max"])
        return SuccessPredicate("place_into", spec["target"], region=region)
    if spec["kind"] == "reach_pose":
        return SuccessPredicate(
            "reach_pose",
            None,
            pose=Pose(spec["pose"]["position"], spec["pose"]["quaternion"]),
            tol=spec.get("tol", 0.02),
        )
    raise ValueError(f"unknown task kind {spec['kind']!r}")


# ---------------------------------------------------------------------------
# the kinematic world


@dataclass(eq=False)
class KinematicWorld:
    scene: Scene
    ee: Pose
    gripper: float = 0.0
    held: str | None = None
    held_offset: Pose | None = None
    object_poses: dict = field(default_factory=dict)  # id -> initial->current map

    def object_centroid(self, object_id: str) -> np.ndarray:
        obj = self.scene.object_by_id(object_id)
        initial = obj.points.mean(axis=0)
        pose = self.object_poses.get(object_id)
        return pose.apply(initial) if pose is not None else initial

    def object_points(self, object_id: str) -> np.ndarray:
        obj = self.scene.object_by_id(object_id)
        pose = self.object_poses.get(object_id)
        return pose.apply(obj.points) if pose is not None else obj.points.copy()


def world_from_scene(scene: Scene, ee: Pose | None = None) -> KinematicWorld:
    return KinematicWorld(scene=scene, ee=ee if ee is not None else Pose.identity())


def home_pose(scene: Scene, dock: PlanarPose) -> Pose:
    base = planar_to_world(dock, scene.base.height)
    offset = Pose(HOME_OFFSET_POS, quat_from_axis_angle([0, 1, 0], HOME_OFFSET_TILT))
    return compose(base, offset)


def in_reach(scene: Scene, dock: PlanarPose, position: np.ndarray) -> bool:
    ws = scene.workspace
    r = math.hypot(position[0] - dock.x, position[1] - dock.y)
    z = float(position[2]) - scene.base.height
    return ws.r_min <= r <= ws.r_max and ws.z_min <= z <= ws.z_max


def step_world(
    world: KinematicWorld,
    action: Action,
    dock: PlanarPose,
    exclude: set | None = None,
    t: int = -1,
) -> list:
    """Advance the world by one commanded action; returns event tuples."""
    events = []
    target = action.target_pose
    if in_reach(world.scene, dock, target.position):
        world.ee = target
    else:
        events.append(("reach", t, None))
    cmd = 1.0 if action.gripper_cmd >= 0.5 else 0.0
    if cmd == 1.0 and world.gripper == 0.0:
        nearest, dist = None, math.inf
        for obj in world.scene.objects:
            d = float(np.linalg.norm(world.object_centroid(obj.id) - world.ee.position))
            if d < dist:
                nearest, dist = obj.id, d
        if nearest is not None and dist <= GRASP_RADIUS:
            world.held = nearest
            current = world.object_poses.get(nearest, Pose.identity())
            world.held_offset = compose(inverse(world.ee), current)
            events.append(("grasp", t, nearest))
        else:
            events.append(("grasp_miss", t, None))
    elif cmd == 0.0 and world.gripper == 1.0 and world.held is not None:
        events.append(("release", t, world.held))
        world.held = None
        world.held_offset = None
    world.gripper = cmd
    if world.held is not None:
        world.object_poses[world.held] = compose(world.ee, world.held_offset)
    excluded = exclude or set()
    if world.held is not None:
        excluded = excluded | {world.held}
    for obj in world.scene.objects:
        if obj.id in excluded or obj.shape is None:
            continue
        shape = obj.shape
        pose = world.object_poses.get(obj.id)
        center_shift = pose.apply(shape.center) if pose is not None else None
        if isinstance(shape, SphereShape) and center_shift is not None:
            shape = SphereShape(center_shift, shape.radius)
        if bool(points_in_shape(shape, world.ee.position, 0.0)[0]):
            events.append(("collision", t, obj.id))
    return events


# ---------------------------------------------------------------------------
# replay


@dataclass(frozen=True, eq=False)
class ReplayReport:
    success: bool
    events: tuple
    collisions: int
    reach_violations: int
    max_step_jump: float
    grasp_log: tuple

    def clean_success(self) -> bool:
        return self.success and self.collisions == 0 and self.reach_violations == 0


def _predicate_holds(task: SuccessPredicate, world: KinematicWorld, scene: Scene) -> bool:
    if task.kind == "pick_lift":
        initial = scene.object_by_id(task.target).points.mean(axis=0)
        current = world.object_centroid(task.target)
        return bool(world.held == task.target and current[2] - initial[2] >= task.dz)
    if task.kind == "place_into":
        current = world.object_centroid(task.target)
        inside = bool(task.region.contains(current[None, :])[0])
        return bool(world.held != task.target and inside)
    return float(np.linalg.norm(world.ee.position - task.pose.position)) <= task.tol


def replay(world: KinematicWorld, demo: Demonstration, task: SuccessPredicate) -> ReplayReport:
    """Step the demo's actions through the world and judge the task."""
    if demo.scene_id != world.scene.id:
        raise ValueError(
            f"demo scene {demo.scene_id!r} does not match world scene {world.scene.id!r}"
        )
    dock = demo.docking
    events: list = []
    for polygon in world.scene.floorplan:
        if disk_hits_polygon(polygon, (dock.x, dock.y), world.scene.base.footprint_radius):
            events.append(("collision", -1, "base_footprint"))
    world.ee = demo.frames[0].state.ee_pose
    exclude = {task.target} if task.target else set()
    max_jump = 0.0
    prev = world.ee.position
    for frame in demo.frames:
        target = frame.action.target_pose.position
        max_jump = max(max_jump, float(np.linalg.norm(target - prev)))
        events.extend(step_world(world, frame.action, dock, exclude, frame.t))
        prev = world.ee.position
    success = _predicate_holds(task, world, world.scene)
    grasp_log = tuple(e for e in events if e[0] in ("grasp", "grasp_miss", "release"))
    return ReplayReport(
        success=success,
        events=tuple(events),
        collisions=sum(1 for e in events if e[0] == "collision"),
        reach_violations=sum(1 for e in events if e[0] == "reach"),
        max_step_jump=max_jump,
        grasp_log=grasp_log,
    )


# ---------------------------------------------------------------------------
# observation rendering


def render_cloud(world: KinematicWorld, crop: Aabb | None = None) -> PointCloud:
    """Synthesize the labeled scene cloud for the current world state."""
    scene = world.scene
    seed = _scene_seed(scene.id)
    desk, spill = _surface_template(seed + 100)
    parts = [
        PointCloud(
            np.concatenate([desk, spill]),
            np.full(len(desk) + len(spill), LABEL_OTHER, dtype=np.uint8),
        )
    ]
    for obj in scene.objects:
        parts.append(
            PointCloud(
                world.object_points(obj.id),
                np.full(len(obj.points), obj.label, dtype=np.uint8),
            )
        )
    grip = world.ee.apply(gripper_template(seed + 200))
    parts.append(PointCloud(grip, np.full(len(grip), LABEL_ARM, dtype=np.uint8)))
    cloud = concat(parts)
    return crop_aabb(cloud, crop or default_crop())


# ---------------------------------------------------------------------------
# scripted demonstrations


def script_waypoints(scene: Scene, task: SuccessPredicate, dock: PlanarPose, noise_seed: int):
    """The teleop stand-in: waypoints, gripper commands and a phase log."""
    rng = np.random.default_rng(noise_seed)

    def jitter(p):
        return np.asarray(p, dtype=np.float64) + np.clip(
            rng.normal(scale=0.002, size=3), -0.005, 0.005
        )

    target = scene.object_by_id(task.target)
    center = target.points.mean(axis=0)
    face = math.atan2(center[1] - dock.y, center[0] - dock.x)
    q_travel = quat_norm_fix(
        quat_mul(quat_from_yaw(face), quat_from_axis_angle([0, 1, 0], 0.35))
    )
    q_grasp = quat_norm_fix(
        quat_mul(quat_from_yaw(face), quat_from_axis_angle([0, 1, 0], 1.1))
    )
    home = home_pose(scene, dock)
    home = Pose(jitter(home.position), home.quaternion)

    wps: list = []  # (pose, cmd, phase, dwell, step hint)

    def add(pos, quat, cmd, phase, dwell=1, step=None):
        wps.append((Pose(pos, quat), float(cmd), phase, dwell, step))

    # dwell=1 throughout: repeated identical states would give a matching
    # policy a fixed point right before every phase transition
    add(home.position, home.quaternion, 0, "approach")
    add(jitter(center + [0.0, 0.0, 0.20]), q_travel, 0, "approach")
    # fine steps on the descent: the boundary frame's action pose is the
    # motion replanner's goal and must clear the inflated collision shape
    grasp = jitter(center + [0.0, 0.0, 0.012])
    add(grasp, q_grasp, 0, "approach", step=0.012)
    add(grasp, q_grasp, 1, "grasp")
    if task.kind == "pick_lift":
        # the lifted ee stays inside the 0.1 m contact sphere of the initial
        # object center so the tail still parses as one skill segment
        lift = grasp + [0.0, 0.0, 0.065]
        add(lift, q_grasp, 1, "lift")
        return wps
    if task.kind == "place_into":
        lift = grasp + [0.0, 0.0, 0.07]
        add(lift, q_grasp, 1, "lift")
        bin_center = 0.5 * (
            np.asarray(task.region.min_corner) + np.asarray(task.region.max_corner)
        )
        above = np.array([bin_center[0], bin_center[1], lift[2]])
        add(jitter(above), q_travel, 1, "transport")
        drop = np.array([bin_center[0], bin_center[1], 0.055])
        add(jitter(drop), q_grasp, 1, "lower")
        add(drop, q_grasp, 0, "release")
        return wps
    raise ValueError(f"cannot script task kind {task.kind!r}")


class GenerationError(RuntimeError):
    pass


def scripted_demo(
    world: KinematicWorld,
    task: SuccessPredicate,
    dock: PlanarPose,
    noise_seed: int,
    points: int = 1024,
    step: float = 0.025,
    target_frames: int | None = None,
) -> Demonstration:
    """Generate a source demonstration by scripting approach/grasp/transport.

    Clouds are rendered from point templates, cropped, and FPS-downsampled
    to ``points`` per frame. ``target_frames`` pads the final dwell and, if
    needed, refines interpolation so the output has exactly that length.
    """
    scene = world.scene
    wps = script_waypoints(scene, task, dock, noise_seed)
    if target_frames is not None:
        natural = _script_length(wps, step)
        if natural > target_frames:
            raise GenerationError(
                f"script needs {natural} frames at step {step}, requested {target_frames}"
            )
        trial = step * natural / target_frames
        while _script_length(wps, trial) > target_frames:
            trial *= 1.02
        step = trial
    poses_cmds = _expand_script(wps, step)
    if target_frames is not None:
        while len(poses_cmds) < target_frames + 1:
            poses_cmds.append(poses_cmds[-1])

    # frame t observes poses_cmds[t] and commands poses_cmds[t+1]: every
    # action makes progress, so no state is a fixed point of its own action
    crop = default_crop()
    frames = []
    sim = world_from_scene(scene, ee=poses_cmds[0][0])
    gripper_state = 0.0
    for t in range(len(poses_cmds) - 1):
        pose, cmd = poses_cmds[t + 1]
        cloud = render_cloud(sim, crop)
        if len(cloud) < points:
            raise GenerationError(
                f"rendered cloud has {len(cloud)} points, cannot sample {points}"
            )
        cloud = fps_downsample(cloud, points, seed=noise_seed + t)
        state = RobotState(sim.ee, gripper_state)
        action = Action(pose, cmd)
        frames.append(DemoFrame(cloud, state, action, t))
        step_world(sim, action, dock, {task.target} if task.target else set())
        gripper_state = sim.gripper
    demo = Demonstration(frames, dock, scene.id, Provenance("source"))
    check = replay(world_from_scene(scene, ee=frames[0].state.ee_pose), demo, task)
    if not check.clean_success():
        raise GenerationError(
            f"scripted demo does not replay cleanly: success={check.success}, "
            f"events={check.events[:4]}"
        )
    return demo


def _leg_steps(wps, step: float) -> list:
    """Per-leg interpolation counts, honoring per-waypoint step hints."""
    counts = []
    prev = None
    for pose, _, _, _, hint in wps:
        if prev is not None:
            dist = float(np.linalg.norm(pose.position - prev.position))
            leg = min(step, hint) if hint is not None else step
            counts.append(max(1, int(math.ceil(dist / leg))))
        prev = pose
    return counts


def _script_length(wps, step: float) -> int:
    n = sum(_leg_steps(wps, step)) - len(_leg_steps(wps, step))
    return n + sum(dwell for _, _, _, dwell, _ in wps)


def _expand_script(wps, step: float) -> list:
    out = []
    counts = _leg_steps(wps, step)
    prev_pose = None
    for idx, (pose, cmd, _, dwell, _) in enumerate(wps):
        if prev_pose is not None:
            n = counts[idx - 1]
            for i in range(1, n):
                f = i / n
                p = (1.0 - f) * prev_pose.position + f * pose.position
                q = slerp(prev_pose.quaternion, pose.quaternion, f)
                out.append((Pose(p, q), cmd))
        for _ in range(dwell):
            out.append((pose, cmd))
        prev_pose = pose
    return out


# ---------------------------------------------------------------------------
# nearest-neighbor policy evaluation


def canonical_quat(q: np.ndarray) -> np.ndarray:
    """Fix the double-cover sign: w > 0, ties broken by first nonzero."""
    q = np.asarray(q, dtype=np.float64).reshape(4)
    for c in q:
        if c > 0.0:
            return q.copy()
        if c < 0.0:
            return -q
    return q.copy()


def seq_centroid(points: np.ndarray) -> np.ndarray:
    """Centroid via a defined left-to-right float64 summation order.

    The cross-implementation oracle recomputes this bit-for-bit, so the
    summation order is part of the feature definition.
    """
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) == 0:
        return np.zeros(3)
    return np.cumsum(pts, axis=0)[-1] / float(len(pts))


def frame_feature(cloud: PointCloud, state: RobotState, object_codes) -> np.ndarray:
    parts = [seq_centroid(cloud.points[cloud.labels == LABEL_ARM])]
    for code in object_codes:
        parts.append(seq_centroid(cloud.points[cloud.labels == code]))
    parts.append(state.ee_pose.position)
    parts.append(canonical_quat(state.ee_pose.quaternion))
    parts.append(np.array([state.gripper]))
    return np.concatenate(parts)


def training_features(demos, object_codes) -> tuple[np.ndarray, list]:
    feats = []
    actions = []
    for demo in demos:
        for frame in demo.frames:
            feats.append(frame_feature(frame.cloud, frame.state, object_codes))
            actions.append(frame.action)
    return np.stack(feats), actions


# A query farther than this from every training feature is treated as
# out-of-distribution: the policy holds still instead of extrapolating.
# Part of the feature definition; the cross-implementation oracle mirrors it.
TRUST_RADIUS = 0.15


def nearest_index(features: np.ndarray, query: np.ndarray) -> tuple[int, float]:
    """(first argmin index, squared distance) over training features."""
    d = features - query
    d2 = np.einsum("ij,ij->i", d, d)
    idx = int(np.argmin(d2))
    return idx, float(d2[idx])


class EvalError(ValueError):
    pass


def nn_policy_eval(
    train_demos,
    test_docks,
    scene: Scene,
    seeds=range(20),
    max_steps: int = 90,
    log_path=None,
) -> dict:
    """Roll out a 1-NN policy from each test dock; per-dock success rates.

    The policy matches the current observation's feature vector (cluster
    centroids + end-effector state) to the closest training frame and
    emits that frame's action. Deterministic given demos, docks and seeds.
    """
    train_demos = list(train_demos)
    seeds = list(seeds)
    if not train_demos:
        raise EvalError("empty training set")
    task = task_from_scene(scene)
    object_codes = sorted(obj.label for obj in scene.objects)
    features, actions = training_features(train_demos, object_codes)
    crop = default_crop()
    rollouts = []
    table = []
    for d_idx, dock in enumerate(test_docks):
        successes = 0
        for seed in seeds:
            rng = np.random.default_rng(seed)
            start = home_pose(scene, dock)
            start = Pose(
                start.position + np.clip(rng.normal(scale=0.004, size=3), -0.01, 0.01),
                start.quaternion,
            )
            world = world_from_scene(scene, ee=start)
            exclude = {task.target} if task.target else set()
            steps = []
            success = False
            for _ in range(max_steps):
                cloud = render_cloud(world, crop)
                state = RobotState(world.ee, world.gripper)
                feature = frame_feature(cloud, state, object_codes)
                match, d2 = nearest_index(features, feature)
                if d2 > TRUST_RADIUS**2:
                    match = -1  # out of distribution: hold pose
                    action = Action(world.ee, world.gripper)
                else:
                    action = actions[match]
                steps.append(
                    {
                        "f": [float(v) for v in feature],
                        "match": match,
                        "action": [float(v) for v in action.target_pose.position]
                        + [float(v) for v in action.target_pose.quaternion]
                        + [float(action.gripper_cmd)],
                    }
                )
                step_world(world, action, dock, exclude)
                if _predicate_holds(task, world, scene):
                    success = True
                    break
            successes += int(success)
            rollouts.append(
                {"dock": d_idx, "seed": int(seed), "success": success, "steps": steps}
            )
        table.append(
            {
                "dock": d_idx,
                "successes": successes,
                "trials": len(seeds),
                "rate": successes / max(1, len(seeds)),
            }
        )
    result = {
        "feature_version": FEATURE_VERSION,
        "trust_radius": TRUST_RADIUS,
        "scene_id": scene.id,
        "object_codes": [int(c) for c in object_codes],
        "docks": [{"x": d.x, "y": d.y, "yaw": d.yaw} for d in test_docks],
        "success_table": table,
        "rollouts": rollouts,
    }
    if log_path is not None:
        Path(log_path).write_text(json.dumps(result, indent=1) + "\n")
    return result
