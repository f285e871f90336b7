"""Scene model: object geometry, camera, workspace and floorplan.

Backs the docking feasibility checks and the replay harness. Collision
shapes are spheres and oriented boxes; floorplan obstacles are convex 2D
polygons the mobile base must not overlap. Scenes serialize to
``scenes/<scene_id>.json`` inside a dataset directory.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .demo_model import DemoFormatError, canonical_json
from .geometry import Pose, quat_to_matrix


@dataclass(frozen=True, eq=False)
class SphereShape:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(
            self, "center", np.asarray(self.center, dtype=np.float64).reshape(3)
        )
        object.__setattr__(self, "radius", float(self.radius))

    def top_z(self) -> float:
        return float(self.center[2] + self.radius)


@dataclass(frozen=True, eq=False)
class BoxShape:
    pose: Pose
    half_extents: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self,
            "half_extents",
            np.asarray(self.half_extents, dtype=np.float64).reshape(3),
        )

    def top_z(self) -> float:
        # conservative: top of the rotated box's AABB
        r = quat_to_matrix(self.pose.quaternion)
        extent = np.abs(r) @ self.half_extents
        return float(self.pose.position[2] + extent[2])


Shape = SphereShape | BoxShape


@dataclass(frozen=True, eq=False)
class SceneObject:
    id: str
    label: int
    points: np.ndarray  # (M, 3) labeled cluster in world frame
    shape: Shape | None = None

    def __post_init__(self):
        object.__setattr__(
            self, "points", np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        )


@dataclass(frozen=True, eq=False)
class CameraModel:
    pose: Pose  # +z is the optical axis, +x right, +y down
    h_fov: float
    v_fov: float

    def __post_init__(self):
        for name in ("h_fov", "v_fov"):
            fov = float(getattr(self, name))
            if not (0.0 < fov < math.pi):
                raise ValueError(f"{name} must be in (0, pi), got {fov}")
            object.__setattr__(self, name, fov)


@dataclass(frozen=True, eq=False)
class Workspace:
    r_min: float
    r_max: float
    z_min: float
    z_max: float

    def __post_init__(self):
        if not (self.r_min < self.r_max and self.z_min < self.z_max):
            raise ValueError("workspace bounds must satisfy r_min<r_max, z_min<z_max")


@dataclass(frozen=True, eq=False)
class BaseModel:
    """The mobile base: mount height, occluder box, footprint disk."""

    height: float = 0.3
    half_extents: tuple = (0.08, 0.08, 0.15)
    footprint_radius: float = 0.12


@dataclass(frozen=True, eq=False)
class Scene:
    id: str
    objects: tuple
    camera: CameraModel
    workspace: Workspace
    base: BaseModel = field(default_factory=BaseModel)
    floorplan: tuple = ()  # convex polygons, each (K, 2)
    task: dict | None = None

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(
            self,
            "floorplan",
            tuple(np.asarray(p, dtype=np.float64).reshape(-1, 2) for p in self.floorplan),
        )

    def object_by_id(self, object_id: str) -> SceneObject:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise KeyError(f"no object {object_id!r} in scene {self.id!r}")

    def object_by_label(self, label: int) -> SceneObject:
        for obj in self.objects:
            if obj.label == int(label):
                return obj
        raise KeyError(f"no object with label {label} in scene {self.id!r}")


# ---------------------------------------------------------------------------
# geometric predicates


def base_occluder_box(scene: Scene, dock) -> BoxShape:
    """The robot base at a dock, modeled as a vertical box."""
    hx, hy, hz = scene.base.half_extents
    center = np.array([dock.x, dock.y, scene.base.height / 2.0])
    half = np.array([hx, hy, scene.base.height / 2.0])
    from .geometry import planar_to_world

    pose = Pose(center, planar_to_world(dock, 0.0).quaternion)
    return BoxShape(pose, half)


def points_in_shape(shape: Shape, points: np.ndarray, inflate: float = 0.0) -> np.ndarray:
    """Boolean mask of points inside the shape grown by `inflate`."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if isinstance(shape, SphereShape):
        d2 = np.sum((pts - shape.center) ** 2, axis=1)
        return d2 <= (shape.radius + inflate) ** 2
    r = quat_to_matrix(shape.pose.quaternion)
    local = (pts - shape.pose.position) @ r  # r.T applied row-wise
    return np.all(np.abs(local) <= shape.half_extents + inflate, axis=1)


def point_in_any_shape(shapes, point: np.ndarray, inflate: float = 0.0) -> bool:
    return any(bool(points_in_shape(s, point, inflate)[0]) for s in shapes)


def segment_hits_shape(shape: Shape, a: np.ndarray, b: np.ndarray, inflate: float = 0.0) -> bool:
    """Continuous test: does segment a-b touch the inflated shape?

    Boxes are inflated by growing half extents, which over-covers corners;
    that errs on the conservative side for collision checking.
    """
    a = np.asarray(a, dtype=np.float64).reshape(3)
    b = np.asarray(b, dtype=np.float64).reshape(3)
    if isinstance(shape, SphereShape):
        return _segment_point_dist2(a, b, shape.center) <= (shape.radius + inflate) ** 2
    r = quat_to_matrix(shape.pose.quaternion)
    la = r.T @ (a - shape.pose.position)
    lb = r.T @ (b - shape.pose.position)
    return _segment_hits_aabb(la, lb, shape.half_extents + inflate)


def segments_hit_shape(shape: Shape, starts: np.ndarray, ends: np.ndarray, inflate: float = 0.0) -> np.ndarray:
    """Vectorized segment_hits_shape over (N, 3) start/end arrays."""
    starts = np.atleast_2d(np.asarray(starts, dtype=np.float64))
    ends = np.atleast_2d(np.asarray(ends, dtype=np.float64))
    if isinstance(shape, SphereShape):
        d = ends - starts
        rel = shape.center - starts
        denom = np.maximum(np.sum(d * d, axis=1), 1e-300)
        t = np.clip(np.sum(rel * d, axis=1) / denom, 0.0, 1.0)
        nearest = starts + t[:, None] * d
        d2 = np.sum((nearest - shape.center) ** 2, axis=1)
        return d2 <= (shape.radius + inflate) ** 2
    r = quat_to_matrix(shape.pose.quaternion)
    la = (starts - shape.pose.position) @ r
    lb = (ends - shape.pose.position) @ r
    he = shape.half_extents + inflate
    return _segments_hit_aabb(la, lb, he)


def _segment_point_dist2(a: np.ndarray, b: np.ndarray, p: np.ndarray) -> float:
    d = b - a
    denom = float(d @ d)
    if denom < 1e-300:
        return float(np.sum((p - a) ** 2))
    t = min(1.0, max(0.0, float((p - a) @ d) / denom))
    nearest = a + t * d
    return float(np.sum((p - nearest) ** 2))


def _segment_hits_aabb(a: np.ndarray, b: np.ndarray, half: np.ndarray) -> bool:
    t0, t1 = 0.0, 1.0
    d = b - a
    for axis in range(3):
        if abs(d[axis]) < 1e-12:
            if abs(a[axis]) > half[axis]:
                return False
            continue
        lo = (-half[axis] - a[axis]) / d[axis]
        hi = (half[axis] - a[axis]) / d[axis]
        if lo > hi:
            lo, hi = hi, lo
        t0 = max(t0, lo)
        t1 = min(t1, hi)
        if t0 > t1:
            return False
    return True


def _segments_hit_aabb(a: np.ndarray, b: np.ndarray, half: np.ndarray) -> np.ndarray:
    d = b - a
    t0 = np.zeros(a.shape[0])
    t1 = np.ones(a.shape[0])
    ok = np.ones(a.shape[0], dtype=bool)
    for axis in range(3):
        da = d[:, axis]
        aa = a[:, axis]
        parallel = np.abs(da) < 1e-12
        ok &= ~(parallel & (np.abs(aa) > half[axis]))
        safe = np.where(parallel, 1.0, da)
        lo = (-half[axis] - aa) / safe
        hi = (half[axis] - aa) / safe
        swap = lo > hi
        lo2 = np.where(swap, hi, lo)
        hi2 = np.where(swap, lo, hi)
        t0 = np.where(parallel, t0, np.maximum(t0, lo2))
        t1 = np.where(parallel, t1, np.minimum(t1, hi2))
    return ok & (t0 <= t1)


def point_in_convex_polygon(polygon: np.ndarray, xy: np.ndarray) -> bool:
    poly = np.asarray(polygon, dtype=np.float64)
    p = np.asarray(xy, dtype=np.float64).reshape(2)
    sign = 0.0
    for i in range(len(poly)):
        edge = poly[(i + 1) % len(poly)] - poly[i]
        rel = p - poly[i]
        cross = edge[0] * rel[1] - edge[1] * rel[0]
        if abs(cross) < 1e-15:
            continue
        if sign == 0.0:
            sign = math.copysign(1.0, cross)
        elif math.copysign(1.0, cross) != sign:
            return False
    return True


def disk_hits_polygon(polygon: np.ndarray, center_xy, radius: float) -> bool:
    """Does a base footprint disk overlap a convex floorplan polygon?"""
    poly = np.asarray(polygon, dtype=np.float64)
    c = np.asarray(center_xy, dtype=np.float64).reshape(2)
    if point_in_convex_polygon(poly, c):
        return True
    r2 = float(radius) ** 2
    for i in range(len(poly)):
        a = poly[i]
        b = poly[(i + 1) % len(poly)]
        d = b - a
        denom = float(d @ d)
        t = 0.0 if denom < 1e-300 else min(1.0, max(0.0, float((c - a) @ d) / denom))
        nearest = a + t * d
        if float(np.sum((c - nearest) ** 2)) <= r2:
            return True
    return False


# ---------------------------------------------------------------------------
# serialization


def _pose_to_json(pose: Pose) -> dict:
    return {
        "position": [float(v) for v in pose.position],
        "quaternion": [float(v) for v in pose.quaternion],
    }


def _pose_from_json(obj: dict) -> Pose:
    return Pose(obj["position"], obj["quaternion"])


def _shape_to_json(shape: Shape | None):
    if shape is None:
        return None
    if isinstance(shape, SphereShape):
        return {
            "kind": "sphere",
            "center": [float(v) for v in shape.center],
            "radius": shape.radius,
        }
    return {
        "kind": "box",
        "pose": _pose_to_json(shape.pose),
        "half_extents": [float(v) for v in shape.half_extents],
    }


def _shape_from_json(obj) -> Shape | None:
    if obj is None:
        return None
    if obj["kind"] == "sphere":
        return SphereShape(obj["center"], obj["radius"])
    if obj["kind"] == "box":
        return BoxShape(_pose_from_json(obj["pose"]), obj["half_extents"])
    raise DemoFormatError(f"unknown shape kind {obj['kind']!r}")


def scene_to_json(scene: Scene) -> dict:
    return {
        "id": scene.id,
        "base": {
            "height": scene.base.height,
            "half_extents": list(scene.base.half_extents),
            "footprint_radius": scene.base.footprint_radius,
        },
        "camera": {
            "pose": _pose_to_json(scene.camera.pose),
            "h_fov": scene.camera.h_fov,
            "v_fov": scene.camera.v_fov,
        },
        "workspace": {
            "r_min": scene.workspace.r_min,
            "r_max": scene.workspace.r_max,
            "z_min": scene.workspace.z_min,
            "z_max": scene.workspace.z_max,
        },
        "objects": [
            {
                "id": obj.id,
                "label": obj.label,
                "shape": _shape_to_json(obj.shape),
                "points": [[float(v) for v in row] for row in obj.points],
            }
            for obj in scene.objects
        ],
        "floorplan": [
            [[float(v) for v in row] for row in poly] for poly in scene.floorplan
        ],
        "task": scene.task,
    }


def scene_from_json(obj: dict) -> Scene:
    ws = obj["workspace"]
    base = obj.get("base", {})
    return Scene(
        id=obj["id"],
        objects=tuple(
            SceneObject(
                o["id"], int(o["label"]), np.array(o["points"]), _shape_from_json(o["shape"])
            )
            for o in obj["objects"]
        ),
        camera=CameraModel(
            _pose_from_json(obj["camera"]["pose"]),
            obj["camera"]["h_fov"],
            obj["camera"]["v_fov"],
        ),
        workspace=Workspace(ws["r_min"], ws["r_max"], ws["z_min"], ws["z_max"]),
        base=BaseModel(
            base.get("height", 0.3),
            tuple(base.get("half_extents", (0.08, 0.08, 0.15))),
            base.get("footprint_radius", 0.12),
        ),
        floorplan=tuple(np.array(p) for p in obj.get("floorplan", [])),
        task=obj.get("task"),
    )


def save_scene(scene: Scene, root) -> Path:
    path = Path(root) / "scenes" / f"{scene.id}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(scene_to_json(scene)))
    return path


def load_scene(root, scene_id: str) -> Scene:
    path = Path(root) / "scenes" / f"{scene_id}.json"
    if not path.is_file():
        raise DemoFormatError(f"missing scene file: {path}")
    return scene_from_json(json.loads(path.read_text()))
