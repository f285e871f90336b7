"""Demonstration data model and its on-disk format.

A dataset directory looks like::

    dataset/
      manifest.json            index: config, label table, per-demo entries
      scenes/<scene_id>.json   scene geometry
      demos/<demo_id>.bin      flat little-endian frame blob

Each demo blob is a concatenation of tightly packed sections whose byte
offsets are listed in the manifest entry:

    points   L*N*3 float32   world-frame coordinates, frame-major
    labels   L*N   uint8     per-point label codes (see manifest "labels")
    colors   L*N*3 float32   optional, unit range
    states   L*8   float64   px py pz qw qx qy qz gripper
    actions  L*8   float64   px py pz qw qx qy qz cmd

Cloud coordinates are float32; poses are float64 so unit-quaternion and
pose-algebra tolerances survive a round trip. Serialization is canonical:
writing the same Demonstration twice yields identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import PlanarPose, Pose

LABEL_OTHER = 0
LABEL_ARM = 1
FIRST_OBJECT_LABEL = 2

MANIFEST_NAME = "manifest.json"
MANIFEST_FORMAT = "dockaug-dataset"
MANIFEST_VERSION = 1

_QUAT_NORM_TOL = 1e-9


class DemoFormatError(ValueError):
    """A file or structure does not match the dataset format."""


class DemoInvariantError(ValueError):
    """A structurally well-formed demonstration violates an invariant."""


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray  # (N, 3) float
    labels: np.ndarray  # (N,) uint8 codes
    colors: np.ndarray | None = None  # (N, 3) in [0, 1], optional

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise DemoFormatError(f"points must be (N, 3), got {pts.shape}")
        labels = np.asarray(self.labels, dtype=np.uint8)
        if labels.shape != (pts.shape[0],):
            raise DemoFormatError(
                f"labels length {labels.shape} does not match {pts.shape[0]} points"
            )
        object.__setattr__(self, "points", _locked(pts))
        object.__setattr__(self, "labels", _locked(labels))
        if self.colors is not None:
            colors = np.asarray(self.colors, dtype=np.float64)
            if colors.shape != pts.shape:
                raise DemoFormatError(
                    f"colors shape {colors.shape} does not match points {pts.shape}"
                )
            object.__setattr__(self, "colors", _locked(colors))

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class RobotState:
    ee_pose: Pose
    gripper: float

    def __post_init__(self):
        object.__setattr__(self, "gripper", float(self.gripper))


@dataclass(frozen=True, eq=False)
class Action:
    target_pose: Pose
    gripper_cmd: float

    def __post_init__(self):
        object.__setattr__(self, "gripper_cmd", float(self.gripper_cmd))


@dataclass(frozen=True, eq=False)
class DemoFrame:
    cloud: PointCloud
    state: RobotState
    action: Action
    t: int


@dataclass(frozen=True, eq=False)
class Provenance:
    kind: str  # "source" | "augmented"
    source_id: str | None = None
    dock_id: str | None = None

    def __post_init__(self):
        if self.kind not in ("source", "augmented"):
            raise DemoFormatError(f"unknown provenance kind {self.kind!r}")
        if self.kind == "augmented" and (self.source_id is None or self.dock_id is None):
            raise DemoFormatError("augmented provenance needs source_id and dock_id")

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "augmented":
            out["source_id"] = self.source_id
            out["dock_id"] = self.dock_id
        return out

    @staticmethod
    def from_json(obj: dict) -> "Provenance":
        return Provenance(
            obj.get("kind", "source"), obj.get("source_id"), obj.get("dock_id")
        )


@dataclass(frozen=True, eq=False)
class Demonstration:
    frames: tuple
    docking: PlanarPose
    scene_id: str
    provenance: Provenance = field(default_factory=lambda: Provenance("source"))

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))

    def __len__(self) -> int:
        return len(self.frames)


def _locked(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


# ---------------------------------------------------------------------------
# validation


def validate_demo(
    demo: Demonstration,
    points_per_frame: int | None = None,
    binary_gripper: bool = False,
) -> list[str]:
    """Check every invariant; returns violation messages (empty = valid)."""
    issues: list[str] = []
    if len(demo.frames) < 2:
        issues.append(f"demo has {len(demo.frames)} frames, need at least 2")
    for i, frame in enumerate(demo.frames):
        if frame.t != i:
            issues.append(f"frame {i}: timestep {frame.t} not contiguous from 0")
        n = len(frame.cloud)
        if points_per_frame is not None and n != points_per_frame:
            issues.append(f"frame {i}: {n} points, expected {points_per_frame}")
        if points_per_frame is None and n not in (1024, 2048) and n < 1:
            issues.append(f"frame {i}: empty point cloud")
        if frame.cloud.labels.shape[0] != n:
            issues.append(f"frame {i}: labels length mismatch")
        if not np.all(np.isfinite(frame.cloud.points)):
            issues.append(f"frame {i}: non-finite point coordinates")
        for name, q in (
            ("state", frame.state.ee_pose.quaternion),
            ("action", frame.action.target_pose.quaternion),
        ):
            norm = float(np.linalg.norm(q))
            if abs(norm - 1.0) > _QUAT_NORM_TOL:
                issues.append(f"frame {i}: {name} quaternion norm {norm!r} not unit")
        for name, g in (
            ("gripper state", frame.state.gripper),
            ("gripper cmd", frame.action.gripper_cmd),
        ):
            if not (0.0 <= g <= 1.0) or not math.isfinite(g):
                issues.append(f"frame {i}: {name} {g!r} outside [0, 1]")
            elif binary_gripper and g not in (0.0, 1.0):
                issues.append(f"frame {i}: {name} {g!r} not binary")
    return issues


# ---------------------------------------------------------------------------
# canonical JSON


def canonical_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def dock_to_json(dock: PlanarPose) -> dict:
    return {"x": dock.x, "y": dock.y, "yaw": dock.yaw}


def dock_from_json(obj: dict) -> PlanarPose:
    return PlanarPose(obj["x"], obj["y"], obj["yaw"])


# ---------------------------------------------------------------------------
# frame blob codec


def _pose_row(pose: Pose, scalar: float) -> np.ndarray:
    return np.concatenate([pose.position, pose.quaternion, [float(scalar)]])


def encode_frames(frames) -> tuple[bytes, dict]:
    """Pack frames into the flat blob; returns (blob, section offsets)."""
    length = len(frames)
    n = len(frames[0].cloud)
    has_colors = frames[0].cloud.colors is not None
    points = np.empty((length, n, 3), dtype="<f4")
    labels = np.empty((length, n), dtype=np.uint8)
    colors = np.empty((length, n, 3), dtype="<f4") if has_colors else None
    states = np.empty((length, 8), dtype="<f8")
    actions = np.empty((length, 8), dtype="<f8")
    for i, frame in enumerate(frames):
        cloud = frame.cloud
        if len(cloud) != n:
            raise DemoFormatError(f"frame {i}: point count {len(cloud)} != {n}")
        if (cloud.colors is not None) != has_colors:
            raise DemoFormatError(f"frame {i}: inconsistent color presence")
        points[i] = cloud.points
        labels[i] = cloud.labels
        if has_colors:
            colors[i] = cloud.colors
        states[i] = _pose_row(frame.state.ee_pose, frame.state.gripper)
        actions[i] = _pose_row(frame.action.target_pose, frame.action.gripper_cmd)
    sections = [("points", points.tobytes()), ("labels", labels.tobytes())]
    if has_colors:
        sections.append(("colors", colors.tobytes()))
    sections.append(("states", states.tobytes()))
    sections.append(("actions", actions.tobytes()))
    offsets = {}
    cursor = 0
    chunks = []
    for name, payload in sections:
        offsets[name] = cursor
        chunks.append(payload)
        cursor += len(payload)
    return b"".join(chunks), offsets


def decode_frames(blob: bytes, length: int, n: int, offsets: dict) -> list[DemoFrame]:
    has_colors = "colors" in offsets
    expected = length * n * 3 * 4 + length * n + length * 8 * 8 * 2
    if has_colors:
        expected += length * n * 3 * 4
    if len(blob) != expected:
        raise DemoFormatError(
            f"blob is {len(blob)} bytes, format implies {expected}"
        )

    def section(name, dtype, count, shape):
        start = offsets[name]
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=start)
        return arr.reshape(shape)

    points = section("points", "<f4", length * n * 3, (length, n, 3))
    labels = section("labels", np.uint8, length * n, (length, n))
    colors = (
        section("colors", "<f4", length * n * 3, (length, n, 3))
        if has_colors
        else None
    )
    states = section("states", "<f8", length * 8, (length, 8))
    actions = section("actions", "<f8", length * 8, (length, 8))

    frames = []
    for i in range(length):
        for name, row in (("state", states[i]), ("action", actions[i])):
            norm = float(np.linalg.norm(row[3:7]))
            if abs(norm - 1.0) > _QUAT_NORM_TOL:
                raise DemoInvariantError(
                    f"frame {i}: {name} quaternion norm {norm!r} not unit"
                )
        cloud = PointCloud(
            points[i].astype(np.float64),
            labels[i].copy(),
            colors[i].astype(np.float64) if has_colors else None,
        )
        state = RobotState(Pose(states[i][:3], states[i][3:7]), states[i][7])
        action = Action(Pose(actions[i][:3], actions[i][3:7]), actions[i][7])
        frames.append(DemoFrame(cloud, state, action, i))
    return frames


def demo_sha256(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# dataset directory


def empty_manifest(points_per_frame: int, binary_gripper: bool, labels) -> dict:
    return {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "points_per_frame": int(points_per_frame),
        "binary_gripper": bool(binary_gripper),
        "labels": list(labels),
        "scenes": [],
        "demos": [],
    }


def load_manifest(root: Path) -> dict:
    path = Path(root) / MANIFEST_NAME
    if not path.is_file():
        raise DemoFormatError(f"missing manifest: {path}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DemoFormatError(f"manifest {path} is not valid JSON: {exc}") from exc
    if manifest.get("format") != MANIFEST_FORMAT:
        raise DemoFormatError(f"manifest {path}: unknown format field")
    return manifest


def save_manifest(root: Path, manifest: dict) -> None:
    manifest["demos"] = sorted(manifest["demos"], key=lambda e: e["id"])
    manifest["scenes"] = sorted(set(manifest["scenes"]))
    (Path(root) / MANIFEST_NAME).write_text(canonical_json(manifest))


def _entry_for(manifest: dict, key: str) -> dict:
    for entry in manifest["demos"]:
        if entry["id"] == key or entry["file"] == key:
            return entry
    raise DemoFormatError(f"demo {key!r} not listed in manifest")


def read_demo(path) -> Demonstration:
    """Load one demo from its .bin path, using the dataset manifest beside it."""
    path = Path(path)
    if not path.is_file():
        raise DemoFormatError(f"no such demo file: {path}")
    root = path.parent.parent if path.parent.name == "demos" else path.parent
    manifest = load_manifest(root)
    entry = _entry_for(manifest, f"demos/{path.name}" if path.parent.name == "demos" else path.name)
    blob = path.read_bytes()
    if len(blob) != entry["nbytes"]:
        raise DemoFormatError(
            f"{path}: size {len(blob)} does not match manifest nbytes {entry['nbytes']}"
        )
    if "sha256" in entry and demo_sha256(blob) != entry["sha256"]:
        raise DemoFormatError(f"{path}: content does not match manifest sha256")
    frames = decode_frames(blob, entry["frames"], entry["points"], entry["offsets"])
    demo = Demonstration(
        frames,
        dock_from_json(entry["dock"]),
        entry["scene_id"],
        Provenance.from_json(entry["provenance"]),
    )
    issues = validate_demo(
        demo,
        points_per_frame=manifest["points_per_frame"],
        binary_gripper=manifest["binary_gripper"],
    )
    if issues:
        raise DemoInvariantError(f"{path}: {issues[0]}")
    return demo


def demo_entry(demo_id: str, demo: Demonstration, blob: bytes, offsets: dict) -> dict:
    return {
        "id": demo_id,
        "file": f"demos/{demo_id}.bin",
        "scene_id": demo.scene_id,
        "dock": dock_to_json(demo.docking),
        "provenance": demo.provenance.to_json(),
        "frames": len(demo.frames),
        "points": len(demo.frames[0].cloud),
        "has_colors": demo.frames[0].cloud.colors is not None,
        "offsets": offsets,
        "nbytes": len(blob),
        "sha256": demo_sha256(blob),
    }


def write_demo(demo: Demonstration, path, label_names=None) -> None:
    """Write one demo blob and insert/replace its manifest entry.

    Creates a minimal manifest when the dataset directory has none yet;
    `label_names` seeds the label table in that case.
    """
    path = Path(path)
    root = path.parent.parent if path.parent.name == "demos" else path.parent
    path.parent.mkdir(parents=True, exist_ok=True)
    blob, offsets = encode_frames(demo.frames)
    try:
        manifest = load_manifest(root)
    except DemoFormatError:
        names = list(label_names) if label_names is not None else _default_labels(demo)
        manifest = empty_manifest(len(demo.frames[0].cloud), False, names)
    entry = demo_entry(path.stem, demo, blob, offsets)
    entry["file"] = (
        f"demos/{path.name}" if path.parent.name == "demos" else path.name
    )
    manifest["demos"] = [e for e in manifest["demos"] if e["id"] != entry["id"]]
    manifest["demos"].append(entry)
    if demo.scene_id not in manifest["scenes"]:
        manifest["scenes"].append(demo.scene_id)
    try:
        path.write_bytes(blob)
        save_manifest(root, manifest)
    except OSError as exc:
        raise OSError(f"failed writing demo to {path}: {exc}") from exc


def _default_labels(demo: Demonstration) -> list[str]:
    top = int(max(int(frame.cloud.labels.max(initial=0)) for frame in demo.frames))
    names = ["other", "arm"]
    names += [f"object:{code}" for code in range(FIRST_OBJECT_LABEL, top + 1)]
    return names


class Dataset:
    """Read/write access to a dataset directory."""

    def __init__(self, root, manifest: dict):
        self.root = Path(root)
        self.manifest = manifest

    @staticmethod
    def load(root) -> "Dataset":
        return Dataset(root, load_manifest(Path(root)))

    @staticmethod
    def create(root, points_per_frame: int, binary_gripper: bool, labels) -> "Dataset":
        root = Path(root)
        (root / "demos").mkdir(parents=True, exist_ok=True)
        (root / "scenes").mkdir(parents=True, exist_ok=True)
        ds = Dataset(root, empty_manifest(points_per_frame, binary_gripper, labels))
        ds.save()
        return ds

    @property
    def labels(self) -> list[str]:
        return list(self.manifest["labels"])

    def demo_ids(self) -> list[str]:
        return [entry["id"] for entry in self.manifest["demos"]]

    def entry(self, demo_id: str) -> dict:
        return _entry_for(self.manifest, demo_id)

    def read(self, demo_id: str) -> Demonstration:
        return read_demo(self.root / self.entry(demo_id)["file"])

    def add(self, demo_id: str, demo: Demonstration) -> None:
        blob, offsets = encode_frames(demo.frames)
        (self.root / "demos").mkdir(parents=True, exist_ok=True)
        (self.root / "demos" / f"{demo_id}.bin").write_bytes(blob)
        self.manifest["demos"] = [
            e for e in self.manifest["demos"] if e["id"] != demo_id
        ]
        self.manifest["demos"].append(demo_entry(demo_id, demo, blob, offsets))
        if demo.scene_id not in self.manifest["scenes"]:
            self.manifest["scenes"].append(demo.scene_id)

    def save(self) -> None:
        save_manifest(self.root, self.manifest)

    def label_code(self, name: str) -> int:
        try:
            return self.manifest["labels"].index(name)
        except ValueError:
            raise DemoFormatError(f"label {name!r} not in dataset table") from None
