"""Decompose a demonstration into alternating motion and skill segments.

A frame is in contact (skill) when the end-effector is closer than a
distance threshold to the geometric center of some labeled object, the
centers being computed once from the first frame's labeled points. Maximal
runs of equal classification become segments; runs shorter than a debounce
length are absorbed by their neighbor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .demo_model import Demonstration
from .geometry import Pose
from .pointcloud_ops import centroid, extract_cluster
from .scene import Scene

MOTION = "motion"
SKILL = "skill"

DEFAULT_THRESHOLD = 0.1
DEFAULT_MIN_SEG_LEN = 3


class NoSkillSegmentError(ValueError):
    """No frame ever comes within the contact threshold of an object."""


class SceneMismatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Segment:
    kind: str
    start: int  # inclusive
    end: int  # exclusive
    object_id: str | None = None

    def __post_init__(self):
        if self.kind not in (MOTION, SKILL):
            raise ValueError(f"bad segment kind {self.kind!r}")
        if not (0 <= self.start < self.end):
            raise ValueError(f"bad span [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True, eq=False)
class ParsedTrajectory:
    segments: tuple
    threshold: float

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        prev_end = 0
        prev_kind = None
        for seg in self.segments:
            if seg.start != prev_end:
                raise ValueError(f"segments do not tile: gap/overlap at {seg.start}")
            if seg.kind == prev_kind:
                raise ValueError(f"segments do not alternate at t={seg.start}")
            prev_end = seg.end
            prev_kind = seg.kind

    def length(self) -> int:
        return self.segments[-1].end if self.segments else 0

    def skill_mask(self) -> np.ndarray:
        mask = np.zeros(self.length(), dtype=bool)
        for seg in self.segments:
            if seg.kind == SKILL:
                mask[seg.start : seg.end] = True
        return mask

    def skill_segments(self) -> list:
        return [s for s in self.segments if s.kind == SKILL]

    def motion_segments(self) -> list:
        return [s for s in self.segments if s.kind == MOTION]


def object_radius_check(ee: Pose, obj_centroid, threshold: float) -> bool:
    """True iff the ee position is strictly inside the object sphere."""
    d = np.asarray(obj_centroid, dtype=np.float64).reshape(3) - ee.position
    return float(np.linalg.norm(d)) < float(threshold)


def first_frame_centroids(demo: Demonstration, scene: Scene) -> dict:
    """Object id -> first-frame cluster centroid, for labeled objects."""
    cloud = demo.frames[0].cloud
    centers = {}
    for obj in scene.objects:
        cluster = extract_cluster(cloud, obj.label)
        if len(cluster) > 0:
            centers[obj.id] = centroid(cluster)
    return centers


def parse(
    demo: Demonstration,
    scene: Scene,
    threshold: float = DEFAULT_THRESHOLD,
    min_seg_len: int = DEFAULT_MIN_SEG_LEN,
) -> ParsedTrajectory:
    if not scene.objects:
        raise SceneMismatchError(f"scene {scene.id!r} has no objects")
    centers = first_frame_centroids(demo, scene)
    if not centers:
        raise SceneMismatchError(
            f"no labeled object points in the first frame of scene {scene.id!r}"
        )
    ids = list(centers.keys())
    center_mat = np.stack([centers[i] for i in ids])  # (O, 3)
    ee = np.stack([f.state.ee_pose.position for f in demo.frames])  # (L, 3)
    dists = np.linalg.norm(ee[:, None, :] - center_mat[None, :, :], axis=2)  # (L, O)
    skill_frames = dists.min(axis=1) < threshold
    if not skill_frames.any():
        raise NoSkillSegmentError(
            f"no skill segment: all frames farther than {threshold} m from objects"
        )

    runs = _runs(skill_frames)
    runs = _debounce(runs, min_seg_len)
    segments = []
    for is_skill, start, end in runs:
        if is_skill:
            nearest = ids[int(np.argmin(dists[start]))]
            segments.append(Segment(SKILL, start, end, nearest))
        else:
            segments.append(Segment(MOTION, start, end))
    return ParsedTrajectory(tuple(segments), float(threshold))


def _runs(flags: np.ndarray) -> list:
    out = []
    start = 0
    for i in range(1, len(flags) + 1):
        if i == len(flags) or flags[i] != flags[start]:
            out.append((bool(flags[start]), start, i))
            start = i
    return out


def _debounce(runs: list, min_seg_len: int) -> list:
    """Absorb runs shorter than min_seg_len into their predecessor.

    The leading run has no predecessor; if it stays short after merging it
    is absorbed into its successor instead.
    """
    merged: list = []
    for is_skill, start, end in runs:
        short = (end - start) < min_seg_len
        if not merged:
            merged.append([is_skill, start, end])
        elif short or merged[-1][0] == is_skill:
            merged[-1][2] = end
        else:
            merged.append([is_skill, start, end])
    if len(merged) > 1 and (merged[0][2] - merged[0][1]) < min_seg_len:
        merged[1][1] = merged[0][1]
        merged = merged[1:]
    return [(bool(k), s, e) for k, s, e in merged]


def segment_table(parsed: ParsedTrajectory) -> list:
    return [
        {
            "index": i,
            "kind": seg.kind,
            "start": seg.start,
            "end": seg.end,
            "object": seg.object_id,
        }
        for i, seg in enumerate(parsed.segments)
    ]
