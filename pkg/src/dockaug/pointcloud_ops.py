"""Point-cloud preprocessing: AABB crop, farthest-point sampling, clusters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .demo_model import PointCloud


class EmptyCloudError(ValueError):
    pass


class SampleSizeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Aabb:
    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min_corner, dtype=np.float64).reshape(3)
        hi = np.asarray(self.max_corner, dtype=np.float64).reshape(3)
        if np.any(lo > hi):
            raise ValueError(f"degenerate box: min {lo} > max {hi}")
        object.__setattr__(self, "min_corner", lo)
        object.__setattr__(self, "max_corner", hi)

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return np.all((pts >= self.min_corner) & (pts <= self.max_corner), axis=-1)


def _subset(pc: PointCloud, index) -> PointCloud:
    return PointCloud(
        pc.points[index],
        pc.labels[index],
        pc.colors[index] if pc.colors is not None else None,
    )


def crop_aabb(pc: PointCloud, box: Aabb) -> PointCloud:
    """Keep exactly the points inside the closed box, order preserved."""
    return _subset(pc, box.contains(pc.points))


def extract_cluster(pc: PointCloud, label: int) -> PointCloud:
    """Points carrying one label code, order preserved; may be empty."""
    return _subset(pc, pc.labels == int(label))


def centroid(pc: PointCloud) -> np.ndarray:
    if len(pc) == 0:
        raise EmptyCloudError("centroid of an empty cloud")
    return pc.points.mean(axis=0)


def concat(parts) -> PointCloud:
    """Append clouds in argument order; color presence must agree."""
    parts = [p for p in parts]
    if not parts:
        return PointCloud(np.zeros((0, 3)), np.zeros(0, dtype=np.uint8))
    has_colors = parts[0].colors is not None
    if any((p.colors is not None) != has_colors for p in parts):
        raise ValueError("cannot concat clouds with mixed color presence")
    return PointCloud(
        np.concatenate([p.points for p in parts]),
        np.concatenate([p.labels for p in parts]),
        np.concatenate([p.colors for p in parts]) if has_colors else None,
    )


def fps_downsample(pc: PointCloud, k: int, seed: int) -> PointCloud:
    """Greedy farthest-point sampling down to k points.

    The first index is seed mod N; every next pick maximizes the minimum
    squared distance to the already-selected set, ties broken by lowest
    index. Deterministic given (pc, k, seed).
    """
    n = len(pc)
    if k < 1 or k > n:
        raise SampleSizeError(f"cannot sample {k} of {n} points")
    first = int(seed) % n
    pts = pc.points
    selected = np.empty(k, dtype=np.int64)
    selected[0] = first
    # min squared distance to the selected set; selected entries pinned to -1
    best = np.sum((pts - pts[first]) ** 2, axis=1)
    best[first] = -1.0
    for i in range(1, k):
        nxt = int(np.argmax(best))
        selected[i] = nxt
        best = np.minimum(best, np.sum((pts - pts[nxt]) ** 2, axis=1))
        best[nxt] = -1.0
    return _subset(pc, selected)
