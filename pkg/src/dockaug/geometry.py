"""SE(3)/SE(2) pose algebra and rigid point-set transformation.

Conventions, fixed for the whole package: quaternions are (w, x, y, z) in
right-handed frames, angles are radians, lengths are meters, and the world
frame is the harness frame. All values are immutable after construction and
every operation is pure, so geometry objects can be shared freely across
workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TAU = 2.0 * math.pi

# A quaternion is renormalized only when its squared norm drifts past this;
# keeping already-unit inputs bit-identical is what makes file round-trips
# byte-stable.
_RENORM_EPS = 1e-12


def _locked(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def _vec3(value) -> np.ndarray:
    arr = np.array(value, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"position must be finite, got {arr!r}")
    return _locked(arr)


def _unit_quat(value) -> np.ndarray:
    arr = np.array(value, dtype=np.float64).reshape(4)
    n2 = float(arr @ arr)
    if not math.isfinite(n2) or n2 < 1e-12:
        raise ValueError(f"quaternion is degenerate (|q|^2 = {n2!r})")
    if abs(n2 - 1.0) > _RENORM_EPS:
        arr = arr / math.sqrt(n2)
    return _locked(arr)


def wrap_angle(angle: float) -> float:
    """Normalize an angle into (-pi, pi]."""
    a = math.fmod(float(angle) + math.pi, TAU)
    if a <= 0.0:
        a += TAU
    return a - math.pi


@dataclass(frozen=True, eq=False)
class Pose:
    """A rigid placement: unit-quaternion rotation plus translation.

    Used both as "where a frame sits in the world" and, under the alias
    RigidTransform, as a frame-to-frame map.
    """

    position: np.ndarray
    quaternion: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position))
        object.__setattr__(self, "quaternion", _unit_quat(self.quaternion))

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))

    @staticmethod
    def from_translation(v) -> "Pose":
        return Pose(v, np.array([1.0, 0.0, 0.0, 0.0]))

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.quaternion)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map points (3,) or (N, 3) from this frame into the parent frame."""
        pts = np.asarray(points, dtype=np.float64)
        return rotate_vectors(self.quaternion, pts) + self.position

    def __repr__(self) -> str:  # compact, debugging only
        p = ", ".join(f"{v:.6g}" for v in self.position)
        q = ", ".join(f"{v:.6g}" for v in self.quaternion)
        return f"Pose(p=[{p}], q=[{q}])"


# A frame-to-frame rigid map has the same layout as a placement.
RigidTransform = Pose


@dataclass(frozen=True, eq=False)
class PlanarPose:
    """SE(2) base placement: x, y in meters, yaw in (-pi, pi]."""

    x: float
    y: float
    yaw: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def __repr__(self) -> str:
        return f"PlanarPose(x={self.x:.6g}, y={self.y:.6g}, yaw={self.yaw:.6g})"


# ---------------------------------------------------------------------------
# quaternion kernels (broadcasting over leading axes)


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a*b for (..., 4) arrays in (w, x, y, z) order."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    w1, x1, y1, z1 = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    w2, x2, y2, z2 = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    out = q.copy()
    out[..., 1:] = -out[..., 1:]
    return out


def quat_norm_fix(q: np.ndarray) -> np.ndarray:
    """Renormalize rows whose squared norm drifted past the tolerance."""
    q = np.asarray(q, dtype=np.float64)
    n2 = np.sum(q * q, axis=-1, keepdims=True)
    scale = np.where(np.abs(n2 - 1.0) > _RENORM_EPS, 1.0 / np.sqrt(n2), 1.0)
    return q * scale


def rotate_vectors(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate (..., 3) vectors by (..., 4) quaternions (broadcasting)."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    qv = q[..., 1:]
    w = q[..., :1]
    t = 2.0 * np.cross(qv, v)
    return v + w * t + np.cross(qv, t)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = (float(c) for c in np.asarray(q, dtype=np.float64).reshape(4))
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Rotation matrix to (w, x, y, z) quaternion, Shepperd's method."""
    m = np.asarray(m, dtype=np.float64).reshape(3, 3)
    trace = m[0, 0] + m[1, 1] + m[2, 2]
    if trace > 0.0:
        s = math.sqrt(trace + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    return q / np.linalg.norm(q)


def quat_from_yaw(yaw: float) -> np.ndarray:
    half = 0.5 * float(yaw)
    return np.array([math.cos(half), 0.0, 0.0, math.sin(half)])


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    ax = np.asarray(axis, dtype=np.float64).reshape(3)
    n = float(np.linalg.norm(ax))
    if n < 1e-12:
        raise ValueError("axis must be nonzero")
    half = 0.5 * float(angle)
    return np.concatenate([[math.cos(half)], math.sin(half) * ax / n])


def quat_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Double-cover-aware distance: min over sign of the L2 difference."""
    a = np.asarray(a, dtype=np.float64).reshape(4)
    b = np.asarray(b, dtype=np.float64).reshape(4)
    return float(min(np.linalg.norm(a - b), np.linalg.norm(a + b)))


def quat_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Geodesic rotation angle between two unit quaternions."""
    dot = abs(float(np.dot(np.asarray(a).reshape(4), np.asarray(b).reshape(4))))
    return 2.0 * math.acos(min(1.0, dot))


def slerp(qa: np.ndarray, qb: np.ndarray, fraction: float) -> np.ndarray:
    """Spherical interpolation along the shorter arc; endpoints exact."""
    qa = np.asarray(qa, dtype=np.float64).reshape(4)
    qb = np.asarray(qb, dtype=np.float64).reshape(4)
    if fraction <= 0.0:
        return qa.copy()
    if fraction >= 1.0:
        return qb.copy()
    dot = float(np.dot(qa, qb))
    if dot < 0.0:
        qb = -qb
        dot = -dot
    dot = min(1.0, dot)
    theta = math.acos(dot)
    if theta < 1e-9:
        out = qa + fraction * (qb - qa)
        return out / np.linalg.norm(out)
    s = math.sin(theta)
    out = (math.sin((1.0 - fraction) * theta) / s) * qa + (
        math.sin(fraction * theta) / s
    ) * qb
    return out / np.linalg.norm(out)


# ---------------------------------------------------------------------------
# pose operations


def compose(a: Pose, b: Pose) -> Pose:
    """Chain two frame maps: the result applies b first, then a."""
    position = rotate_vectors(a.quaternion, b.position) + a.position
    quaternion = quat_norm_fix(quat_mul(a.quaternion, b.quaternion))
    return Pose(position, quaternion)


def inverse(a: Pose) -> Pose:
    q_inv = quat_conjugate(a.quaternion)
    position = -rotate_vectors(q_inv, a.position)
    return Pose(position, q_inv)


def relative_transform(src: Pose, dst: Pose) -> RigidTransform:
    """The map T with compose(src, T) == dst, i.e. inverse(src) * dst."""
    return compose(inverse(src), dst)


def transform_points(
    points: np.ndarray, transform: RigidTransform, frame_anchor: Pose
) -> np.ndarray:
    """Apply a transform expressed in an anchor frame to world-frame points.

    Each point is expressed in the anchor frame, mapped by ``transform``,
    and re-expressed in the world. With the anchor at the source
    end-effector pose this moves an attached point cluster rigidly to the
    re-targeted end-effector placement while an identity transform is an
    exact no-op.
    """
    effective = compose(frame_anchor, compose(transform, inverse(frame_anchor)))
    return effective.apply(points)


def planar_to_world(p: PlanarPose, base_height: float) -> Pose:
    return Pose(np.array([p.x, p.y, float(base_height)]), quat_from_yaw(p.yaw))


def world_to_planar(pose: Pose) -> PlanarPose:
    """Project a world pose onto SE(2): keep x, y and the z-axis yaw."""
    w, x, y, z = pose.quaternion
    yaw = math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    return PlanarPose(pose.position[0], pose.position[1], yaw)


# ---------------------------------------------------------------------------
# batched variants used in the augmentation hot path


def compose_arrays(pa, qa, pb, qb):
    """Batched compose over (..., 3)/(..., 4) pose component arrays."""
    position = rotate_vectors(qa, pb) + pa
    return position, quat_norm_fix(quat_mul(qa, qb))


def relative_arrays(pa, qa, pb, qb):
    """Batched relative transform: inverse(a) * b per row."""
    qa_inv = quat_conjugate(qa)
    position = rotate_vectors(qa_inv, pb - pa)
    return position, quat_norm_fix(quat_mul(qa_inv, qb))


def poses_allclose(a: Pose, b: Pose, tol: float = 1e-9) -> bool:
    return (
        float(np.max(np.abs(a.position - b.position))) <= tol
        and quat_distance(a.quaternion, b.quaternion) <= tol
    )
