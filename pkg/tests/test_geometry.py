"""Pose algebra checked against a 4x4 homogeneous-matrix oracle (scipy)."""

import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from dockaug.geometry import (
    PlanarPose,
    Pose,
    compose,
    inverse,
    planar_to_world,
    poses_allclose,
    quat_distance,
    quat_from_yaw,
    relative_transform,
    rotate_vectors,
    slerp,
    transform_points,
    world_to_planar,
    wrap_angle,
)

RNG = np.random.default_rng(20240811)


def random_pose(rng=RNG) -> Pose:
    q = rng.normal(size=4)
    return Pose(rng.uniform(-2, 2, size=3), q / np.linalg.norm(q))


def to_matrix(pose: Pose) -> np.ndarray:
    """Independent oracle: homogeneous matrix via scipy's quaternion code."""
    m = np.eye(4)
    w, x, y, z = pose.quaternion
    m[:3, :3] = Rotation.from_quat([x, y, z, w]).as_matrix()
    m[:3, 3] = pose.position
    return m


def from_matrix(m: np.ndarray) -> Pose:
    x, y, z, w = Rotation.from_matrix(m[:3, :3]).as_quat()
    return Pose(m[:3, 3], [w, x, y, z])


def test_identity_compose():
    p = random_pose()
    assert poses_allclose(compose(Pose.identity(), p), p)
    assert poses_allclose(compose(p, Pose.identity()), p)


def test_compose_inverse_is_identity():
    for _ in range(50):
        p = random_pose()
        assert poses_allclose(compose(p, inverse(p)), Pose.identity())
        assert poses_allclose(compose(inverse(p), p), Pose.identity())


def test_inverse_pure_translation():
    p = Pose.from_translation([1.0, 2.0, 3.0])
    assert np.allclose(inverse(p).position, [-1.0, -2.0, -3.0])


def test_compose_matches_matrix_oracle():
    # frozen example: translate(1,0,0) then rotZ(90 deg)
    a = Pose.from_translation([1.0, 0.0, 0.0])
    b = Pose(np.zeros(3), quat_from_yaw(math.pi / 2))
    c = compose(a, b)
    assert np.allclose(c.position, [1.0, 0.0, 0.0], atol=1e-12)
    half = math.sqrt(0.5)
    assert quat_distance(c.quaternion, [half, 0.0, 0.0, half]) < 1e-12
    for _ in range(50):
        a, b = random_pose(), random_pose()
        expected = from_matrix(to_matrix(a) @ to_matrix(b))
        assert poses_allclose(compose(a, b), expected, tol=1e-9)


def test_inverse_matches_matrix_oracle():
    for _ in range(50):
        p = random_pose()
        assert poses_allclose(inverse(p), from_matrix(np.linalg.inv(to_matrix(p))))


def test_composition_is_associative():
    for _ in range(20):
        a, b, c = random_pose(), random_pose(), random_pose()
        assert poses_allclose(compose(compose(a, b), c), compose(a, compose(b, c)))


def test_relative_transform_recomposes():
    for _ in range(50):
        src, dst = random_pose(), random_pose()
        rel = relative_transform(src, dst)
        assert poses_allclose(compose(src, rel), dst)
    p = random_pose()
    assert poses_allclose(relative_transform(p, p), Pose.identity())
    assert poses_allclose(relative_transform(Pose.identity(), p), p)


def test_transform_points_identity_noop():
    pts = RNG.uniform(-1, 1, size=(40, 3))
    out = transform_points(pts, Pose.identity(), random_pose())
    assert np.allclose(out, pts, atol=1e-9)


def test_transform_points_translation_about_identity_anchor():
    pts = RNG.uniform(-1, 1, size=(25, 3))
    shift = Pose.from_translation([0.3, -0.1, 0.5])
    out = transform_points(pts, shift, Pose.identity())
    assert np.allclose(out, pts + shift.position, atol=1e-12)


def test_transform_points_matches_matrix_oracle():
    for _ in range(20):
        pts = RNG.uniform(-1, 1, size=(30, 3))
        t, anchor = random_pose(), random_pose()
        m = to_matrix(anchor) @ to_matrix(t) @ np.linalg.inv(to_matrix(anchor))
        hom = np.concatenate([pts, np.ones((len(pts), 1))], axis=1)
        expected = (hom @ m.T)[:, :3]
        assert np.allclose(transform_points(pts, t, anchor), expected, atol=1e-9)


def test_transform_points_preserves_pairwise_distances():
    pts = RNG.uniform(-1, 1, size=(60, 3))
    out = transform_points(pts, random_pose(), random_pose())
    d_in = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
    d_out = np.linalg.norm(out[:, None] - out[None, :], axis=2)
    mask = d_in > 1e-9
    assert np.max(np.abs(d_out[mask] - d_in[mask]) / d_in[mask]) < 1e-6


def test_quaternion_double_cover():
    p = random_pose()
    flipped = Pose(p.position, -np.asarray(p.quaternion))
    pts = RNG.uniform(-1, 1, size=(10, 3))
    assert np.allclose(p.apply(pts), flipped.apply(pts), atol=1e-12)


def test_quaternion_normalized_after_ops():
    p = Pose([0, 0, 0], [2.0, 0.0, 0.0, 0.0])  # constructor normalizes
    assert abs(np.linalg.norm(p.quaternion) - 1.0) < 1e-9
    chain = Pose.identity()
    for _ in range(200):
        chain = compose(chain, random_pose())
    assert abs(np.linalg.norm(chain.quaternion) - 1.0) < 1e-9


def test_degenerate_quaternion_rejected():
    with pytest.raises(ValueError):
        Pose([0, 0, 0], [0.0, 0.0, 0.0, 0.0])


def test_planar_to_world_and_back():
    assert poses_allclose(planar_to_world(PlanarPose(0, 0, 0), 0.0), Pose.identity())
    p = planar_to_world(PlanarPose(1.0, 2.0, math.pi / 2), 0.3)
    assert np.allclose(p.position, [1.0, 2.0, 0.3])
    assert quat_distance(p.quaternion, quat_from_yaw(math.pi / 2)) < 1e-12
    for _ in range(25):
        planar = PlanarPose(*RNG.uniform(-3, 3, size=2), RNG.uniform(-math.pi, math.pi))
        back = world_to_planar(planar_to_world(planar, 0.42))
        assert abs(back.x - planar.x) < 1e-12
        assert abs(back.y - planar.y) < 1e-12
        assert abs(wrap_angle(back.yaw - planar.yaw)) < 1e-12


def test_yaw_wraps_into_half_open_interval():
    assert PlanarPose(0, 0, math.pi).yaw == pytest.approx(math.pi)
    assert PlanarPose(0, 0, -math.pi).yaw == pytest.approx(math.pi)
    assert PlanarPose(0, 0, 3 * math.pi).yaw == pytest.approx(math.pi)
    assert -math.pi < PlanarPose(0, 0, 123.456).yaw <= math.pi


def test_slerp_endpoints_and_midpoint():
    qa = quat_from_yaw(0.0)
    qb = quat_from_yaw(math.pi / 2)
    assert np.allclose(slerp(qa, qb, 0.0), qa)
    assert np.allclose(slerp(qa, qb, 1.0), qb)
    assert quat_distance(slerp(qa, qb, 0.5), quat_from_yaw(math.pi / 4)) < 1e-12


def test_rotate_vectors_matches_matrix():
    for _ in range(20):
        p = random_pose()
        v = RNG.uniform(-1, 1, size=(7, 3))
        assert np.allclose(rotate_vectors(p.quaternion, v), v @ to_matrix(p)[:3, :3].T)
