"""Harness: scripted generation, replay mechanics, 1-NN evaluation."""

import math

import numpy as np
import pytest

import dockaug.sim_harness as H
from dockaug.demo_model import validate_demo
from dockaug.geometry import PlanarPose, Pose
from dockaug.trajectory_parser import MOTION, SKILL, parse

from conftest import interpolated_test_docks, spread_docks


def test_pick_demo_parses_motion_skill(pick_corpus):
    for parsed in pick_corpus.parses:
        assert [s.kind for s in parsed.segments] == [MOTION, SKILL]
        assert parsed.segments[1].object_id == "banana"


def test_place_demo_parses_against_phase_log(place_corpus):
    scene = place_corpus.scene
    wps = H.script_waypoints(scene, place_corpus.task, place_corpus.sources[0].docking, 17)
    phases = [w[2] for w in wps]
    assert phases == ["approach", "approach", "approach", "grasp", "lift", "transport", "lower", "release"]
    for parsed in place_corpus.parses:
        kinds = [s.kind for s in parsed.segments]
        assert kinds == [MOTION, SKILL, MOTION, SKILL]
        assert parsed.segments[1].object_id == "can"
        assert parsed.segments[3].object_id == "bin"


def test_scripted_demos_validate(pick_corpus, place_corpus):
    for demo in pick_corpus.sources + place_corpus.sources:
        assert validate_demo(demo, points_per_frame=1024, binary_gripper=True) == []


def test_source_replays_cleanly(pick_corpus, place_corpus):
    for corpus in (pick_corpus, place_corpus):
        for demo in corpus.sources:
            report = H.replay(H.world_from_scene(corpus.scene), demo, corpus.task)
            assert report.success
            assert report.collisions == 0
            assert report.reach_violations == 0


def test_accepted_augmentations_replay_cleanly(pick_augmented, place_augmented, pick_corpus, place_corpus):
    for corpus, augmented in ((pick_corpus, pick_augmented), (place_corpus, place_augmented)):
        for _, aug in augmented:
            report = H.replay(H.world_from_scene(corpus.scene), aug, corpus.task)
            assert report.clean_success(), report.events[:4]


def test_replay_deterministic(pick_corpus):
    demo = pick_corpus.sources[0]
    a = H.replay(H.world_from_scene(pick_corpus.scene), demo, pick_corpus.task)
    b = H.replay(H.world_from_scene(pick_corpus.scene), demo, pick_corpus.task)
    assert a.events == b.events
    assert a.success == b.success
    assert a.max_step_jump == b.max_step_jump


def test_grasp_requires_radius(pick_corpus):
    scene = pick_corpus.scene
    world = H.world_from_scene(scene, ee=Pose([0.3, 0.3, 0.4], [1, 0, 0, 0]))
    from dockaug.demo_model import Action

    events = H.step_world(
        world, Action(Pose([0.3, 0.3, 0.4], [1, 0, 0, 0]), 1.0), PlanarPose(0, 0.3, 0)
    )
    assert ("grasp_miss", -1, None) in events
    assert world.held is None


def test_reach_violation_freezes_ee(pick_corpus):
    scene = pick_corpus.scene
    start = Pose([-0.2, 0.0, 0.35], [1, 0, 0, 0])
    world = H.world_from_scene(scene, ee=start)
    from dockaug.demo_model import Action

    events = H.step_world(
        world, Action(Pose([5.0, 0.0, 0.35], [1, 0, 0, 0]), 0.0),
        PlanarPose(-0.55, 0.0, 0.0),
    )
    assert any(e[0] == "reach" for e in events)
    assert np.array_equal(world.ee.position, start.position)


def test_held_object_tracks_ee(place_corpus):
    scene = place_corpus.scene
    can = scene.object_by_id("can")
    start = Pose(can.points.mean(axis=0) + [0, 0, 0.012], [1, 0, 0, 0])
    world = H.world_from_scene(scene, ee=start)
    from dockaug.demo_model import Action

    dock = PlanarPose(-0.5, 0.05, 0.0)
    H.step_world(world, Action(start, 1.0), dock)
    assert world.held == "can"
    before = world.object_centroid("can")
    target = Pose(start.position + [0.0, 0.0, 0.05], start.quaternion)
    H.step_world(world, Action(target, 1.0), dock)
    after = world.object_centroid("can")
    assert after[2] - before[2] == pytest.approx(0.05, abs=1e-9)
    H.step_world(world, Action(target, 0.0), dock)
    assert world.held is None
    assert np.allclose(world.object_centroid("can"), after)


def test_bypassed_bad_dock_fails_replay(pick_corpus):
    """Negative control: skip the checks, replay must catch the bad dock."""
    from dockaug.augmentor import AugmentationJob, augment
    from dockaug.motion_replanner import PlannerConfig

    demo, parsed = pick_corpus.sources[0], pick_corpus.parses[0]
    # dock far outside the annulus: reach violations and task failure
    far = PlanarPose(2.5, 1.0, math.atan2(-1.0, -2.5))
    job = AugmentationJob(
        demo, parsed, far, pick_corpus.scene, seed=1,
        planner=PlannerConfig(ignore_collisions=True),
    )
    report = H.replay(H.world_from_scene(pick_corpus.scene), augment(job), pick_corpus.task)
    assert not report.clean_success()


def test_render_cloud_labels(pick_corpus):
    world = H.world_from_scene(pick_corpus.scene, ee=Pose([-0.2, 0, 0.35], [1, 0, 0, 0]))
    cloud = H.render_cloud(world)
    labels = set(np.unique(cloud.labels).tolist())
    assert {0, 1, 2, 3}.issubset(labels)
    assert len(cloud) >= 1024


def test_feature_sequential_centroid_matches_loop():
    rng = np.random.default_rng(2)
    pts = rng.uniform(-1, 1, size=(257, 3))
    seq = H.seq_centroid(pts)
    acc = np.zeros(3)
    for p in pts:  # bit-exact left-to-right reference
        acc = acc + p
    assert np.array_equal(seq, acc / 257.0)


def test_canonical_quat_sign():
    q = np.array([-0.5, 0.5, 0.5, 0.5])
    assert H.canonical_quat(q)[0] == 0.5
    z = np.array([0.0, -1.0, 0.0, 0.0])
    assert H.canonical_quat(z)[1] == 1.0


def test_nn_eval_memorization_and_trend(pick_corpus, pick_augmented):
    scene = pick_corpus.scene
    demo = pick_corpus.sources[0]
    res = H.nn_policy_eval([demo], [demo.docking], scene, seeds=range(6), max_steps=70)
    assert res["success_table"][0]["rate"] == 1.0

    spread = spread_docks(pick_corpus, 0, 3)
    augs = [
        aug
        for (job, aug) in pick_augmented
        if job.source_id == "src_000"
        and any(abs(job.dock.x - d.x) < 1e-12 for d, _ in spread)
    ]
    tests = interpolated_test_docks(pick_corpus, 4, seed=5)
    r1 = H.nn_policy_eval([demo], tests, scene, seeds=range(8), max_steps=70)
    r4 = H.nn_policy_eval([demo] + augs, tests, scene, seeds=range(8), max_steps=70)
    m1 = np.mean([row["rate"] for row in r1["success_table"]])
    m4 = np.mean([row["rate"] for row in r4["success_table"]])
    assert m4 >= m1


def test_nn_eval_far_dock_fails_without_augmentation(pick_corpus):
    demo = pick_corpus.sources[0]
    far = PlanarPose(
        0.7 * math.cos(math.pi - 0.7), 0.7 * math.sin(math.pi - 0.7), 0.0
    )
    far = PlanarPose(far.x, far.y, math.atan2(-far.y, -far.x))
    res = H.nn_policy_eval([demo], [far], pick_corpus.scene, seeds=range(6), max_steps=70)
    assert res["success_table"][0]["rate"] == 0.0


def test_nn_eval_empty_training_errors(pick_corpus):
    with pytest.raises(H.EvalError):
        H.nn_policy_eval([], [PlanarPose(0, 0, 0)], pick_corpus.scene)


def test_nn_eval_writes_log(tmp_path, pick_corpus):
    import json

    demo = pick_corpus.sources[0]
    path = tmp_path / "log.json"
    H.nn_policy_eval(
        [demo], [demo.docking], pick_corpus.scene, seeds=range(2), max_steps=30,
        log_path=path,
    )
    log = json.loads(path.read_text())
    assert log["feature_version"] == H.FEATURE_VERSION
    assert log["trust_radius"] == H.TRUST_RADIUS
    assert len(log["rollouts"]) == 2
    step = log["rollouts"][0]["steps"][0]
    assert len(step["action"]) == 8
    assert len(step["f"]) == 3 + 3 * len(pick_corpus.scene.objects) + 8


def test_target_frames_padding(pick_corpus):
    demo = H.scripted_demo(
        H.world_from_scene(pick_corpus.scene),
        pick_corpus.task,
        pick_corpus.sources[0].docking,
        noise_seed=99,
        target_frames=120,
    )
    assert len(demo) == 120
    report = H.replay(H.world_from_scene(pick_corpus.scene), demo, pick_corpus.task)
    assert report.clean_success()


def test_unachievable_script_raises_generation_error(pick_corpus):
    with pytest.raises(H.GenerationError):
        H.scripted_demo(
            H.world_from_scene(pick_corpus.scene),
            pick_corpus.task,
            pick_corpus.sources[0].docking,
            noise_seed=99,
            target_frames=5,  # fewer frames than the script can fit
        )
    # a dock from which the task cannot be executed (object out of reach)
    with pytest.raises(H.GenerationError):
        H.scripted_demo(
            H.world_from_scene(pick_corpus.scene),
            pick_corpus.task,
            PlanarPose(3.0, 0.0, math.pi),
            noise_seed=99,
        )
