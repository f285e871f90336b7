"""Augmentation: skill reuse, cloud editing, state coherence, batching."""

import numpy as np
import pytest

from dockaug.augmentor import (
    AugmentationJob,
    BatchConfig,
    augment,
    augment_batch,
    generate_actions,
    synthesize_observation,
    _plan_frames,
)
from dockaug.demo_model import Dataset, LABEL_ARM
from dockaug.dock_sampler import SamplerConfig
from dockaug.geometry import (
    Pose,
    compose,
    inverse,
    poses_allclose,
    quat_distance,
    relative_transform,
)
from dockaug.motion_replanner import PlannerConfig
from dockaug.scene import save_scene
from dockaug.sim_harness import bundled_scene, scripted_demo, source_dock, task_from_scene, world_from_scene
from dockaug.trajectory_parser import SKILL


def skill_pairs(job, aug):
    """Aligned (source skill frame, augmented skill frame) pairs."""
    plan = _plan_frames(job)
    pairs = []
    for src_seg, new_seg in zip(job.parsed.segments, plan.segments):
        if src_seg.kind != SKILL:
            continue
        assert len(src_seg) == len(new_seg)
        for off in range(len(src_seg)):
            pairs.append((src_seg.start + off, new_seg.start + off))
    return pairs


def test_skill_frames_bit_equal(pick_augmented):
    for job, aug in pick_augmented:
        for src_t, new_t in skill_pairs(job, aug):
            src = job.source.frames[src_t]
            new = aug.frames[new_t]
            assert np.array_equal(
                src.action.target_pose.position, new.action.target_pose.position
            )
            assert np.array_equal(
                src.action.target_pose.quaternion, new.action.target_pose.quaternion
            )
            assert src.action.gripper_cmd == new.action.gripper_cmd


def test_gripper_transition_sequence_preserved(pick_augmented, place_augmented):
    for job, aug in pick_augmented + place_augmented:
        def transitions(frames):
            cmds = [f.action.gripper_cmd for f in frames]
            return [
                (a, b) for a, b in zip(cmds, cmds[1:]) if a != b
            ]
        assert transitions(job.source.frames) == transitions(aug.frames)


def test_identity_dock_keeps_skill_frames(pick_corpus):
    demo, parsed = pick_corpus.sources[0], pick_corpus.parses[0]
    job = AugmentationJob(
        source=demo,
        parsed=parsed,
        dock=demo.docking,
        scene=pick_corpus.scene,
        seed=3,
    )
    aug = augment(job)
    plan = _plan_frames(job)
    for src_seg, new_seg in zip(parsed.segments, plan.segments):
        if src_seg.kind != SKILL:
            continue
        for off in range(len(src_seg)):
            a = demo.frames[src_seg.start + off]
            b = aug.frames[new_seg.start + off]
            assert np.array_equal(a.cloud.points, b.cloud.points)
            assert np.array_equal(
                a.state.ee_pose.position, b.state.ee_pose.position
            )


def test_generate_actions_splices_onto_skills(pick_corpus):
    demo, parsed = pick_corpus.sources[0], pick_corpus.parses[0]
    (dock, report) = pick_corpus.docks[0][0]
    job = AugmentationJob(demo, parsed, dock, pick_corpus.scene, seed=3, report=report)
    actions, segments = generate_actions(job)
    assert segments[-1].end == len(actions)
    # the motion segment's last action target equals the skill start pose
    for k, seg in enumerate(segments[:-1]):
        if seg.kind != "motion":
            continue
        nxt = segments[k + 1]
        goal = actions[seg.end - 1].target_pose
        skill_start = actions[nxt.start].target_pose
        assert poses_allclose(goal, skill_start, tol=1e-9)


def test_eq8_eq11_coherence(pick_augmented):
    for job, aug in pick_augmented:
        plan = _plan_frames(job)
        for t, frame in enumerate(aug.frames):
            src = job.source.frames[int(plan.pairing[t])]
            lhs = compose(frame.state.ee_pose, inverse(frame.action.target_pose))
            rhs = compose(src.state.ee_pose, inverse(src.action.target_pose))
            assert poses_allclose(lhs, rhs, tol=1e-9)


def test_delta_is_identity_on_skill_frames(pick_augmented):
    for job, aug in pick_augmented:
        plan = _plan_frames(job)
        for src_t, new_t in skill_pairs(job, aug):
            delta = relative_transform(
                job.source.frames[src_t].action.target_pose,
                aug.frames[new_t].action.target_pose,
            )
            assert np.linalg.norm(delta.position) <= 1e-9
            assert quat_distance(delta.quaternion, [1, 0, 0, 0]) <= 1e-9


def test_arm_rigidity_and_label_conservation(pick_augmented):
    rng = np.random.default_rng(0)
    for job, aug in pick_augmented[:4]:
        plan = _plan_frames(job)
        for t in rng.choice(len(aug.frames), size=6, replace=False):
            src = job.source.frames[int(plan.pairing[t])]
            new = aug.frames[int(t)]
            assert len(src.cloud) == len(new.cloud)
            assert np.array_equal(
                np.bincount(src.cloud.labels, minlength=8),
                np.bincount(new.cloud.labels, minlength=8),
            )
            mask = src.cloud.labels == LABEL_ARM
            a = src.cloud.points[mask]
            b = new.cloud.points[mask]
            da = np.linalg.norm(a[:, None] - a[None, :], axis=2)
            db = np.linalg.norm(b[:, None] - b[None, :], axis=2)
            keep = da > 1e-6
            assert np.max(np.abs(db[keep] - da[keep]) / da[keep]) < 1e-6


def test_motion_objects_untouched_pick(pick_augmented):
    """Pick approach: object points stay put while the arm moves."""
    for job, aug in pick_augmented[:3]:
        plan = _plan_frames(job)
        motion = plan.segments[0]
        assert motion.kind == "motion"
        for t in range(motion.start, motion.end):
            src = job.source.frames[int(plan.pairing[t])]
            new = aug.frames[t]
            obj_mask = (src.cloud.labels != LABEL_ARM) & (src.cloud.labels != 0)
            assert np.array_equal(
                src.cloud.points[obj_mask], new.cloud.points[obj_mask]
            )


def test_carried_object_moves_with_arm_place(place_augmented):
    """Place transport: the grasped can follows the gripper edit."""
    moved_any = False
    for job, aug in place_augmented[:3]:
        plan = _plan_frames(job)
        can_label = job.scene.object_by_id("can").label
        for seg_src, seg_new in zip(job.parsed.segments, plan.segments):
            if seg_src.kind != "motion" or seg_src.start == 0:
                continue
            for t in range(seg_new.start, seg_new.end):
                src = job.source.frames[int(plan.pairing[t])]
                new = aug.frames[t]
                mask = src.cloud.labels == can_label
                src_arm = src.cloud.points[src.cloud.labels == LABEL_ARM]
                new_arm = new.cloud.points[new.cloud.labels == LABEL_ARM]
                if not np.allclose(src_arm, new_arm, atol=1e-12):
                    # arm moved: the carried can must have moved with it
                    assert not np.allclose(
                        src.cloud.points[mask], new.cloud.points[mask], atol=1e-12
                    )
                    moved_any = True
                # relative arm-to-can geometry is preserved either way
                d_src = np.linalg.norm(
                    src_arm.mean(axis=0) - src.cloud.points[mask].mean(axis=0)
                )
                d_new = np.linalg.norm(
                    new_arm.mean(axis=0) - new.cloud.points[mask].mean(axis=0)
                )
                assert d_new == pytest.approx(d_src, abs=1e-9)
    assert moved_any


def test_synthesize_observation_identity_and_translation(pick_corpus):
    demo, parsed = pick_corpus.sources[0], pick_corpus.parses[0]
    job = AugmentationJob(demo, parsed, demo.docking, pick_corpus.scene, seed=3)
    plan = _plan_frames(job)
    skill_t = plan.segments[-1].start
    src = demo.frames[int(plan.pairing[skill_t])]
    cloud, state = synthesize_observation(job, skill_t, src, plan.actions[skill_t])
    assert np.allclose(cloud.points, src.cloud.points, atol=1e-9)
    assert np.allclose(state.ee_pose.position, src.state.ee_pose.position, atol=1e-9)


def test_rejected_report_refused(pick_corpus):
    from dockaug.dock_sampler import FeasibilityReport
    from dockaug.geometry import PlanarPose

    bad = FeasibilityReport(
        dock=PlanarPose(9, 9, 0),
        visibility_pass=False,
        visible_fraction=0.0,
        reachability_pass=False,
        reach_margin=-1.0,
        collision_pass=False,
        failing_segment=0,
        accepted=False,
    )
    with pytest.raises(ValueError):
        AugmentationJob(
            pick_corpus.sources[0],
            pick_corpus.parses[0],
            bad.dock,
            pick_corpus.scene,
            report=bad,
        )


def test_continuity_no_teleports(pick_augmented, place_augmented):
    for job, aug in pick_augmented + place_augmented:
        src_steps = [
            np.linalg.norm(
                b.action.target_pose.position - a.action.target_pose.position
            )
            for a, b in zip(job.source.frames, job.source.frames[1:])
        ]
        bound = max(job.planner.max_step, max(src_steps)) + 1e-9
        for a, b in zip(aug.frames, aug.frames[1:]):
            jump = np.linalg.norm(
                b.action.target_pose.position - a.action.target_pose.position
            )
            assert jump <= bound


def test_augment_batch_end_to_end(tmp_path, pick_corpus):
    ds = Dataset.create(tmp_path / "src", 1024, True, ["other", "arm", "object:banana", "object:rock"])
    save_scene(pick_corpus.scene, ds.root)
    for i, demo in enumerate(pick_corpus.sources[:2]):
        ds.add(f"src_{i:03d}", demo)
    ds.save()
    cfg = BatchConfig(sampler=SamplerConfig(n_docks=2, seed=8), planner=PlannerConfig())
    out, stats = augment_batch(Dataset.load(ds.root), tmp_path / "out", cfg)
    assert stats["n_augmented"] == 4
    assert not stats["failures"]
    loaded = Dataset.load(tmp_path / "out")
    assert len(loaded.demo_ids()) == 6  # 2 sources + 4 augmented
    aug = loaded.read("src_000-aug00")
    assert aug.provenance.kind == "augmented"
    assert aug.provenance.source_id == "src_000"
    # re-reading preserves bit-exact skill poses vs the stored source
    src = loaded.read("src_000")
    assert any(
        np.array_equal(
            src.frames[-1].action.target_pose.position,
            f.action.target_pose.position,
        )
        for f in aug.frames
    )
