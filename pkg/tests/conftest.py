"""Shared corpus: scripted sources, sampled docks, augmented demos.

Building demos costs seconds (farthest-point sampling per frame), so the
corpus is session-scoped and shared across test modules.
"""

import math

import numpy as np
import pytest

from dockaug.augmentor import AugmentationJob, augment
from dockaug.dock_sampler import SamplerConfig, sample_docks
from dockaug.geometry import PlanarPose, wrap_angle
from dockaug.motion_replanner import PlannerConfig
from dockaug.sim_harness import (
    bundled_scene,
    scripted_demo,
    source_dock,
    task_from_scene,
    world_from_scene,
)
from dockaug.trajectory_parser import parse

THRESHOLD = 0.1
MIN_SEG_LEN = 3


class Corpus:
    """One scene with sources, parses, and accepted docks per source."""

    def __init__(self, scene_name: str, n_sources: int, n_docks: int, seed: int):
        self.scene = bundled_scene(scene_name)
        self.task = task_from_scene(self.scene)
        self.sources = []
        self.parses = []
        self.docks = []  # per source: list of (dock, report)
        self.planner = PlannerConfig()
        for i in range(n_sources):
            dock = source_dock(
                self.scene,
                distance=0.52 + 0.03 * (i % 3),
                angle=math.pi + 0.12 * (i - n_sources / 2),
            )
            demo = scripted_demo(
                world_from_scene(self.scene), self.task, dock, noise_seed=seed + i
            )
            parsed = parse(demo, self.scene, THRESHOLD, MIN_SEG_LEN)
            cfg = SamplerConfig(
                n_docks=n_docks, seed=seed + 100 + i, yaw_jitter=0.45, max_attempts=256
            )
            self.sources.append(demo)
            self.parses.append(parsed)
            self.docks.append(sample_docks(self.scene, demo, parsed, cfg, self.planner))

    def jobs(self):
        out = []
        for i, (demo, parsed, docks) in enumerate(
            zip(self.sources, self.parses, self.docks)
        ):
            for j, (dock, report) in enumerate(docks):
                out.append(
                    AugmentationJob(
                        source=demo,
                        parsed=parsed,
                        dock=dock,
                        scene=self.scene,
                        seed=1000 + i,
                        report=report,
                        source_id=f"src_{i:03d}",
                        dock_id=f"src_{i:03d}-d{j:02d}",
                        planner=self.planner,
                    )
                )
        return out


@pytest.fixture(scope="session")
def pick_corpus():
    return Corpus("pick", n_sources=3, n_docks=4, seed=11)


@pytest.fixture(scope="session")
def place_corpus():
    return Corpus("place", n_sources=3, n_docks=4, seed=17)


@pytest.fixture(scope="session")
def pick_augmented(pick_corpus):
    return [(job, augment(job)) for job in pick_corpus.jobs()]


@pytest.fixture(scope="session")
def place_augmented(place_corpus):
    return [(job, augment(job)) for job in place_corpus.jobs()]


def spread_docks(corpus: Corpus, source_index: int = 0, count: int = 3):
    """Pick angularly spread accepted docks around the source's target."""
    docks = list(corpus.docks[source_index])
    src_angle = math.pi

    def offset(dr):
        return wrap_angle(math.atan2(dr[0].y, dr[0].x) - src_angle)

    docks.sort(key=offset)
    if count >= len(docks):
        return docks
    idx = np.linspace(0, len(docks) - 1, count).round().astype(int)
    return [docks[i] for i in idx]


def interpolated_test_docks(corpus: Corpus, count: int, seed: int, source_index=0):
    """Unseen docks interpolating across the accepted-dock arc."""
    docks = corpus.docks[source_index]
    offs = [wrap_angle(math.atan2(d.y, d.x) - math.pi) for d, _ in docks]
    lo, hi = min(offs), max(offs)
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        a = math.pi + lo + (hi - lo) * (i + 0.5) / count
        r = 0.55 * rng.uniform(0.9, 1.1)
        x, y = r * math.cos(a), r * math.sin(a)
        out.append(PlanarPose(x, y, math.atan2(-y, -x)))
    return out
