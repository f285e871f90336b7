"""Command-line front end: parse, sample, augment, verify, eval-nn, stats.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 feasibility
exhaustion, 5 verification failure. Subcommands write machine-readable
reports to stdout (``--report json``) and diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
import uuid
from dataclasses import dataclass
from pathlib import Path

from . import augmentor, sim_harness
from .demo_model import Dataset, DemoFormatError, DemoInvariantError, canonical_json
from .dock_sampler import FeasibilityExhaustion, SamplerConfig, sample_docks
from .geometry import PlanarPose
from .motion_replanner import PlannerConfig
from .scene import load_scene, save_scene
from .trajectory_parser import parse as parse_trajectory
from .trajectory_parser import segment_table

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_EXHAUSTED = 4
EXIT_VERIFY = 5


@dataclass
class RunConfig:
    threshold: float = 0.1
    min_seg_len: int = 3
    points: int = 1024
    docks: int = 4
    range_lo: float = 0.8
    range_hi: float = 1.2
    yaw_jitter: float = 0.35
    seed: int = 0
    jobs: int = 1
    retime: str = "match"
    report: str = "text"

    @staticmethod
    def from_args(args) -> "RunConfig":
        cfg = RunConfig()
        if getattr(args, "config", None):
            path = Path(args.config)
            if not path.is_file():
                raise ConfigError(f"config file not found: {path}")
            try:
                data = json.loads(path.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {path}: {exc}") from exc
            for key, value in data.items():
                if not hasattr(cfg, key):
                    raise ConfigError(f"unknown config key {key!r}")
                setattr(cfg, key, value)
        for key in vars(cfg):
            value = getattr(args, key, None)
            if value is not None:
                setattr(cfg, key, value)
        if getattr(args, "range", None):
            cfg.range_lo, cfg.range_hi = _parse_range(args.range)
        if cfg.points not in (1024, 2048):
            raise ConfigError(f"points must be 1024 or 2048, got {cfg.points}")
        if cfg.retime != "match" and not cfg.retime.startswith("fixed:"):
            raise ConfigError(f"retime must be 'match' or 'fixed:<n>', got {cfg.retime!r}")
        return cfg

    def retime_policy(self):
        if self.retime == "match":
            return "match"
        return int(self.retime.split(":", 1)[1])

    def to_json(self) -> dict:
        return dict(vars(self))


class ConfigError(ValueError):
    pass


def _parse_range(text: str) -> tuple:
    try:
        lo, hi = text.split(":")
        lo, hi = float(lo), float(hi)
    except ValueError as exc:
        raise ConfigError(f"bad --range {text!r}, expected lo:hi") from exc
    if not (0 < lo <= hi):
        raise ConfigError(f"bad --range {text!r}: need 0 < lo <= hi")
    return lo, hi


def _emit(report: dict, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(report, indent=2, sort_keys=True))
        return
    for line in _text_lines(report):
        print(line)


def _text_lines(obj, prefix="") -> list:
    lines = []
    if isinstance(obj, dict):
        for key in obj:
            value = obj[key]
            if isinstance(value, (dict, list)):
                lines.append(f"{prefix}{key}:")
                lines.extend(_text_lines(value, prefix + "  "))
            else:
                lines.append(f"{prefix}{key}: {value}")
    elif isinstance(obj, list):
        for value in obj:
            if isinstance(value, (dict, list)):
                lines.extend(_text_lines(value, prefix + "  "))
                lines.append(prefix + "  -")
            else:
                lines.append(f"{prefix}- {value}")
    return lines


def _load_dataset(path: str) -> Dataset:
    return Dataset.load(Path(path))


def cmd_gen_source(args) -> int:
    """Generate scripted source demos for a bundled scene (test data)."""
    cfg = RunConfig.from_args(args)
    scene = sim_harness.bundled_scene(args.scene)
    task = sim_harness.task_from_scene(scene)
    out = Path(args.out)
    ds = Dataset.create(
        out, cfg.points, True, _labels_for(scene)
    )
    save_scene(scene, out)
    for i in range(args.num):
        dock = sim_harness.source_dock(
            scene, distance=0.55 + 0.02 * (i % 3), angle=3.14159 + 0.08 * (i - args.num // 2)
        )
        demo = sim_harness.scripted_demo(
            sim_harness.world_from_scene(scene),
            task,
            dock,
            noise_seed=cfg.seed + i,
            points=cfg.points,
            target_frames=args.frames,
        )
        ds.add(f"src_{i:03d}", demo)
    ds.save()
    _emit({"dataset": str(out), "sources": args.num, "scene": scene.id}, cfg.report)
    return EXIT_OK


def _labels_for(scene) -> list:
    labels = ["other", "arm"]
    by_code = {obj.label: obj.id for obj in scene.objects}
    for code in sorted(by_code):
        while len(labels) < code:
            labels.append(f"unused:{len(labels)}")
        labels.append(f"object:{by_code[code]}")
    return labels


def cmd_parse(args) -> int:
    cfg = RunConfig.from_args(args)
    ds = _load_dataset(args.dataset)
    demo = ds.read(args.demo)
    scene = load_scene(ds.root, demo.scene_id)
    parsed = parse_trajectory(demo, scene, cfg.threshold, cfg.min_seg_len)
    _emit({"demo": args.demo, "threshold": parsed.threshold, "segments": segment_table(parsed)}, cfg.report)
    return EXIT_OK


def cmd_sample(args) -> int:
    cfg = RunConfig.from_args(args)
    ds = _load_dataset(args.dataset)
    demo = ds.read(args.demo)
    scene = load_scene(ds.root, demo.scene_id)
    parsed = parse_trajectory(demo, scene, cfg.threshold, cfg.min_seg_len)
    sampler = SamplerConfig(
        n_docks=cfg.docks,
        range_ratio=(cfg.range_lo, cfg.range_hi),
        yaw_jitter=cfg.yaw_jitter,
        seed=cfg.seed,
    )
    accepted = sample_docks(scene, demo, parsed, sampler, PlannerConfig())
    _emit(
        {"demo": args.demo, "accepted": [r.to_json() for _, r in accepted]},
        cfg.report,
    )
    return EXIT_OK


def cmd_augment(args) -> int:
    cfg = RunConfig.from_args(args)
    if args.print_config:
        print(canonical_json(cfg.to_json()), end="")
        return EXIT_OK
    ds = _load_dataset(args.dataset)
    out = Path(args.out)
    if out.exists():
        raise ConfigError(f"output directory already exists: {out}")
    batch = augmentor.BatchConfig(
        sampler=SamplerConfig(
            n_docks=cfg.docks,
            range_ratio=(cfg.range_lo, cfg.range_hi),
            yaw_jitter=cfg.yaw_jitter,
            seed=cfg.seed,
        ),
        planner=PlannerConfig(),
        threshold=cfg.threshold,
        min_seg_len=cfg.min_seg_len,
        retime_policy=cfg.retime_policy(),
        include_sources=not args.no_sources,
        jobs=cfg.jobs,
    )
    tmp = out.parent / f".{out.name}.tmp-{uuid.uuid4().hex[:8]}"
    try:
        _, stats = augmentor.augment_batch(ds, tmp, batch)
        if stats["failures"] and stats["n_augmented"] == 0:
            kinds = {f["kind"] for f in stats["failures"].values()}
            if kinds == {"FeasibilityExhaustion"}:
                raise FeasibilityExhaustion(
                    batch.sampler.max_attempts, {"see": "stats"}
                ) from None
            raise DemoFormatError(f"no demo could be augmented: {stats['failures']}")
        tmp.rename(out)
    except Exception:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    _emit({"out": str(out), "stats": stats}, cfg.report)
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = RunConfig.from_args(args)
    ds = _load_dataset(args.dataset)
    scenes = {sid: load_scene(ds.root, sid) for sid in ds.manifest["scenes"]}
    table = []
    failures = 0
    for demo_id in ds.demo_ids():
        try:
            demo = ds.read(demo_id)
            scene = scenes[demo.scene_id]
            task = sim_harness.task_from_scene(scene)
            report = sim_harness.replay(
                sim_harness.world_from_scene(scene), demo, task
            )
            ok = report.clean_success()
            table.append(
                {
                    "demo": demo_id,
                    "ok": ok,
                    "success": report.success,
                    "collisions": report.collisions,
                    "reach_violations": report.reach_violations,
                    "max_step_jump": round(report.max_step_jump, 6),
                }
            )
        except (DemoFormatError, DemoInvariantError, ValueError) as exc:
            table.append({"demo": demo_id, "ok": False, "error": str(exc)})
            ok = False
        failures += 0 if ok else 1
    _emit({"dataset": str(ds.root), "failures": failures, "replays": table}, cfg.report)
    return EXIT_OK if failures == 0 else EXIT_VERIFY


def cmd_eval_nn(args) -> int:
    cfg = RunConfig.from_args(args)
    ds = _load_dataset(args.train)
    scenes = {sid: load_scene(ds.root, sid) for sid in ds.manifest["scenes"]}
    if len(scenes) != 1:
        raise DemoFormatError("eval-nn expects a single-scene training dataset")
    scene = next(iter(scenes.values()))
    docks_spec = json.loads(Path(args.docks).read_text())
    docks = [PlanarPose(d["x"], d["y"], d["yaw"]) for d in docks_spec]
    demos = [ds.read(i) for i in ds.demo_ids()]
    result = sim_harness.nn_policy_eval(
        demos,
        docks,
        scene,
        seeds=range(args.seeds),
        log_path=args.log,
    )
    _emit(
        {"train": str(ds.root), "success_table": result["success_table"]},
        cfg.report,
    )
    return EXIT_OK


def cmd_stats(args) -> int:
    cfg = RunConfig.from_args(args)
    ds = _load_dataset(args.dataset)
    per_kind = {"source": 0, "augmented": 0}
    provenance = []
    frames = 0
    for entry in ds.manifest["demos"]:
        per_kind[entry["provenance"]["kind"]] += 1
        frames += entry["frames"]
        if entry["provenance"]["kind"] == "augmented":
            provenance.append(
                {
                    "demo": entry["id"],
                    "source": entry["provenance"]["source_id"],
                    "dock": entry["provenance"]["dock_id"],
                }
            )
    _emit(
        {
            "dataset": str(ds.root),
            "demos": len(ds.manifest["demos"]),
            "sources": per_kind["source"],
            "augmented": per_kind["augmented"],
            "frames": frames,
            "points_per_frame": ds.manifest["points_per_frame"],
            "labels": ds.labels,
            "provenance": provenance,
        },
        cfg.report,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="dockaug", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    def common(p, dataset=True):
        if dataset:
            p.add_argument("--dataset", required=True)
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--threshold", type=float, default=None)
        p.add_argument("--min-seg-len", dest="min_seg_len", type=int, default=None)
        p.add_argument("--points", type=int, default=None, choices=(1024, 2048))
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--report", choices=("text", "json"), default=None)

    p = sub.add_parser("gen-source", help="generate scripted source demos")
    p.add_argument("--scene", required=True, choices=("pick", "place"))
    p.add_argument("--out", required=True)
    p.add_argument("--num", type=int, default=3)
    p.add_argument("--frames", type=int, default=None)
    common(p, dataset=False)
    p.set_defaults(func=cmd_gen_source)

    p = sub.add_parser("parse", help="segment one demo into motion/skill")
    p.add_argument("--demo", required=True)
    common(p)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("sample", help="sample feasible docking poses")
    p.add_argument("--demo", required=True)
    p.add_argument("--docks", type=int, default=None)
    p.add_argument("--range", default=None, help="lo:hi ratio of source distance")
    p.add_argument("--yaw-jitter", dest="yaw_jitter", type=float, default=None)
    common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("augment", help="augment every source demo in a dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--docks", type=int, default=None)
    p.add_argument("--range", default=None)
    p.add_argument("--yaw-jitter", dest="yaw_jitter", type=float, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--retime", default=None, help="match | fixed:<n>")
    p.add_argument("--no-sources", action="store_true", help="exclude source demos from the output")
    p.add_argument("--print-config", action="store_true")
    common(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("verify", help="replay every demo and check task success")
    common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("eval-nn", help="1-NN policy success rates at test docks")
    p.add_argument("--train", required=True)
    p.add_argument("--docks", required=True, help="JSON file with planar poses")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--log", default=None, help="write rollout log JSON here")
    p.add_argument("--config", default=None)
    p.add_argument("--report", choices=("text", "json"), default=None)
    p.set_defaults(func=cmd_eval_nn)

    p = sub.add_parser("stats", help="dataset summary and provenance graph")
    common(p)
    p.set_defaults(func=cmd_stats)
    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FeasibilityExhaustion as exc:
        print(f"feasibility exhaustion: {exc}", file=sys.stderr)
        return EXIT_EXHAUSTED
    except (DemoFormatError, DemoInvariantError, FileNotFoundError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except sim_harness.GenerationError as exc:
        print(f"generation error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
