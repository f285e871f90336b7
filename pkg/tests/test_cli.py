"""CLI: exit codes, report formats, idempotence, fault injection."""

import hashlib
import json
from pathlib import Path

import pytest

from dockaug.cli import (
    EXIT_CONFIG,
    EXIT_DATA,
    EXIT_OK,
    EXIT_VERIFY,
    main,
)


@pytest.fixture(scope="module")
def source_ds(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli") / "src_ds"
    code = main(
        ["gen-source", "--scene", "pick", "--out", str(root), "--num", "2", "--seed", "5"]
    )
    assert code == EXIT_OK
    return root


def tree_digest(root: Path) -> dict:
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = hashlib.sha256(
                path.read_bytes()
            ).hexdigest()
    return out


def test_gen_source_layout(source_ds):
    assert (source_ds / "manifest.json").is_file()
    assert (source_ds / "scenes" / "pick_desk.json").is_file()
    assert (source_ds / "demos" / "src_000.bin").is_file()


def test_parse_command(source_ds, capsys):
    code = main(
        ["parse", "--dataset", str(source_ds), "--demo", "src_000", "--report", "json"]
    )
    assert code == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    kinds = [s["kind"] for s in report["segments"]]
    assert kinds == ["motion", "skill"]


def test_sample_command(source_ds, capsys):
    code = main(
        ["sample", "--dataset", str(source_ds), "--demo", "src_000",
         "--docks", "2", "--seed", "3", "--report", "json"]
    )
    assert code == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert len(report["accepted"]) == 2
    assert all(r["accepted"] for r in report["accepted"])


def test_augment_then_verify_then_stats(source_ds, tmp_path, capsys):
    out = tmp_path / "aug"
    code = main(
        ["augment", "--dataset", str(source_ds), "--out", str(out),
         "--docks", "2", "--seed", "3", "--report", "json"]
    )
    assert code == EXIT_OK
    stats = json.loads(capsys.readouterr().out)["stats"]
    assert stats["n_augmented"] == 4
    assert main(["verify", "--dataset", str(out)]) == EXIT_OK
    capsys.readouterr()
    assert main(["stats", "--dataset", str(out), "--report", "json"]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["augmented"] == 4
    assert summary["sources"] == 2


def test_augment_rerun_byte_identical(source_ds, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(
            ["augment", "--dataset", str(source_ds), "--out", str(out),
             "--docks", "2", "--seed", "3"]
        ) == EXIT_OK
    assert tree_digest(a) == tree_digest(b)


def test_parallel_jobs_preserve_determinism(source_ds, tmp_path):
    serial, parallel = tmp_path / "serial", tmp_path / "parallel"
    for out, jobs in ((serial, "1"), (parallel, "3")):
        assert main(
            ["augment", "--dataset", str(source_ds), "--out", str(out),
             "--docks", "2", "--seed", "3", "--jobs", jobs]
        ) == EXIT_OK
    assert tree_digest(serial) == tree_digest(parallel)


def test_verify_flags_corrupted_demo(source_ds, tmp_path, capsys):
    out = tmp_path / "aug"
    main(["augment", "--dataset", str(source_ds), "--out", str(out), "--docks", "1", "--seed", "2"])
    capsys.readouterr()
    victim = out / "demos" / "src_000-aug00.bin"
    blob = bytearray(victim.read_bytes())
    blob[:4] = b"\xff\xff\xff\xff"
    victim.write_bytes(bytes(blob))
    code = main(["verify", "--dataset", str(out), "--report", "json"])
    assert code == EXIT_VERIFY
    report = json.loads(capsys.readouterr().out)
    flagged = [r for r in report["replays"] if not r["ok"]]
    assert [r["demo"] for r in flagged] == ["src_000-aug00"]


def test_missing_manifest_is_data_error(tmp_path, capsys):
    empty = tmp_path / "nothing"
    empty.mkdir()
    code = main(["stats", "--dataset", str(empty)])
    assert code == EXIT_DATA
    assert "manifest" in capsys.readouterr().err


def test_existing_out_dir_is_config_error(source_ds, tmp_path):
    out = tmp_path / "occupied"
    out.mkdir()
    code = main(["augment", "--dataset", str(source_ds), "--out", str(out)])
    assert code == EXIT_CONFIG


def test_bad_range_is_config_error(source_ds, tmp_path):
    code = main(
        ["augment", "--dataset", str(source_ds), "--out", str(tmp_path / "x"),
         "--range", "1.2:0.8"]
    )
    assert code == EXIT_CONFIG


def test_print_config_resolves_file_and_flags(source_ds, tmp_path, capsys):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"docks": 3, "threshold": 0.12}))
    code = main(
        ["augment", "--dataset", str(source_ds), "--out", str(tmp_path / "y"),
         "--config", str(cfg_file), "--seed", "9", "--print-config"]
    )
    assert code == EXIT_OK
    resolved = json.loads(capsys.readouterr().out)
    assert resolved["docks"] == 3
    assert resolved["threshold"] == 0.12
    assert resolved["seed"] == 9


def test_failed_augment_leaves_no_partial_output(source_ds, tmp_path):
    from dockaug.cli import EXIT_EXHAUSTED

    out = tmp_path / "never"
    code = main(
        ["augment", "--dataset", str(source_ds), "--out", str(out),
         "--docks", "4", "--range", "6.0:7.0", "--seed", "1"]
    )
    assert code == EXIT_EXHAUSTED
    assert not out.exists()
    assert not list(tmp_path.glob(".never.tmp-*"))


def test_eval_nn_command(source_ds, tmp_path, capsys):
    docks = tmp_path / "docks.json"
    manifest = json.loads((source_ds / "manifest.json").read_text())
    docks.write_text(json.dumps([manifest["demos"][0]["dock"]]))
    log = tmp_path / "log.json"
    code = main(
        ["eval-nn", "--train", str(source_ds), "--docks", str(docks),
         "--seeds", "2", "--log", str(log), "--report", "json"]
    )
    assert code == EXIT_OK
    table = json.loads(capsys.readouterr().out)["success_table"]
    assert table[0]["trials"] == 2
    assert log.is_file()
