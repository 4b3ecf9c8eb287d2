import json
from pathlib import Path

import numpy as np
import pytest

from robridge.cli import main as cli_main
from robridge.harness import (
    ConfigError,
    cmd_collect,
    cmd_dagger,
    cmd_eval,
    cmd_replay,
    config_from_dict,
    load_config,
)
from robridge.loop import ExpertAsPolicy, LoopConfig, run_episode


def small_config(tmp_path, **over):
    doc = {
        "schema_version": 1,
        "tasks": ["press-button", "open-drawer"],
        "suites": ["nominal"],
        "seeds": {"base": 0, "episodes": 2},
        "demos_per_task": 2,
        "gea": {"epochs": 2, "lr": 1e-3},
        "dagger": {"n_eval": 2, "iterations": 2},
        "loop": {"max_ticks": 300},
        "out_dir": str(tmp_path / "out"),
    }
    doc.update(over)
    tmp_path.mkdir(parents=True, exist_ok=True)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


def test_config_unknown_task(tmp_path):
    path = small_config(tmp_path, tasks=["no-such-task"])
    with pytest.raises(ConfigError, match="unknown task"):
        load_config(path)


def test_config_unknown_suite(tmp_path):
    path = small_config(tmp_path, suites=["weird"])
    with pytest.raises(ConfigError, match="unknown suite"):
        load_config(path)


def test_config_schema_version(tmp_path):
    path = small_config(tmp_path, schema_version=99)
    from robridge.util import SchemaVersionError
    with pytest.raises(SchemaVersionError):
        load_config(path)


def test_collect_counts_and_rerun_identical(tmp_path):
    cfg = load_config(small_config(tmp_path))
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    ma = cmd_collect(cfg, out_a)
    mb = cmd_collect(cfg, out_b)
    assert ma == mb
    for tid in cfg.tasks:
        assert ma["tasks"][tid]["count"] == 2
    assert (out_a / "manifest.json").read_bytes() == (out_b / "manifest.json").read_bytes()
    for tid in cfg.tasks:
        for name in ma["tasks"][tid]["files"]:
            fa = out_a / "stores" / tid / name
            fb = out_b / "stores" / tid / name
            assert fa.read_bytes() == fb.read_bytes()


def test_dagger_produces_checkpoints_and_report(tmp_path):
    cfg = load_config(small_config(tmp_path))
    out = tmp_path / "run"
    cmd_collect(cfg, out)
    result = cmd_dagger(cfg, out)
    for it in range(2):
        d = out / "dagger" / f"iter_{it:02d}"
        assert (d / "checkpoint.bin").exists()
        state = json.loads((d / "state.json").read_text())
        assert all(np.isfinite(v) and v > 0 for v in state["weights"].values())
    report = (out / "dagger" / "report.txt").read_text()
    assert "weights per iteration" in report
    assert Path(result["checkpoint"]).exists()


def test_dagger_requires_stores(tmp_path):
    cfg = load_config(small_config(tmp_path))
    with pytest.raises(ConfigError, match="collect"):
        cmd_dagger(cfg, tmp_path / "nostores")


def test_dagger_names_corrupt_file(tmp_path):
    cfg = load_config(small_config(tmp_path))
    out = tmp_path / "run"
    cmd_collect(cfg, out)
    victim = next((out / "stores" / "press-button").glob("*.traj"))
    victim.write_bytes(b'{"schema_version": 1, "task_id": "press-button", "seed": 0, '
                       b'"success": true, "final_tick": 1, "steps": 5}\n\x01\x02')
    with pytest.raises(RuntimeError, match=str(victim.name)):
        cmd_dagger(cfg, out)


def test_eval_expert_and_zero_tables(tmp_path):
    cfg = load_config(small_config(tmp_path))
    out = tmp_path / "eval"
    doc = cmd_eval(cfg, "expert", out)
    for tid in cfg.tasks:
        assert doc["table"][tid]["nominal"] >= 0.95
        assert doc["table"][tid]["Mean"] == doc["table"][tid]["nominal"]
    doc0 = cmd_eval(cfg, "zero", tmp_path / "eval0")
    for tid in cfg.tasks:
        assert doc0["table"][tid]["nominal"] <= 0.05
    text = (out / "table.txt").read_text()
    assert "not comparable" in text
    assert "press-button" in text


def test_eval_deterministic(tmp_path):
    cfg = load_config(small_config(tmp_path))
    a = cmd_eval(cfg, "expert", tmp_path / "e1")
    b = cmd_eval(cfg, "expert", tmp_path / "e2")
    assert a == b
    assert (tmp_path / "e1" / "table.txt").read_bytes() == (tmp_path / "e2" / "table.txt").read_bytes()


def test_eval_parallel_matches_serial(tmp_path):
    cfg = load_config(small_config(tmp_path))
    a = cmd_eval(cfg, "expert", tmp_path / "s1", jobs=1)
    b = cmd_eval(cfg, "expert", tmp_path / "s2", jobs=4)
    assert a == b


def test_eval_stage_table(tmp_path):
    cfg = load_config(small_config(tmp_path, tasks=["pick-insert"],
                                   seeds={"base": 0, "episodes": 2}))
    out = tmp_path / "lh"
    doc = cmd_eval(cfg, "expert", out)
    assert doc["stages"]["pick-insert"]["avg_len"] == 4.0
    assert "Avg. Len." in (out / "stages.txt").read_text()


def test_replay_roundtrip(tmp_path):
    log = tmp_path / "ep.jsonl"
    res = run_episode("press-button", ExpertAsPolicy(),
                      LoopConfig(log_path=str(log)), seed=4)
    out = tmp_path / "replay"
    info = cmd_replay(log, out)
    assert info["frames"] == res.ticks
    assert info["final_digest"] == res.final_digest
    frames = sorted((out / "frames").glob("*.ppm"))
    assert len(frames) == res.ticks
    head = frames[0].read_bytes()[:15]
    assert head.startswith(b"P6\n128 128\n255")
    assert (out / "timeline.txt").read_text().count("\n") == res.ticks


def test_replay_rejects_empty_log(tmp_path):
    log = tmp_path / "empty.jsonl"
    log.write_text("")
    with pytest.raises(ValueError, match="empty"):
        cmd_replay(log, tmp_path / "r")


def test_replay_rejects_bad_schema(tmp_path):
    log = tmp_path / "ep.jsonl"
    run_episode("press-button", ExpertAsPolicy(), LoopConfig(log_path=str(log)), seed=4)
    text = log.read_text().replace('"schema_version": 1', '"schema_version": 3', 1)
    log.write_text(text)
    from robridge.util import SchemaVersionError
    with pytest.raises(SchemaVersionError):
        cmd_replay(log, tmp_path / "r")


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    cfg_path = small_config(tmp_path)
    bad = small_config(tmp_path / "bad", tasks=["nope"])
    assert cli_main(["collect", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert cli_main(["collect", "--config", str(cfg_path), "--out", str(tmp_path / "ok")]) == 0
    assert (tmp_path / "ok" / "manifest.json").exists()
    # ROBRIDGE_OUT fallback
    monkeypatch.setenv("ROBRIDGE_OUT", str(tmp_path / "envout"))
    assert cli_main(["eval", "--config", str(cfg_path), "--checkpoint", "zero"]) == 0
    assert (tmp_path / "envout" / "table.txt").exists()
    assert cli_main(["replay", "--log", str(tmp_path / "missing.jsonl"),
                     "--out", str(tmp_path / "r")]) == 3
