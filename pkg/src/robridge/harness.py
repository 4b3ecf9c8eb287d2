"""Experiment orchestration: data collection, trainer runs, evaluation
tables, and episode replay. Every artifact carries a schema_version and
is byte-identical across reruns with the same config and seeds.
"""

from __future__ import annotations

import json
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dagger as daggerlib
from .augment import AugmentConfig
from .experts import ExpertError, rollout_expert
from .loop import ExpertAsPolicy, LoopConfig, NetPolicy, ZeroPolicy, run_episode, run_long_horizon
from .policy import TrainConfig, load_params, save_params
from .render import render
from .tasks import ExpertRandomization, instantiate, load_catalog
from .util import SCHEMA_VERSION, check_schema_version, digest_file
from .world import step

BANNER = ("# desk-scale simulator results; absolute rates are not comparable to\n"
          "# hardware or full-scale benchmark numbers.\n")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    tasks: list[str]
    suites: list[str] = field(default_factory=lambda: ["nominal"])
    seed_base: int = 0
    episodes_per_cell: int = 10
    demos_per_task: int = 4
    expert_randomization: ExpertRandomization | None = field(
        default_factory=ExpertRandomization)
    augment: AugmentConfig | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    train_epochs: int = 20
    train_lr: float = 1e-3
    dagger_n_eval: int = 10
    dagger_iterations: int = 10
    dagger_f: daggerlib.PiecewiseRewardMap = field(default_factory=daggerlib.PiecewiseRewardMap)
    dagger_sample_budget: int | None = None
    loop: LoopConfig = field(default_factory=LoopConfig)
    out_dir: str = "out"


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    check_schema_version(doc, f"config {path}")
    return config_from_dict(doc)


def config_from_dict(doc: dict) -> ExperimentConfig:
    cat = load_catalog()
    tasks = doc.get("tasks", [])
    if not tasks:
        raise ConfigError("config lists no tasks")
    for tid in tasks:
        if tid not in cat.tasks:
            raise ConfigError(f"config references unknown task {tid!r}")
    suites = doc.get("suites", ["nominal"])
    for s in suites:
        if s not in cat.suites:
            raise ConfigError(f"config references unknown suite {s!r}")
    seeds = doc.get("seeds", {})
    if seeds.get("episodes", 1) < 1:
        raise ConfigError("seeds.episodes must be >= 1")

    er = doc.get("expert_randomization")
    expert_rand = ExpertRandomization(**er) if isinstance(er, dict) else (
        ExpertRandomization() if er is None and "expert_randomization" not in doc else None)
    aug = doc.get("augment")
    augment = AugmentConfig(**aug) if isinstance(aug, dict) else None
    if augment is not None:
        augment.validate()
    gea = doc.get("gea", {})
    dag = doc.get("dagger", {})
    f_doc = dag.get("f", {})
    fmap = daggerlib.PiecewiseRewardMap(
        thresholds=tuple(f_doc.get("thresholds", (0.3, 0.7))),
        values=tuple(f_doc.get("values", (3.0, 2.0, 1.0))))
    loop_doc = doc.get("loop", {})
    return ExperimentConfig(
        tasks=list(tasks), suites=list(suites),
        seed_base=int(seeds.get("base", 0)),
        episodes_per_cell=int(seeds.get("episodes", 10)),
        demos_per_task=int(doc.get("demos_per_task", 4)),
        expert_randomization=expert_rand,
        augment=augment,
        train=TrainConfig(batch_size=int(gea.get("batch_size", 64))),
        train_epochs=int(gea.get("epochs", 20)),
        train_lr=float(gea.get("lr", 1e-3)),
        dagger_n_eval=int(dag.get("n_eval", 10)),
        dagger_iterations=int(dag.get("iterations", 10)),
        dagger_f=fmap,
        dagger_sample_budget=dag.get("sample_budget"),
        loop=LoopConfig(
            status_period=int(loop_doc.get("status_period", 25)),
            retry_budget=int(loop_doc.get("retry_budget", 2)),
            max_ticks=int(loop_doc.get("max_ticks", 1000)),
            primitive_timeout=int(loop_doc.get("primitive_timeout", 200)),
        ),
        out_dir=str(doc.get("out_dir", "out")),
    )


# ---------------------------------------------------------------------------
# collect

def cmd_collect(config: ExperimentConfig, out_dir: Path) -> dict:
    """Seed demo stores with expert rollouts and write a manifest."""
    out_dir = Path(out_dir)
    store_root = out_dir / "stores"
    store_root.mkdir(parents=True, exist_ok=True)
    manifest = {"schema_version": SCHEMA_VERSION, "tasks": {}}
    failures = []
    for tid in config.tasks:
        store = daggerlib.DemoStore(store_root, tid)
        attempts = 0
        while len(store) < config.demos_per_task:
            from .util import rng_for
            demo_seed = int(rng_for(config.seed_base, tid, "seed-demo", attempts).integers(1 << 31))
            attempts += 1
            if attempts > config.demos_per_task * 5:
                failures.append(tid)
                break
            traj = rollout_expert(tid, demo_seed, config.expert_randomization)
            if traj.success:
                store.append(traj)
        manifest["tasks"][tid] = {
            "count": len(store),
            "samples": store.sample_count(),
            "files": store.file_digests(),
        }
    _write_json(out_dir / "manifest.json", manifest)
    if failures:
        raise ExpertError(f"expert failed to seed tasks: {failures} (partial manifest written)")
    return manifest


# ---------------------------------------------------------------------------
# trainer runs

def cmd_dagger(config: ExperimentConfig, out_dir: Path, stores_from: Path | None = None) -> dict:
    """Run the adaptive-sampling trainer to budget, checkpointing each iteration."""
    from .policy import init_params

    out_dir = Path(out_dir)
    src_root = Path(stores_from) if stores_from else out_dir / "stores"
    if not src_root.exists():
        raise ConfigError(f"no demo stores at {src_root}; run collect first")
    work_root = out_dir / "dagger" / "stores"
    if work_root.exists():
        shutil.rmtree(work_root)
    shutil.copytree(src_root, work_root)

    stores = {tid: daggerlib.DemoStore(work_root, tid) for tid in config.tasks}
    for tid, store in stores.items():
        if len(store) == 0:
            raise ConfigError(f"store for {tid!r} is empty")
        for name in store.file_digests():
            try:
                from .experts import load_trajectory
                load_trajectory(store.dir / name)
            except Exception as e:
                raise RuntimeError(f"corrupt trajectory file {store.dir / name}: {e}")

    state = daggerlib.DaggerState(
        weights={tid: 1.0 for tid in config.tasks}, stores=stores,
        f=config.dagger_f, n_eval=config.dagger_n_eval)
    dcfg = daggerlib.DaggerConfig(
        demos_per_task=config.demos_per_task, n_eval=config.dagger_n_eval,
        iterations=config.dagger_iterations, seed=config.seed_base,
        train_epochs=config.train_epochs, lr=config.train_lr,
        sample_budget=config.dagger_sample_budget,
        augment_cfg=config.augment, train_cfg=config.train,
        loop_cfg=config.loop)
    params = init_params(config.seed_base)
    history = []
    for it in range(config.dagger_iterations):
        state, params, metrics = daggerlib.iterate(state, params, dcfg)
        itdir = out_dir / "dagger" / f"iter_{it:02d}"
        itdir.mkdir(parents=True, exist_ok=True)
        save_params(params, itdir / "checkpoint.bin")
        daggerlib.save_state(state, itdir / "state.json")
        _write_json(itdir / "metrics.json", {"schema_version": SCHEMA_VERSION, **metrics})
        history.append(metrics)
    _write_report(out_dir / "dagger" / "report.txt", config, history)
    return {"iterations": history, "checkpoint": str(out_dir / "dagger"
                                                     / f"iter_{config.dagger_iterations - 1:02d}"
                                                     / "checkpoint.bin")}


def _write_report(path: Path, config: ExperimentConfig, history: list[dict]) -> None:
    lines = [BANNER.rstrip("\n")]
    tasks = config.tasks
    header = "iter  " + "  ".join(f"{tid:>14s}" for tid in tasks)
    lines.append("weights per iteration:")
    lines.append(header)
    for h in history:
        lines.append(f"{h['iteration']:4d}  "
                     + "  ".join(f"{h['weights'].get(tid, float('nan')):14.4f}" for tid in tasks))
    lines.append("")
    lines.append("dataset sizes per iteration:")
    lines.append(header)
    for h in history:
        lines.append(f"{h['iteration']:4d}  "
                     + "  ".join(f"{h['dataset_sizes'].get(tid, 0):14d}" for tid in tasks))
    lines.append("")
    lines.append("successes/tests per iteration:")
    for h in history:
        tested = {k: len(v) for k, v in h["tests"].items()}
        succ = sum(h["successes"].values())
        total = sum(tested.values())
        rate = succ / total if total else 0.0
        lines.append(f"{h['iteration']:4d}  {succ}/{total} ({rate:.2f})  tested={tested}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# evaluation

def _policy_for(checkpoint: str):
    if checkpoint == "expert":
        return ExpertAsPolicy()
    if checkpoint == "zero":
        return ZeroPolicy()
    return NetPolicy(load_params(checkpoint))


def cmd_eval(config: ExperimentConfig, checkpoint: str, out_dir: Path,
             jobs: int = 1) -> dict:
    """Success-rate table over tasks x suites, plus stage counts for any
    multi-stage tasks in the config."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    policy = _policy_for(checkpoint)
    cat = load_catalog()
    plain = [tid for tid in config.tasks if not cat.task(tid).stages]
    staged = [tid for tid in config.tasks if cat.task(tid).stages]

    cells = [(tid, suite, config.seed_base + k)
             for tid in plain for suite in config.suites
             for k in range(config.episodes_per_cell)]

    def one(cell):
        tid, suite, seed = cell
        res = run_episode(tid, policy, config.loop, suite=suite, seed=seed)
        return cell, res.success

    results = {}
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            for cell, ok in ex.map(one, cells):
                results[cell] = ok
    else:
        for cell in cells:
            results[cell] = one(cell)[1]

    table = {}
    for tid in plain:
        row = {}
        for suite in config.suites:
            oks = [results[(tid, suite, config.seed_base + k)]
                   for k in range(config.episodes_per_cell)]
            row[suite] = float(np.mean(oks)) if oks else 0.0
        row["Mean"] = float(np.mean([row[s] for s in config.suites]))
        table[tid] = row

    doc = {"schema_version": SCHEMA_VERSION, "checkpoint": checkpoint,
           "episodes_per_cell": config.episodes_per_cell, "table": table}

    if staged:
        stage_doc = {}
        for tid in staged:
            counts = []
            for k in range(config.episodes_per_cell):
                counts.append(run_long_horizon(tid, policy, config.loop,
                                               seed=config.seed_base + k))
            n_stages = len(cat.task(tid).stages)
            hist = {str(s): sum(1 for c in counts if c >= s) / len(counts)
                    for s in range(1, n_stages + 1)}
            stage_doc[tid] = {"histogram": hist,
                              "avg_len": float(np.mean(counts))}
        doc["stages"] = stage_doc
        _write_stage_table(out_dir / "stages.txt", stage_doc)

    _write_json(out_dir / "table.json", doc)
    _write_eval_table(out_dir / "table.txt", config, table)
    return doc


def _write_eval_table(path: Path, config: ExperimentConfig, table: dict) -> None:
    cols = list(config.suites) + ["Mean"]
    lines = [BANNER.rstrip("\n")]
    lines.append(f"{'task':<16s}" + "".join(f"{c:>19s}" for c in cols))
    for tid, row in table.items():
        lines.append(f"{tid:<16s}" + "".join(f"{row[c]:19.3f}" for c in cols))
    if table:
        lines.append(f"{'overall':<16s}" + "".join(
            f"{float(np.mean([row[c] for row in table.values()])):19.3f}" for c in cols))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_stage_table(path: Path, stage_doc: dict) -> None:
    lines = [BANNER.rstrip("\n")]
    for tid, d in stage_doc.items():
        stages = "  ".join(f"{k}:{v:.2f}" for k, v in sorted(d["histogram"].items()))
        lines.append(f"{tid:<16s} stages>= {stages}   Avg. Len. {d['avg_len']:.2f}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# replay

def cmd_replay(log_path: Path, out_dir: Path) -> dict:
    """Re-simulate a logged episode, dump frames and a textual timeline,
    and verify the final frame digest."""
    from .render import frame_digest

    log_path = Path(log_path)
    out_dir = Path(out_dir)
    lines = [ln for ln in log_path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"episode log {log_path} is empty")
    header = json.loads(lines[0])
    check_schema_version(header, f"episode log {log_path}")
    footer = json.loads(lines[-1])
    records = [json.loads(ln) for ln in lines[1:-1]]
    if not footer.get("final"):
        raise ValueError(f"episode log {log_path} lacks a final record")

    world, _, cams = instantiate(header["task_id"], header["suite"], header["seed"],
                                 ExpertRandomization() if header.get("expert_rand") else None)
    cam3, cam1 = cams
    cam3.offset = tuple(header.get("camera_offset", cam3.offset))
    frames_dir = out_dir / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    timeline = []
    frame = render(world, cam3, cam1)
    for rec in records:
        _write_ppm(frames_dir / f"tick_{rec['tick']:05d}.ppm", frame.rgb3)
        timeline.append(f"tick {rec['tick']:5d}  cursor {rec['cursor']}  "
                        f"{rec['primitive']:<6s} {rec['obj']:<18s} reward {rec['reward']:.3f}")
        world = step(world, np.array(rec["action"]))
        frame = render(world, cam3, cam1)
    final_digest = frame_digest(frame)
    (out_dir / "timeline.txt").write_text("\n".join(timeline) + "\n", encoding="utf-8")
    if final_digest != footer["final_digest"]:
        raise RuntimeError(
            f"replay mismatch: recomputed digest {final_digest} != logged {footer['final_digest']}")
    return {"frames": len(records), "final_digest": final_digest,
            "success": footer["success"]}


def _write_ppm(path: Path, rgb: np.ndarray) -> None:
    h, w, _ = rgb.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(rgb.tobytes())


def _write_json(path: Path, doc: dict) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
