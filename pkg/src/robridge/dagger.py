"""Adaptive-sampling offline DAgger.

Per-task sampling weights start equal, then follow a piecewise
reward-to-value map: hard tasks (low rewards) get larger weights and are
sampled more. Each iteration trains on the union of all task datasets,
evaluates the policy on weighted-sampled tasks, and appends
expert-relabeled corrections for the failures.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .experts import ExpertError, ExpertPolicy, Trajectory, TrajectoryStep, expert_action
from .experts import load_trajectory, rollout_expert, save_trajectory
from .policy import Dataset, PolicyParams, TrainConfig
from .policy import train as train_policy
from .tasks import ExpertRandomization
from .util import SCHEMA_VERSION, digest_file, rng_for

log = logging.getLogger("robridge.dagger")


@dataclass(frozen=True)
class PiecewiseRewardMap:
    """Right-closed piecewise-constant map from episode reward to weight value."""
    thresholds: tuple[float, ...] = (0.3, 0.7)
    values: tuple[float, ...] = (3.0, 2.0, 1.0)

    def __post_init__(self):
        if len(self.values) != len(self.thresholds) + 1:
            raise ValueError("need exactly one value per interval")
        if any(t2 <= t1 for t1, t2 in zip(self.thresholds, self.thresholds[1:])):
            raise ValueError("thresholds must be strictly ascending")
        if any(not 0.0 < t < 1.0 for t in self.thresholds):
            raise ValueError("thresholds must lie inside (0, 1)")
        if any(v <= 0 for v in self.values):
            raise ValueError("values must be positive")
        if any(v2 > v1 for v1, v2 in zip(self.values, self.values[1:])):
            raise ValueError("values must be non-increasing in reward")


def f_value(f: PiecewiseRewardMap, reward: float) -> float:
    """Value of the interval containing the reward; intervals are right-closed."""
    if not 0.0 <= reward <= 1.0:
        raise ValueError(f"reward {reward} outside [0, 1]")
    for t, v in zip(f.thresholds, f.values):
        if reward <= t:
            return v
    return f.values[-1]


def sample_tasks(weights: dict[str, float], n: int, seed: int) -> list[str]:
    """Draw n task ids with replacement, probability proportional to weight."""
    if n < 1:
        raise ValueError("n must be >= 1")
    ids = sorted(weights)
    w = np.array([weights[i] for i in ids], dtype=np.float64)
    p = w / w.sum()
    rng = rng_for(seed, "task-sample")
    draws = rng.choice(len(ids), size=n, replace=True, p=p)
    return [ids[int(k)] for k in draws]


class DemoStore:
    """Append-only set of trajectory files for one task, with an index."""

    def __init__(self, root: Path, task_id: str):
        self.task_id = task_id
        self.dir = Path(root) / task_id.replace("/", "_")
        self.dir.mkdir(parents=True, exist_ok=True)
        self.index_path = self.dir / "index.txt"
        if not self.index_path.exists():
            self.index_path.write_text("")

    def _entries(self) -> list[list[str]]:
        lines = self.index_path.read_text().splitlines()
        return [line.split("\t") for line in lines if line]

    def __len__(self) -> int:
        return len(self._entries())

    def sample_count(self) -> int:
        return sum(int(e[1]) for e in self._entries())

    def append(self, traj: Trajectory) -> Path:
        name = f"{len(self):05d}.traj"
        path = self.dir / name
        save_trajectory(traj, path)
        with open(self.index_path, "a", encoding="utf-8") as f:
            f.write(f"{name}\t{len(traj.steps)}\t{int(traj.success)}\t{digest_file(path)}\n")
        return path

    def trajectories(self) -> list[Trajectory]:
        return [load_trajectory(self.dir / e[0]) for e in self._entries()]

    def file_digests(self) -> dict[str, str]:
        return {e[0]: e[3] for e in self._entries()}


@dataclass
class DaggerState:
    weights: dict[str, float]
    stores: dict[str, DemoStore]
    f: PiecewiseRewardMap
    n_eval: int
    iteration: int = 0

    def dataset_sizes(self) -> dict[str, int]:
        return {tid: len(s) for tid, s in sorted(self.stores.items())}


@dataclass
class DaggerConfig:
    demos_per_task: int = 4
    n_eval: int = 10
    iterations: int = 10
    seed: int = 0
    train_epochs: int = 4
    lr: float = 1e-3
    sample_budget: int | None = None       # stop relabeling once total samples reach this
    relabel_max_steps: int = 300
    expert_rand: ExpertRandomization | None = None
    augment_cfg: object | None = None
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    loop_cfg: object | None = None


def init(task_ids: list[str], demos_per_task: int, f: PiecewiseRewardMap,
         n_eval: int, store_root: Path, seed: int = 0,
         expert_rand: ExpertRandomization | None = None,
         collect_fn=None) -> DaggerState:
    """Equal weights and demos_per_task expert trajectories per task."""
    if demos_per_task < 1:
        raise ValueError("demos_per_task must be >= 1")
    collect_fn = collect_fn or rollout_expert
    weights = {tid: 1.0 for tid in task_ids}
    stores = {}
    for tid in task_ids:
        store = DemoStore(store_root, tid)
        stores[tid] = store
        attempts = 0
        while len(store) < demos_per_task:
            demo_seed = int(rng_for(seed, tid, "seed-demo", attempts).integers(1 << 31))
            attempts += 1
            if attempts > demos_per_task * 5:
                raise ExpertError(f"expert kept failing while seeding {tid!r}")
            traj = collect_fn(tid, demo_seed, expert_rand)
            if traj.success:
                store.append(traj)
    return DaggerState(weights=weights, stores=stores, f=f, n_eval=n_eval)


def _default_rollout(task_id: str, seed: int, policy_params: PolicyParams, cfg: DaggerConfig):
    """Closed-loop evaluation returning (reward, failed, visited states)."""
    from .loop import LoopConfig, NetPolicy, run_episode
    loop_cfg = cfg.loop_cfg or LoopConfig(max_ticks=400)
    loop_cfg = replace(loop_cfg, keep_visited=True)
    result = run_episode(task_id, NetPolicy(policy_params), loop_cfg, seed=seed)
    return result.reward, not result.success, result.visited


def _default_relabel(task_id: str, visited, cfg: DaggerConfig) -> Trajectory | None:
    """Ask the expert for the correct action at every state the learner visited."""
    from .hcp import ConstraintError
    expert = ExpertPolicy()
    steps = []
    for v in visited[: cfg.relabel_max_steps]:
        try:
            a = expert_action(v.primitive, v.world, expert)
        except (ExpertError, ConstraintError, KeyError) as e:
            log.warning("relabel skipped for %s: %s", task_id, e)
            return None
        steps.append(TrajectoryStep(v.tensor.to_bytes(), np.asarray(a, dtype=np.float32), 0.0))
    if not steps:
        return None
    return Trajectory(task_id=task_id, seed=-1, steps=steps, success=False,
                      final_tick=len(steps))


def _train_on_union(policy_params: PolicyParams, state: DaggerState, cfg: DaggerConfig):
    trajs = []
    for tid in sorted(state.stores):
        trajs.extend(state.stores[tid].trajectories())
    dataset = Dataset.from_trajectories(trajs)
    return train_policy(policy_params, dataset, cfg.train_epochs, cfg.lr,
                        seed=cfg.seed + state.iteration, cfg=cfg.train_cfg,
                        augment_cfg=cfg.augment_cfg)


def iterate(state: DaggerState, policy_params: PolicyParams, cfg: DaggerConfig,
            rollout_fn=None, relabel_fn=None, train_fn=None, sampler_fn=None,
            ) -> tuple[DaggerState, PolicyParams, dict]:
    """One loop body: train, weighted-sample, test, reweight, relabel failures.

    The injectable functions exist so the algorithm's bookkeeping can be
    traced against scripted rollouts; production callers use the defaults.
    """
    rollout_fn = rollout_fn or _default_rollout
    relabel_fn = relabel_fn or _default_relabel
    train_fn = train_fn or _train_on_union
    sampler_fn = sampler_fn or (lambda s, c: sample_tasks(
        s.weights, s.n_eval, seed=int(rng_for(c.seed, "iter-sample", s.iteration).integers(1 << 31))))

    policy_params, train_metrics = train_fn(policy_params, state, cfg)

    sampled = sampler_fn(state, cfg)
    tests: dict[str, list[float]] = {}
    failures: dict[str, list] = {}
    for k, tid in enumerate(sampled):
        ep_seed = int(rng_for(cfg.seed, "iter-eval", state.iteration, k).integers(1 << 31))
        reward, failed, visited = rollout_fn(tid, ep_seed, policy_params, cfg)
        tests.setdefault(tid, []).append(float(reward))
        if failed:
            failures.setdefault(tid, []).append(visited)

    new_weights = dict(state.weights)
    for tid, rewards in sorted(tests.items()):
        new_weights[tid] = float(np.mean([f_value(state.f, r) for r in rewards]))

    relabeled = {tid: 0 for tid in sorted(state.stores)}
    skipped = 0
    budget_hit = False
    for tid in sorted(failures):
        for visited in failures[tid]:
            if cfg.sample_budget is not None:
                total = sum(s.sample_count() for s in state.stores.values())
                if total >= cfg.sample_budget:
                    budget_hit = True
                    break
            traj = relabel_fn(tid, visited, cfg)
            if traj is None:
                skipped += 1
                continue
            state.stores[tid].append(traj)
            relabeled[tid] += 1
        if budget_hit:
            break

    new_state = DaggerState(weights=new_weights, stores=state.stores, f=state.f,
                            n_eval=state.n_eval, iteration=state.iteration + 1)
    metrics = {
        "iteration": state.iteration,
        "sampled": sampled,
        "tests": {k: list(v) for k, v in sorted(tests.items())},
        "successes": {k: sum(1 for r in v if r >= 1.0) for k, v in sorted(tests.items())},
        "weights": dict(sorted(new_weights.items())),
        "dataset_sizes": new_state.dataset_sizes(),
        "relabeled": relabeled,
        "relabel_skipped": skipped,
        "train_loss": train_metrics.get("loss", []),
    }
    return new_state, policy_params, metrics


def save_state(state: DaggerState, path: Path) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "iteration": state.iteration,
        "n_eval": state.n_eval,
        "weights": dict(sorted(state.weights.items())),
        "f": {"thresholds": list(state.f.thresholds), "values": list(state.f.values)},
        "dataset_sizes": state.dataset_sizes(),
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
