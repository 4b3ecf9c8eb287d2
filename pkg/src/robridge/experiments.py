"""Scaled-down experiment recipes: demo collection, BC and adaptive-DAgger
training runs, and success-table evaluation. The acceptance suite and the
scripts/ entry points share these so every headline number comes from one
code path.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import dagger as daggerlib
from .augment import AugmentConfig
from .dagger import DaggerConfig, DaggerState, DemoStore, PiecewiseRewardMap
from .experts import rollout_expert
from .loop import ExpertAsPolicy, LoopConfig, NetPolicy, run_episode
from .policy import Dataset, PolicyParams, init_params, train
from .tasks import ExpertRandomization, load_catalog
from .util import rng_for

log = logging.getLogger("robridge.experiments")


def training_augment(seed: int = 1234) -> AugmentConfig:
    """Policy-stage corruption magnitudes used by the training experiments.

    Milder than the AugmentConfig class defaults: retuned so replayed
    experts still succeed on corrupted inputs at this scale (depth noise
    stays well under the 1 cm grasp tolerance).
    """
    return AugmentConfig(warp_mag=0.5, blur_sigma=1.0, hole_rate=0.05,
                         dilate_radius=1, shift_max=2, crop_margin=1,
                         segment_add_delete_p=0.08, seed=seed)


@dataclass
class ExperimentScales:
    """Knobs for the desk-scale training experiments."""
    bc_demos_per_task: int = 10
    dagger_demos_per_task: int = 5
    dagger_iterations: int = 10
    dagger_n_eval: int = 10
    bc_epochs: int = 120
    dagger_epochs_per_iter: int = 12
    lr: float = 1e-3
    seed: int = 0
    expert_rand: ExpertRandomization = field(default_factory=ExpertRandomization)
    augment: AugmentConfig = field(default_factory=training_augment)
    rollout_cfg: LoopConfig = field(default_factory=lambda: LoopConfig(max_ticks=400))


def collect_stores(root: Path, task_ids: list[str], per_task: int,
                   expert_rand: ExpertRandomization | None, seed: int,
                   ) -> dict[str, DemoStore]:
    """Seed per-task demo stores with successful expert rollouts."""
    stores = {}
    for tid in task_ids:
        store = DemoStore(root, tid)
        attempts = 0
        while len(store) < per_task:
            demo_seed = int(rng_for(seed, tid, "seed-demo", attempts).integers(1 << 31))
            attempts += 1
            if attempts > per_task * 5:
                raise RuntimeError(f"expert kept failing while seeding {tid!r}")
            traj = rollout_expert(tid, demo_seed, expert_rand)
            if traj.success:
                store.append(traj)
        stores[tid] = store
    return stores


def dataset_from_stores(stores: dict[str, DemoStore]) -> Dataset:
    trajs = []
    for tid in sorted(stores):
        trajs.extend(stores[tid].trajectories())
    return Dataset.from_trajectories(trajs)


def train_bc(stores: dict[str, DemoStore], scales: ExperimentScales,
             augmented: bool) -> PolicyParams:
    ds = dataset_from_stores(stores)
    params, metrics = train(
        init_params(scales.seed), ds, epochs=scales.bc_epochs, lr=scales.lr,
        seed=scales.seed, augment_cfg=scales.augment if augmented else None)
    log.info("bc train: %d samples, loss %.3e -> %.3e",
             len(ds), metrics["loss"][0], metrics["loss"][-1])
    return params


def train_dagger(stores: dict[str, DemoStore], scales: ExperimentScales,
                 augmented: bool, sample_budget: int | None) -> tuple[PolicyParams, list[dict]]:
    state = DaggerState(weights={tid: 1.0 for tid in stores}, stores=stores,
                        f=PiecewiseRewardMap(), n_eval=scales.dagger_n_eval)
    cfg = DaggerConfig(
        demos_per_task=scales.dagger_demos_per_task,
        n_eval=scales.dagger_n_eval,
        iterations=scales.dagger_iterations,
        seed=scales.seed,
        train_epochs=scales.dagger_epochs_per_iter,
        lr=scales.lr,
        sample_budget=sample_budget,
        augment_cfg=scales.augment if augmented else None,
        loop_cfg=scales.rollout_cfg,
    )
    params = init_params(scales.seed)
    history = []
    for _ in range(scales.dagger_iterations):
        state, params, metrics = daggerlib.iterate(state, params, cfg)
        history.append(metrics)
        log.info("dagger iter %d: weights %s sizes %s",
                 metrics["iteration"], metrics["weights"], metrics["dataset_sizes"])
    return params, history


def success_rate(policy, task_ids: list[str], suite: str, episodes_per_task: int,
                 seed_base: int, loop_cfg: LoopConfig | None = None) -> float:
    """Mean success over task_ids x episodes_per_task seeded episodes."""
    cfg = loop_cfg or LoopConfig(max_ticks=400)
    oks = []
    for tid in task_ids:
        for k in range(episodes_per_task):
            oks.append(run_episode(tid, policy, cfg, suite=suite,
                                   seed=seed_base + k).success)
    return float(np.mean(oks))


def suite_table(policy, task_ids: list[str], suites: list[str], episodes_per_task: int,
                seed_base: int, loop_cfg: LoopConfig | None = None) -> dict[str, float]:
    return {s: success_rate(policy, task_ids, s, episodes_per_task, seed_base, loop_cfg)
            for s in suites}
