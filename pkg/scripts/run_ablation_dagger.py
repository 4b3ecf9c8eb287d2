#!/usr/bin/env python3
"""Adaptive-sampling DAgger vs plain behavior cloning at equal sample budgets.

Trains both policies from scratch, then reports mean success over the five
generalization suites. Expect roughly half an hour at the default scales.
"""

import argparse
import tempfile
from pathlib import Path

from robridge.experiments import (
    ExperimentScales,
    collect_stores,
    dataset_from_stores,
    suite_table,
    train_bc,
    train_dagger,
)
from robridge.loop import NetPolicy
from robridge.tasks import SUITE_NAMES, load_catalog


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--episodes", type=int, default=20, help="eval episodes per (task, suite)")
    ap.add_argument("--seed-base", type=int, default=50_000)
    ap.add_argument("--workdir", default=None)
    args = ap.parse_args()

    scales = ExperimentScales()
    cat = load_catalog()
    tasks = cat.training_ids()
    work = Path(args.workdir) if args.workdir else Path(tempfile.mkdtemp(prefix="ablation_dagger_"))
    print(f"workdir: {work}")

    bc_stores = collect_stores(work / "bc", tasks, scales.bc_demos_per_task,
                               scales.expert_rand, scales.seed)
    budget = len(dataset_from_stores(bc_stores))
    print(f"sample budget: {budget}")
    p_bc = train_bc(bc_stores, scales, augmented=True)

    dg_stores = collect_stores(work / "dagger", tasks, scales.dagger_demos_per_task,
                               scales.expert_rand, scales.seed)
    p_dg, history = train_dagger(dg_stores, scales, augmented=True, sample_budget=budget)

    per_task = max(1, args.episodes // 1)
    rows = {}
    for name, p in (("bc", p_bc), ("dagger", p_dg)):
        rows[name] = suite_table(NetPolicy(p), tasks, list(SUITE_NAMES), per_task,
                                 args.seed_base)
        mean = sum(rows[name].values()) / len(rows[name])
        print(f"{name:7s} " + "  ".join(f"{s}={v:.3f}" for s, v in rows[name].items())
              + f"  mean={mean:.3f}")
    gap = (sum(rows["dagger"].values()) - sum(rows["bc"].values())) / len(SUITE_NAMES)
    print(f"dagger - bc mean gap: {gap*100:+.1f} percentage points")


if __name__ == "__main__":
    main()
