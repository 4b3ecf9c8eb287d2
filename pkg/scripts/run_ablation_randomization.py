#!/usr/bin/env python3
"""Two-stage domain randomization vs none, scored on the unseen-camera suite.

"Randomized": demos collected under scene randomization plus mask/depth
corruption during training. "Plain": fixed nominal scenes, no corruption.
"""

import argparse
import tempfile
from pathlib import Path

from robridge.experiments import ExperimentScales, collect_stores, train_bc
from robridge.loop import NetPolicy
from robridge.experiments import success_rate
from robridge.tasks import ExpertRandomization, load_catalog


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--episodes", type=int, default=20, help="eval episodes per task")
    ap.add_argument("--seed-base", type=int, default=60_000)
    ap.add_argument("--workdir", default=None)
    args = ap.parse_args()

    cat = load_catalog()
    tasks = cat.training_ids()
    work = Path(args.workdir) if args.workdir else Path(tempfile.mkdtemp(prefix="ablation_rand_"))
    print(f"workdir: {work}")

    scales_rand = ExperimentScales(expert_rand=ExpertRandomization())
    stores_rand = collect_stores(work / "rand", tasks, scales_rand.bc_demos_per_task,
                                 scales_rand.expert_rand, scales_rand.seed)
    p_rand = train_bc(stores_rand, scales_rand, augmented=True)

    scales_plain = ExperimentScales()
    stores_plain = collect_stores(work / "plain", tasks, scales_plain.bc_demos_per_task,
                                  None, scales_plain.seed)
    p_plain = train_bc(stores_plain, scales_plain, augmented=False)

    for suite in ("nominal", "unseen_camera"):
        r = success_rate(NetPolicy(p_rand), tasks, suite, args.episodes, args.seed_base)
        p = success_rate(NetPolicy(p_plain), tasks, suite, args.episodes, args.seed_base)
        print(f"{suite:14s} randomized={r:.3f} plain={p:.3f} gap={100*(r-p):+.1f} pp")


if __name__ == "__main__":
    main()
