#!/usr/bin/env python3
"""Closed-loop recovery: one injected transient grasp fault per episode,
retry budgets compared over seeded episodes."""

import argparse

from robridge.experiments import success_rate
from robridge.loop import ExpertAsPolicy, FaultConfig, LoopConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--episodes", type=int, default=100)
    ap.add_argument("--task", default="pick-place")
    ap.add_argument("--seed-base", type=int, default=70_000)
    args = ap.parse_args()

    rates = {}
    for budget in (0, 2):
        cfg = LoopConfig(retry_budget=budget, fault=FaultConfig(), max_ticks=600)
        rates[budget] = success_rate(ExpertAsPolicy(), [args.task], "nominal",
                                     args.episodes, args.seed_base, cfg)
        print(f"retry_budget={budget}: success {rates[budget]:.3f}")
    print(f"recovery gain: {100*(rates[2]-rates[0]):+.1f} pp")


if __name__ == "__main__":
    main()
