#!/usr/bin/env python3
"""Run the four-arm policy-comparison study with the bundled defaults."""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from hitl_crystal.replication import StudyConfig, run_study, write_study_outputs


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results")
    parser.add_argument("--config", default=None, help="study config JSON")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--instances", type=int, default=None)
    parser.add_argument("--pool-size", type=int, default=None)
    args = parser.parse_args()

    config = StudyConfig.from_json(args.config) if args.config else StudyConfig()
    overrides = {}
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.instances is not None:
        overrides["n_instances"] = args.instances
    if args.pool_size is not None:
        overrides["pool_size"] = args.pool_size
    if overrides:
        config = replace(config, **overrides)

    t0 = time.time()
    result = run_study(config)
    write_study_outputs(result, args.out)
    print(f"study finished in {time.time() - t0:.0f}s; outputs in {args.out}/")
    for arm, stats in result.arm_stats.items():
        print(
            f"  {arm}: {stats['rate']:.2f} "
            f"[{stats['ci_low']:.2f}, {stats['ci_high']:.2f}] "
            f"({int(stats['successes'])}/{int(stats['instances'])})"
        )


if __name__ == "__main__":
    main()
