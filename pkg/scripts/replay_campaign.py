#!/usr/bin/env python3
"""Replay the bundled campaign history end to end.

Sequence: ingest the 16 expert-designed records, run four Pareto exploration
cycles (ingesting the recorded follow-up experiments after each), launch the
random-walk verification pass anchored on the last Pareto front, switch to
exploitation, and ingest the remaining boundary-mapping records with midpoint
and UCB batches along the way.

Checks at the end:
  * replaying the event log from an empty state reproduces the final state
  * the random-walk surrogate analysis ranks t_cold among the top-2
    sensitivity features for the final Mg target
"""

from __future__ import annotations

import argparse
import sys
import tempfile
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from hitl_crystal import campaign as cp
from hitl_crystal.config import DEFAULT_CONFIG
from hitl_crystal.dataset import load_bundled_dataset, load_bundled_grade_spec
from hitl_crystal.sampling import load_bundled_spaces


def replay(state_path: Path, seed: int = 2024, verbose: bool = True) -> cp.CampaignState:
    records = sorted(load_bundled_dataset(), key=lambda r: r.exp_id)
    spaces = load_bundled_spaces()
    config = DEFAULT_CONFIG

    def log(msg: str) -> None:
        if verbose:
            print(msg, flush=True)

    state = cp.new_campaign(load_bundled_grade_spec())
    for label in sorted(spaces):
        cp.add_space(state, spaces[label])
    cp.set_active_space(state, "A")

    # phase 0: the expert-designed starting set
    for record in records[:16]:
        cp.ingest_result(state, record)
    log(f"ingested {len(state.records)} expert records")

    # four exploratory Pareto cycles, five recorded experiments per cycle
    cursor = 16
    cycle_spaces = ["A", "B", "B", "C"]
    for cycle in range(4):
        if state.active_space != cycle_spaces[cycle]:
            cp.set_active_space(state, cycle_spaces[cycle])
        batch, report = cp.run_iteration(
            state, "pareto", {"k": 30}, rng_seed=seed + cycle, config=config
        )
        n_approve = min(5, len(batch.candidates))
        for cand in batch.candidates[:n_approve]:
            cp.review_candidate(state, batch.batch_id, cand.candidate_id, "Approved")
        for offset in range(5):
            cp.ingest_result(
                state,
                records[cursor + offset],
                candidate=(batch.batch_id, batch.candidates[min(offset, n_approve - 1)].candidate_id)
                if offset < n_approve
                else None,
            )
        cursor += 5
        log(
            f"cycle {cycle + 1}: batch {batch.batch_id} "
            f"({len(batch.candidates)} candidates, front size "
            f"{len(state.last_front or [])}), records now {len(state.records)}"
        )

    # random-walk verification anchored on the latest Pareto front
    walk_batch, walk_report = cp.run_iteration(
        state,
        "walk",
        {"n_walkers": 100_000, "n_output": 5000, "k": 10},
        rng_seed=seed + 10,
        config=config,
    )
    top2 = walk_report.sensitivity.top_features(2)
    log(f"random-walk verification: top-2 final-Mg sensitivity features: {top2}")

    # exploitation: relaxed temperature differential, boundary mapping
    cp.set_active_space(state, "E")
    cp.set_phase(state, "exploitation")
    for record in records[cursor : cursor + 2]:  # the validation pair
        cp.ingest_result(state, record)
    cursor += 2

    mid_batch, _ = cp.run_iteration(state, "midpoint", {"k": 10}, rng_seed=seed + 20, config=config)
    for cand in mid_batch.candidates[:3]:
        cp.review_candidate(state, mid_batch.batch_id, cand.candidate_id, "Approved")
    log(f"exploitation midpoint batch: {len(mid_batch.candidates)} candidates")

    remaining = records[cursor:]
    half = len(remaining) // 2
    for record in remaining[:half]:
        cp.ingest_result(state, record)
    cp.run_iteration(state, "ucb", {"k": 10, "surrogate_points": 2000}, rng_seed=seed + 30, config=config)
    for record in remaining[half:]:
        cp.ingest_result(state, record)
    log(f"campaign complete: {len(state.records)} records, {state.iteration} iterations")

    cp.save_state(state, state_path)

    # integrity checks
    reloaded = cp.load_state(state_path)
    assert cp.state_to_dict(reloaded) == cp.state_to_dict(state), "reload mismatch"
    replayed = cp.replay_events(cp.load_events(state_path))
    assert cp.state_to_dict(replayed) == cp.state_to_dict(state), "event replay mismatch"
    log("event-log replay reconstructs the final state exactly")

    assert "t_cold" in top2, (
        f"t_cold not among the top-2 final-Mg sensitivity features: {top2}"
    )
    log("t_cold confirmed among top-2 final-Mg sensitivity features")
    return state


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--state", default=None, help="output state path (default: temp dir)")
    parser.add_argument("--seed", type=int, default=2024)
    args = parser.parse_args()

    t0 = time.time()
    if args.state:
        replay(Path(args.state), seed=args.seed)
    else:
        with tempfile.TemporaryDirectory() as tmp:
            replay(Path(tmp) / "campaign.json", seed=args.seed)
    print(f"replay finished in {time.time() - t0:.1f}s")


if __name__ == "__main__":
    main()
