"""Command-line entry point: campaign operations, the replication study and
the HTTP service."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import campaign as cp
from .config import DEFAULT_CONFIG, CampaignConfig
from .dataset import load_bundled_grade_spec, load_dataset, record_from_dict
from .replication import StudyConfig, run_study, write_study_outputs
from .sampling import ConditionPoint, load_bundled_spaces, load_spaces


def _load_config(args) -> CampaignConfig:
    if getattr(args, "config", None):
        return CampaignConfig.from_json(args.config)
    return DEFAULT_CONFIG


def _load_state(args) -> cp.CampaignState:
    path = Path(args.state)
    if not path.exists():
        sys.exit(f"state file {path} does not exist (run 'hitl-crystal init' first)")
    return cp.load_state(path)


def _save(state: cp.CampaignState, args) -> None:
    cp.save_state(state, args.state)


def cmd_init(args) -> None:
    path = Path(args.state)
    if path.exists() and not args.force:
        sys.exit(f"{path} already exists (use --force to overwrite)")
    config = _load_config(args)
    state = cp.new_campaign(config.grade_spec)
    spaces = load_spaces(args.spaces) if args.spaces else load_bundled_spaces()
    for label in sorted(spaces):
        cp.add_space(state, spaces[label])
    if args.activate:
        cp.set_active_space(state, args.activate)
    cp.save_state(state, path)
    print(f"initialized campaign at {path} with spaces {sorted(spaces)}")


def cmd_import(args) -> None:
    state = _load_state(args)
    records = load_dataset(args.csv)
    for record in records:
        cp.ingest_result(state, record)
    _save(state, args)
    print(f"imported {len(records)} records (now {len(state.records)} total)")


def cmd_iterate(args) -> None:
    state = _load_state(args)
    params = json.loads(args.params) if args.params else {}
    if args.k is not None:
        params["k"] = args.k
    batch, report = cp.run_iteration(
        state, args.strategy, params, rng_seed=args.seed or 0, config=_load_config(args)
    )
    _save(state, args)
    print(
        f"iteration {report.iteration}: strategy={batch.strategy} "
        f"batch={batch.batch_id} candidates={len(batch.candidates)}"
    )
    for flag in report.flags:
        print(f"  flag: {flag}")


def cmd_review(args) -> None:
    state = _load_state(args)
    edited = None
    if args.point:
        edited = ConditionPoint.from_dict(json.loads(args.point))
    cp.review_candidate(state, args.batch, args.candidate, args.decision, edited)
    _save(state, args)
    print(f"batch {args.batch} candidate {args.candidate}: {args.decision}")


def cmd_ingest(args) -> None:
    state = _load_state(args)
    record = record_from_dict(json.loads(Path(args.record).read_text(encoding="utf-8")))
    candidate = (args.batch, args.candidate) if args.batch is not None else None
    cp.ingest_result(state, record, candidate=candidate)
    _save(state, args)
    label = state.record_labels[str(record.exp_id)]
    print(f"ingested exp {record.exp_id} (battery grade: {label})")


def _report_to_flat_csv(report: dict, dest: Path) -> None:
    with open(dest, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["section", "name", "value"])
        corr = report.get("correlation") or {}
        names = corr.get("names", [])
        for i, a in enumerate(names):
            for j, b in enumerate(names):
                if j > i:
                    writer.writerow(["pearson", f"{a}~{b}", corr["matrix"][i][j]])
        imp = report.get("importance") or {}
        for name, value in zip(imp.get("names", []), imp.get("importance", [])):
            writer.writerow(["importance", name, value])
        sens = report.get("sensitivity") or {}
        for name, value in zip(sens.get("names", []), sens.get("normalized", [])):
            writer.writerow(["sensitivity", name, value])
        for target, quality in (report.get("model_quality") or {}).items():
            for key, value in quality.items():
                writer.writerow(["model_quality", f"{target}.{key}", value])
        for flag in report.get("flags", []):
            writer.writerow(["flag", "", flag])


def cmd_report(args) -> None:
    state = _load_state(args)
    key = str(args.iteration)
    if key not in state.reports:
        sys.exit(f"no report for iteration {args.iteration}")
    report = state.reports[key]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / f"report_{args.iteration}.json"
    csv_path = out_dir / f"report_{args.iteration}.csv"
    json_path.write_text(json.dumps(report, indent=2), encoding="utf-8")
    _report_to_flat_csv(report, csv_path)
    print(f"wrote {json_path} and {csv_path}")


def cmd_replicate(args) -> None:
    config = StudyConfig.from_json(args.config) if args.config else StudyConfig()
    if args.seed is not None:
        from dataclasses import replace

        config = replace(config, base_seed=args.seed)
    result = run_study(config)
    write_study_outputs(result, args.out)
    print(f"study written to {args.out}")
    for arm, stats in result.arm_stats.items():
        print(
            f"  {arm}: rate={stats['rate']:.3f} "
            f"[{stats['ci_low']:.3f}, {stats['ci_high']:.3f}] "
            f"({int(stats['successes'])}/{int(stats['instances'])})"
        )


def cmd_serve(args) -> None:
    import uvicorn

    from .service import create_app

    app = create_app(args.state, config=_load_config(args), static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hitl-crystal",
        description="Human-in-the-loop active learning campaigns for "
        "continuous crystallization process optimization",
    )
    parser.add_argument("--state", default="campaign.json", help="campaign state file")
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="random seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create a fresh campaign state")
    p.add_argument("--spaces", default=None, help="surrogate-space JSON (default: bundled)")
    p.add_argument("--activate", default="A", help="space label to activate")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("import", help="import experiment records from CSV")
    p.add_argument("csv")
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("iterate", help="run one acquisition iteration")
    p.add_argument("--strategy", required=True, choices=["pareto", "walk", "midpoint", "ucb"])
    p.add_argument("--k", type=int, default=None, help="candidates per batch")
    p.add_argument("--params", default=None, help="extra strategy params as JSON")
    p.set_defaults(func=cmd_iterate)

    p = sub.add_parser("review", help="approve/reject/edit a candidate")
    p.add_argument("--batch", type=int, required=True)
    p.add_argument("--candidate", type=int, required=True)
    p.add_argument("--decision", required=True, choices=["Approved", "Rejected", "Edited"])
    p.add_argument("--point", default=None, help="replacement point JSON for Edited")
    p.set_defaults(func=cmd_review)

    p = sub.add_parser("ingest", help="ingest a measured experiment result")
    p.add_argument("--record", required=True, help="record JSON file")
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--candidate", type=int, default=None)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("report", help="export an iteration report")
    p.add_argument("--iteration", type=int, required=True)
    p.add_argument("--out", default="analysis")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("replicate", help="run the policy-comparison study")
    p.add_argument("--out", default="results")
    p.set_defaults(func=cmd_replicate)

    p = sub.add_parser("serve", help="run the HTTP JSON API")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--static", default=None, help="directory of dashboard assets")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> None:
    args = build_parser().parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
