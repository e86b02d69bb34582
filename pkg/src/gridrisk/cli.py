"""Command-line interface: generate, run, status, report, bench.

Exit codes: 0 success, 1 configuration error, 2 pipeline failure,
3 completed with failed jobs (partial results).
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys

from .config import ConfigError, RunConfig
from .execution import ArtifactStore, RunManifest, manifest_rel_path
from .feeder import bundled_fixture_path, feeder_from_dict
from .pipeline import (
    PipelineError,
    bench,
    compare_run_artifacts,
    feeder_snapshot_rel,
    generate_run,
    monitor,
    resolve_run_id,
    run_pipeline,
)
from .postprocess import collect_violations, emit_report

# Shown by `status` as a scale reference for the same workflow run on a
# 1,000-worker cloud deployment; never asserted against local runs.
CLOUD_REFERENCE = "cloud-scale reference (15,000 jobs, 1,000 workers): 0.202 s avg/job, 3031.02 s total"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PIPELINE = 2
EXIT_PARTIAL = 3


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--feeder", help="feeder model file (default: bundled fixture)")
    parser.add_argument("--years", type=int, help="planning horizon in years (n)")
    parser.add_argument("--trials", type=int, help="Monte Carlo trials (m)")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--workers", type=int, help="worker pool size (k)")
    parser.add_argument("--out", help="artifact store root directory")
    parser.add_argument("--threshold", type=float, help="overload threshold (x rating)")
    parser.add_argument("--run-id", help="run identifier (default derived from config)")


def _build_config(args: argparse.Namespace) -> RunConfig:
    if args.config:
        config = RunConfig.from_file(args.config)
    else:
        config = RunConfig(
            feeder_path=str(bundled_fixture_path()),
            out_root=args.out or "gridrisk-runs",
        )
    return config.with_overrides(
        feeder_path=args.feeder,
        out_root=args.out,
        years_n=args.years,
        trials_m=args.trials,
        master_seed=args.seed,
        worker_count=args.workers,
        overload_threshold=args.threshold,
        run_id=args.run_id,
    )


def _cmd_generate(args: argparse.Namespace) -> int:
    config = _build_config(args)
    outcome = generate_run(config)
    total = config.years_n * config.trials_m
    print(f"run {outcome.run_id}: generated {total} scenarios "
          f"({config.trials_m} trials x {config.years_n} years) "
          f"in {outcome.scenario_wall_s:.1f} s")
    print(f"submitted {total} jobs ({outcome.skipped_jobs} resumed as completed)")
    return EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    config = _build_config(args)
    outcome = run_pipeline(config)
    snapshot_total = len(outcome.manifest.jobs)
    print(f"run {outcome.run_id}: {snapshot_total} jobs "
          f"({outcome.executed_jobs} executed, {outcome.skipped_jobs} resumed, "
          f"{outcome.failed_jobs} failed) in {outcome.wall_time_s:.1f} s")
    for rel in outcome.report_paths:
        print(f"  report: {rel}")
    return EXIT_PARTIAL if outcome.failed_jobs else EXIT_OK


def _cmd_status(args: argparse.Namespace) -> int:
    summary = monitor(args.out or "gridrisk-runs", args.run_id_pos)
    print(f"run {summary.run_id}: {summary.total} jobs | "
          f"pending {summary.pending}, running {summary.running}, "
          f"completed {summary.completed}, failed {summary.failed}")
    if summary.avg_job_seconds is not None:
        print(f"average time per job: {summary.avg_job_seconds:.3f} s")
    if summary.total_wall_seconds is not None:
        print(f"total wall time: {summary.total_wall_seconds:.2f} s")
    print(CLOUD_REFERENCE)
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    out_root = args.out or "gridrisk-runs"
    store = ArtifactStore(out_root)
    rel = manifest_rel_path(args.run_id_pos)
    if not store.exists(rel):
        raise PipelineError("report", f"unknown run '{args.run_id_pos}' under {out_root}")
    manifest = RunManifest.from_json(store.fetch_text(rel))
    config = RunConfig.from_dict(manifest.config)
    if args.threshold is not None:
        config = config.with_overrides(overload_threshold=args.threshold)

    report_dir = store.path(f"runs/{manifest.run_id}/report")
    if report_dir.exists():
        if not args.force:
            print(f"report already present under {report_dir}; use --force to rebuild")
            return EXIT_OK
        shutil.rmtree(report_dir)

    feeder = feeder_from_dict(
        json.loads(store.fetch_text(feeder_snapshot_rel(manifest.run_id)))
    )
    records = collect_violations(
        store,
        manifest,
        feeder,
        threshold=config.overload_threshold,
        min_duration_h=config.min_duration_h,
    )
    written = emit_report(
        store,
        manifest,
        feeder,
        records,
        r_min=config.ring_radius_min,
        r_max=config.ring_radius_max,
    )
    for path in written:
        print(f"  report: {path}")
    return EXIT_OK


def _cmd_bench(args: argparse.Namespace) -> int:
    config = _build_config(args)
    counts = [int(v) for v in args.worker_counts.split(",")]
    rows = bench(config, counts)
    print(f"{'workers':>8} {'execute_s':>10} {'total_s':>10} {'speedup':>8} {'identical':>10}")
    for row in rows:
        print(f"{row.workers:>8} {row.wall_execute_s:>10.2f} {row.wall_total_s:>10.2f} "
              f"{row.speedup:>8.2f} {str(row.outputs_identical):>10}")
    if not all(row.outputs_identical for row in rows):
        print("WARNING: outputs differ across worker counts", file=sys.stderr)
        return EXIT_PIPELINE
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="gridrisk",
        description="Stochastic DER-adoption grid planning: scenario generation, "
        "fan-out yearly power-flow simulation, and overload risk reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_generate = sub.add_parser("generate", help="pre-process: scenarios, bundles, job ledger")
    _add_config_flags(p_generate)
    p_generate.set_defaults(func=_cmd_generate)

    p_run = sub.add_parser("run", help="full pipeline: generate, execute, report")
    _add_config_flags(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_status = sub.add_parser("status", help="progress and throughput of a run")
    p_status.add_argument("run_id_pos", metavar="run_id")
    p_status.add_argument("--out", help="artifact store root directory")
    p_status.set_defaults(func=_cmd_status)

    p_report = sub.add_parser("report", help="(re)build report artifacts for a run")
    p_report.add_argument("run_id_pos", metavar="run_id")
    p_report.add_argument("--out", help="artifact store root directory")
    p_report.add_argument("--threshold", type=float, help="overload threshold override")
    p_report.add_argument("--force", action="store_true", help="rebuild an existing report")
    p_report.set_defaults(func=_cmd_report)

    p_bench = sub.add_parser("bench", help="run the same workload at several worker counts")
    _add_config_flags(p_bench)
    p_bench.add_argument(
        "--worker-counts", default="1,2,4,8", help="comma-separated ks (default 1,2,4,8)"
    )
    p_bench.set_defaults(func=_cmd_bench)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PipelineError as exc:
        if exc.stage == "config":
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    raise SystemExit(main())
