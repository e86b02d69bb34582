"""End-to-end orchestration: prepare, generate, bundle, execute, report.

A run lives entirely under `runs/<run_id>/` in the artifact store. All job
inputs are materialized (or deterministically derivable from the bundle)
before submission, so jobs have no inter-dependencies and can execute in any
order on any number of workers. Reruns with the same config and seed skip
jobs whose results are already stored and reproduce identical artifacts.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass

import numpy as np

from .adoption import (
    AdoptionScenario,
    Technology,
    generate_scenarios,
    scenario_from_json,
    scenario_to_json,
)
from .config import RunConfig
from .execution import (
    ArtifactStore,
    JobLedger,
    JobRequest,
    RunManifest,
    ThroughputLog,
    bundle_rel_dir,
    execute_pool,
    job_id_for,
    ledger_entries,
    manifest_rel_path,
    result_rel_dir,
    scenario_rel_path,
    submit_jobs,
    throughput_rel_path,
)
from .feeder import FeederModel, disaggregate_loads, load_feeder
from .postprocess import collect_violations, emit_report
from .powerflow import PowerFlowCase, loading_to_csv, result_to_json, run_yearly
from .profiles import (
    WeatherYear,
    build_ev_profile,
    build_load_profile,
    build_pv_profile,
    bundled_weather_path,
    load_weather,
)
from .rng import substream


class PipelineError(Exception):
    """Stage-tagged pipeline failure."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def resolve_run_id(config: RunConfig) -> str:
    if config.run_id:
        return config.run_id
    from pathlib import Path

    stem = Path(config.feeder_path).stem
    return f"{stem}-n{config.years_n}-m{config.trials_m}-s{config.master_seed}"


def feeder_snapshot_rel(run_id: str) -> str:
    return f"runs/{run_id}/feeder.json"


def weather_snapshot_rel(run_id: str) -> str:
    return f"runs/{run_id}/weather.csv"


def _prepare_stage(store: ArtifactStore, run_id: str, config: RunConfig) -> FeederModel:
    """Snapshot the disaggregated feeder and the weather year into the run."""
    from .feeder import feeder_from_dict, feeder_to_dict

    feeder_rel = feeder_snapshot_rel(run_id)
    if store.exists(feeder_rel):
        feeder = feeder_from_dict(json.loads(store.fetch_text(feeder_rel)))
    else:
        feeder = disaggregate_loads(
            load_feeder(config.feeder_path),
            houses_per_kva=config.houses_per_kva,
            default_p_pv=config.default_p_pv,
            default_p_ev=config.default_p_ev,
        )
        store.store_text(
            feeder_rel, json.dumps(feeder_to_dict(feeder), indent=1, sort_keys=True) + "\n"
        )
    weather_rel = weather_snapshot_rel(run_id)
    if not store.exists(weather_rel):
        source = config.weather_path or bundled_weather_path()
        with open(source, "rb") as fh:
            store.store(weather_rel, fh.read())
    return feeder


def _scenario_stage(
    store: ArtifactStore, run_id: str, feeder: FeederModel, config: RunConfig
) -> list[AdoptionScenario]:
    scenarios = generate_scenarios(
        feeder,
        config.years_n,
        config.trials_m,
        config.master_seed,
        config.capacity_distributions(),
    )
    for scenario in scenarios:
        rel = scenario_rel_path(run_id, scenario.trial, scenario.year)
        if not store.exists(rel):
            store.store_text(rel, scenario_to_json(scenario))
    return scenarios


def _bundle_stage(
    store: ArtifactStore, run_id: str, config: RunConfig
) -> list[JobRequest]:
    """Write one small self-describing bundle per job and return the requests.

    The bundle carries the job identity, the config snapshot, and references
    to the run's stored feeder, weather, and scenario artifacts; profiles are
    rebuilt deterministically by the executor from the bundled seeds, so a
    bundle stays a few kilobytes even for very large scenario sets.
    """
    config_doc = config.to_dict()
    requests: list[JobRequest] = []
    for trial in range(1, config.trials_m + 1):
        for year in range(1, config.years_n + 1):
            job_id = job_id_for(run_id, trial, year)
            bundle = bundle_rel_dir(run_id, job_id)
            job_doc = {
                "job_id": job_id,
                "run_id": run_id,
                "trial": trial,
                "year": year,
                "master_seed": config.master_seed,
                "feeder": feeder_snapshot_rel(run_id),
                "weather": weather_snapshot_rel(run_id),
                "scenario": scenario_rel_path(run_id, trial, year),
                "config": config_doc,
            }
            rel = f"{bundle}/job.json"
            if not store.exists(rel):
                store.store_text(rel, json.dumps(job_doc, indent=1, sort_keys=True) + "\n")
            requests.append(
                JobRequest(
                    run_id=run_id,
                    trial=trial,
                    year=year,
                    input_bundle=bundle,
                    output_path=result_rel_dir(run_id, trial, year),
                )
            )
    return requests


def _result_complete(store: ArtifactStore, output_path: str) -> bool:
    return store.exists(f"{output_path}/result.json") and store.exists(
        f"{output_path}/transformer_loading.csv"
    )


# Per-process caches: jobs in one worker share the run's feeder and weather.
_FEEDER_CACHE: dict[tuple[str, str], FeederModel] = {}
_WEATHER_CACHE: dict[tuple[str, str], WeatherYear] = {}


def _cached_feeder(store: ArtifactStore, rel: str) -> FeederModel:
    from .feeder import feeder_from_dict

    key = (str(store.root), rel)
    if key not in _FEEDER_CACHE:
        _FEEDER_CACHE[key] = feeder_from_dict(json.loads(store.fetch_text(rel)))
    return _FEEDER_CACHE[key]


def _cached_weather(store: ArtifactStore, rel: str) -> WeatherYear:
    key = (str(store.root), rel)
    if key not in _WEATHER_CACHE:
        _WEATHER_CACHE[key] = load_weather(store.path(rel))
    return _WEATHER_CACHE[key]


def build_injections(
    feeder: FeederModel,
    scenario: AdoptionScenario,
    year: int,
    master_seed: int,
    config: RunConfig,
    weather: WeatherYear,
) -> dict[str, np.ndarray]:
    """Per-customer complex net injections (kW + j kvar) for one job-year.

    Load and EV kW carry the configured lagging power factor; PV injects at
    unity power factor. Load profiles depend on (customer, year, seed) only;
    EV charging additionally on the trial, since each trial adopts different
    chargers.
    """
    tan_phi = math.tan(math.acos(config.power_factor))
    behavior = config.ev_behavior()
    pv_kw: dict[str, float] = {}
    ev_kw: dict[str, float] = {}
    for inst in scenario.installations:
        if inst.technology == Technology.PV:
            pv_kw[inst.customer_id] = inst.capacity_kw
        else:
            ev_kw[inst.customer_id] = inst.capacity_kw

    injections: dict[str, np.ndarray] = {}
    for cust in feeder.customers:
        load = build_load_profile(cust, year, master_seed)
        consumption = load
        net_p = load
        if cust.id in ev_kw:
            ev = build_ev_profile(
                ev_kw[cust.id],
                behavior,
                substream(master_seed, "ev", scenario.trial, year, cust.id),
            )
            consumption = load + ev
            net_p = consumption
        if cust.id in pv_kw:
            pv = build_pv_profile(pv_kw[cust.id], weather, config.pv_derate)
            net_p = net_p - pv
        s = np.empty(net_p.shape, dtype=complex)
        s.real = net_p
        s.imag = consumption * tan_phi
        injections[cust.id] = s
    return injections


def run_simulation_job(store_root: str, spec: dict) -> None:
    """Execute one yearly job from its bundle (worker-pool entry point).

    Reads only the bundle and the artifacts it references, writes the job's
    result artifacts, and is idempotent: a completed output short-circuits,
    a partial output from a crashed attempt is discarded and rebuilt.
    """
    store = ArtifactStore(store_root)
    out = spec["output_path"]
    result_rel = f"{out}/result.json"
    loading_rel = f"{out}/transformer_loading.csv"
    if store.exists(result_rel) and store.exists(loading_rel):
        return
    for rel in (result_rel, loading_rel):
        if store.exists(rel):
            store.path(rel).unlink()

    job = json.loads(store.fetch_text(f"{spec['input_bundle']}/job.json"))
    config = RunConfig.from_dict(job["config"])
    feeder = _cached_feeder(store, job["feeder"])
    weather = _cached_weather(store, job["weather"])
    scenario = scenario_from_json(store.fetch_text(job["scenario"]))

    injections = build_injections(
        feeder, scenario, job["year"], job["master_seed"], config, weather
    )
    case = PowerFlowCase(
        feeder=feeder, injections=injections, trial=job["trial"], year=job["year"]
    )
    result = run_yearly(
        case,
        s_base_kva=config.s_base_kva,
        voltage_tol=config.voltage_tol,
        balance_tol=config.balance_tol,
        max_iterations=config.max_iterations,
        no_load_kva=config.no_load_kva,
        on_nonconverged=config.on_nonconverged,
    )
    store.store_text(loading_rel, loading_to_csv(result))
    store.store_text(result_rel, result_to_json(result))


@dataclass
class PipelineOutcome:
    run_id: str
    manifest: RunManifest
    report_paths: list[str]
    executed_jobs: int
    skipped_jobs: int
    failed_jobs: int
    wall_time_s: float
    execute_wall_s: float
    scenario_wall_s: float


def _submit_stage(
    store: ArtifactStore, ledger: JobLedger, requests: list[JobRequest]
) -> tuple[list[str], int]:
    """Submit pending work; results already in the store resume as Completed."""
    from .execution import JobStatus, SimulationJob

    to_submit: list[JobRequest] = []
    resumed = 0
    for request in requests:
        if _result_complete(store, request.output_path):
            ledger.add(
                SimulationJob(
                    job_id=request.job_id,
                    run_id=request.run_id,
                    trial=request.trial,
                    year=request.year,
                    input_bundle=request.input_bundle,
                    output_path=request.output_path,
                    status=JobStatus.COMPLETED,
                )
            )
            resumed += 1
        else:
            to_submit.append(request)
    submission = submit_jobs(store, ledger, to_submit).raise_on_rejection()
    return submission.accepted, resumed


def _write_manifest(store: ArtifactStore, manifest: RunManifest) -> None:
    # The manifest is run metadata, refreshed on resume; it is the one
    # non-log artifact written in place.
    path = store.path(manifest_rel_path(manifest.run_id))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(manifest.to_json(), encoding="utf-8")


def _run(config: RunConfig, execute: bool) -> PipelineOutcome:
    t_start = time.monotonic()
    try:
        config.validate()
    except Exception as exc:
        raise PipelineError("config", str(exc)) from exc
    store = ArtifactStore(config.out_root)
    run_id = resolve_run_id(config)

    try:
        feeder = _prepare_stage(store, run_id, config)
    except Exception as exc:
        raise PipelineError("prepare", str(exc)) from exc

    t0 = time.monotonic()
    try:
        _scenario_stage(store, run_id, feeder, config)
    except Exception as exc:
        raise PipelineError("scenarios", str(exc)) from exc
    scenario_wall = time.monotonic() - t0

    try:
        requests = _bundle_stage(store, run_id, config)
        ledger = JobLedger()
        pending, resumed = _submit_stage(store, ledger, requests)
    except Exception as exc:
        raise PipelineError("submit", str(exc)) from exc

    execute_wall = 0.0
    if execute and pending:
        try:
            throughput = ThroughputLog(store, run_id)
            pool = execute_pool(
                ledger,
                pending,
                run_simulation_job,
                store.root,
                config.worker_count,
                use_processes=config.use_processes,
                retries=config.retries,
                throughput=throughput,
            )
            execute_wall = pool.wall_time_s
        except Exception as exc:
            _write_manifest(
                store,
                RunManifest(
                    run_id=run_id,
                    n=config.years_n,
                    m=config.trials_m,
                    master_seed=config.master_seed,
                    config=config.to_dict(),
                    jobs=ledger_entries(ledger),
                ),
            )
            raise PipelineError("execute", str(exc)) from exc

    manifest = RunManifest(
        run_id=run_id,
        n=config.years_n,
        m=config.trials_m,
        master_seed=config.master_seed,
        config=config.to_dict(),
        jobs=ledger_entries(ledger),
    )

    report_paths: list[str] = []
    if execute:
        try:
            report_rel = f"runs/{run_id}/report/report.json"
            if store.exists(report_rel):
                report_paths = json.loads(store.fetch_text(report_rel))["artifacts"]
                report_paths = list(report_paths) + [report_rel]
            else:
                records = collect_violations(
                    store,
                    manifest,
                    feeder,
                    threshold=config.overload_threshold,
                    min_duration_h=config.min_duration_h,
                )
                report_paths = emit_report(
                    store,
                    manifest,
                    feeder,
                    records,
                    r_min=config.ring_radius_min,
                    r_max=config.ring_radius_max,
                )
        except Exception as exc:
            _write_manifest(store, manifest)
            raise PipelineError("report", str(exc)) from exc

    manifest.report_paths = report_paths
    _write_manifest(store, manifest)

    snapshot = ledger.poll()
    return PipelineOutcome(
        run_id=run_id,
        manifest=manifest,
        report_paths=report_paths,
        executed_jobs=len(pending),
        skipped_jobs=resumed,
        failed_jobs=snapshot.failed,
        wall_time_s=time.monotonic() - t_start,
        execute_wall_s=execute_wall,
        scenario_wall_s=scenario_wall,
    )


def run_pipeline(config: RunConfig) -> PipelineOutcome:
    """Full workflow: scenarios, bundles, fan-out execution, report."""
    return _run(config, execute=True)


def generate_run(config: RunConfig) -> PipelineOutcome:
    """Pre-processing only: scenarios, bundles, and submission ledger."""
    return _run(config, execute=False)


@dataclass
class MonitorSummary:
    run_id: str
    total: int
    pending: int
    running: int
    completed: int
    failed: int
    avg_job_seconds: float | None
    total_wall_seconds: float | None

    @property
    def terminal(self) -> int:
        return self.completed + self.failed


def monitor(out_root: str, run_id: str) -> MonitorSummary:
    """Progress and timing summary for a run, read from stored artifacts."""
    store = ArtifactStore(out_root)
    rel = manifest_rel_path(run_id)
    if not store.exists(rel):
        raise PipelineError("monitor", f"unknown run '{run_id}' under {out_root}")
    manifest = RunManifest.from_json(store.fetch_text(rel))

    counts = {"Pending": 0, "Running": 0, "Completed": 0, "Failed": 0}
    durations: list[float] = []
    for entry in manifest.jobs:
        counts[entry["status"]] += 1
        if entry["status"] == "Completed" and entry.get("started_at") and entry.get("finished_at"):
            durations.append(entry["finished_at"] - entry["started_at"])

    wall: float | None = None
    tp_rel = throughput_rel_path(run_id)
    if store.exists(tp_rel):
        lines = store.fetch_text(tp_rel).strip().splitlines()[1:]
        if len(lines) >= 2:
            first_ms = int(lines[0].split(",")[0])
            last_ms = int(lines[-1].split(",")[0])
            wall = (last_ms - first_ms) / 1000.0
    return MonitorSummary(
        run_id=run_id,
        total=len(manifest.jobs),
        pending=counts["Pending"],
        running=counts["Running"],
        completed=counts["Completed"],
        failed=counts["Failed"],
        avg_job_seconds=(sum(durations) / len(durations)) if durations else None,
        total_wall_seconds=wall,
    )


def compare_run_artifacts(
    store: ArtifactStore,
    run_a: str,
    run_b: str,
    subdirs: tuple[str, ...] = ("scenarios", "results", "report"),
) -> list[str]:
    """Relative paths (within a run) whose bytes differ between two runs."""
    differing: list[str] = []
    for sub in subdirs:
        root_a = store.path(f"runs/{run_a}/{sub}")
        root_b = store.path(f"runs/{run_b}/{sub}")
        names_a = (
            {p.relative_to(root_a).as_posix() for p in root_a.rglob("*") if p.is_file()}
            if root_a.exists()
            else set()
        )
        names_b = (
            {p.relative_to(root_b).as_posix() for p in root_b.rglob("*") if p.is_file()}
            if root_b.exists()
            else set()
        )
        for name in sorted(names_a | names_b):
            if name not in names_a or name not in names_b:
                differing.append(f"{sub}/{name}")
            elif (root_a / name).read_bytes() != (root_b / name).read_bytes():
                differing.append(f"{sub}/{name}")
    return differing


@dataclass
class BenchRow:
    workers: int
    wall_total_s: float
    wall_execute_s: float
    speedup: float
    outputs_identical: bool


def bench(config: RunConfig, worker_counts: list[int]) -> list[BenchRow]:
    """Run the identical workload at each worker count and compare.

    Speedup is measured on the execution stage (the fan-out workload);
    outputs of every run are byte-compared against the first run.
    """
    if not worker_counts:
        raise ValueError("at least one worker count is required")
    outcomes: list[tuple[int, PipelineOutcome]] = []
    base_run_id = resolve_run_id(config)
    for k in worker_counts:
        cfg = config.with_overrides(worker_count=k, run_id=f"{base_run_id}-bench-k{k}")
        outcomes.append((k, run_pipeline(cfg)))

    store = ArtifactStore(config.out_root)
    reference_wall = None
    for k, outcome in outcomes:
        if k == 1:
            reference_wall = outcome.execute_wall_s
    if reference_wall is None:
        reference_wall = outcomes[0][1].execute_wall_s

    rows: list[BenchRow] = []
    first_run = outcomes[0][1].run_id
    for k, outcome in outcomes:
        identical = not compare_run_artifacts(store, first_run, outcome.run_id)
        rows.append(
            BenchRow(
                workers=k,
                wall_total_s=outcome.wall_time_s,
                wall_execute_s=outcome.execute_wall_s,
                speedup=(reference_wall / outcome.execute_wall_s)
                if outcome.execute_wall_s > 0
                else 1.0,
                outputs_identical=identical,
            )
        )
    return rows
