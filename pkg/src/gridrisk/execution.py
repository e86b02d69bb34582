"""Requester/executor job harness: submit, fan out, track, store.

The cloud pieces of the workflow are realized as an in-process pool over a
filesystem artifact store with object-store path semantics: the requester
side materializes input bundles and submits jobs; the executor side runs
each job exactly once on some worker and records terminal status. The
requester/executor boundary is a plain callable, so a remote backend can be
substituted without touching submission or tracking.

Artifact layout under the store root:
    runs/<run_id>/scenarios/trial_<t>/year_<y>.json
    runs/<run_id>/jobs/<job_id>/bundle/...
    runs/<run_id>/results/trial_<t>/year_<y>/{result.json, transformer_loading.csv}
    runs/<run_id>/manifest.json
    runs/<run_id>/throughput.csv
"""

from __future__ import annotations

import json
import threading
import time
import traceback
from concurrent.futures import FIRST_COMPLETED, Executor, ProcessPoolExecutor, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence


class ArtifactError(Exception):
    """Base class for artifact store failures."""


class ArtifactNotFound(ArtifactError):
    pass


class ArtifactExists(ArtifactError):
    pass


class SubmissionError(Exception):
    """Raised when the caller requires an all-accepted submission."""


class ArtifactStore:
    """Write-once blob store rooted at a directory.

    Every path is stored exactly once (`store` refuses overwrites) except the
    explicit append-log channel used for the live throughput feed.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, rel: str) -> Path:
        return self.root / rel

    def exists(self, rel: str) -> bool:
        return self.path(rel).exists()

    def store(self, rel: str, data: bytes) -> None:
        target = self.path(rel)
        if target.exists():
            raise ArtifactExists(f"artifact already stored: {rel}")
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data)

    def store_text(self, rel: str, text: str) -> None:
        self.store(rel, text.encode("utf-8"))

    def fetch(self, rel: str) -> bytes:
        target = self.path(rel)
        if not target.exists():
            raise ArtifactNotFound(f"no such artifact: {rel}")
        return target.read_bytes()

    def fetch_text(self, rel: str) -> str:
        return self.fetch(rel).decode("utf-8")

    def append_log(self, rel: str, line: str) -> None:
        """Append one line to a log artifact (the write-once exception)."""
        target = self.path(rel)
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "a", encoding="utf-8") as fh:
            fh.write(line.rstrip("\n") + "\n")


def scenario_rel_path(run_id: str, trial: int, year: int) -> str:
    return f"runs/{run_id}/scenarios/trial_{trial}/year_{year}.json"


def bundle_rel_dir(run_id: str, job_id: str) -> str:
    return f"runs/{run_id}/jobs/{job_id}/bundle"


def result_rel_dir(run_id: str, trial: int, year: int) -> str:
    return f"runs/{run_id}/results/trial_{trial}/year_{year}"


def manifest_rel_path(run_id: str) -> str:
    return f"runs/{run_id}/manifest.json"


def throughput_rel_path(run_id: str) -> str:
    return f"runs/{run_id}/throughput.csv"


def job_id_for(run_id: str, trial: int, year: int) -> str:
    return f"{run_id}/trial_{trial}/year_{year}"


class JobStatus(str, Enum):
    PENDING = "Pending"
    RUNNING = "Running"
    COMPLETED = "Completed"
    FAILED = "Failed"


_LEGAL_TRANSITIONS = {
    (JobStatus.PENDING, JobStatus.RUNNING),
    (JobStatus.RUNNING, JobStatus.COMPLETED),
    (JobStatus.RUNNING, JobStatus.FAILED),
}


@dataclass
class SimulationJob:
    """One yearly power-flow task tracked by the harness."""

    job_id: str
    run_id: str
    trial: int
    year: int
    input_bundle: str
    output_path: str
    status: JobStatus = JobStatus.PENDING
    submitted_at: float | None = None
    started_at: float | None = None
    finished_at: float | None = None
    failure_reason: str | None = None
    attempt: int = 1


@dataclass(frozen=True)
class JobRequest:
    run_id: str
    trial: int
    year: int
    input_bundle: str
    output_path: str

    @property
    def job_id(self) -> str:
        return job_id_for(self.run_id, self.trial, self.year)


@dataclass
class StatusSnapshot:
    statuses: dict[str, JobStatus]
    pending: int
    running: int
    completed: int
    failed: int

    @property
    def total(self) -> int:
        return self.pending + self.running + self.completed + self.failed

    @property
    def terminal(self) -> int:
        return self.completed + self.failed


class JobLedger:
    """Thread-safe job registry enforcing the status machine.

    Only Pending->Running, Running->Completed, and Running->Failed are legal,
    each at most once per attempt; every transition is recorded.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._jobs: dict[str, SimulationJob] = {}
        self.transition_log: list[tuple[str, int, JobStatus, JobStatus]] = []
        self.execution_log: list[tuple[str, int]] = []  # (job_id, attempt)

    def __len__(self) -> int:
        return len(self._jobs)

    def job(self, job_id: str) -> SimulationJob:
        with self._lock:
            if job_id not in self._jobs:
                raise KeyError(f"unknown job id '{job_id}'")
            return self._jobs[job_id]

    def jobs(self) -> list[SimulationJob]:
        with self._lock:
            return list(self._jobs.values())

    def add(self, job: SimulationJob) -> None:
        with self._lock:
            if job.job_id in self._jobs:
                raise ValueError(f"duplicate job id '{job.job_id}'")
            job.submitted_at = time.time()
            self._jobs[job.job_id] = job

    def _transition(self, job_id: str, target: JobStatus) -> SimulationJob:
        job = self._jobs[job_id]
        if (job.status, target) not in _LEGAL_TRANSITIONS:
            raise ValueError(
                f"illegal status transition {job.status.value} -> {target.value} "
                f"for job '{job_id}'"
            )
        self.transition_log.append((job_id, job.attempt, job.status, target))
        job.status = target
        return job

    def mark_running(self, job_id: str) -> None:
        with self._lock:
            job = self._transition(job_id, JobStatus.RUNNING)
            job.started_at = time.time()
            self.execution_log.append((job_id, job.attempt))

    def mark_completed(self, job_id: str) -> None:
        with self._lock:
            job = self._transition(job_id, JobStatus.COMPLETED)
            job.finished_at = time.time()

    def mark_failed(self, job_id: str, reason: str) -> None:
        with self._lock:
            job = self._transition(job_id, JobStatus.FAILED)
            job.finished_at = time.time()
            job.failure_reason = reason

    def reset_for_retry(self, job_id: str) -> None:
        """Start a fresh attempt; the new attempt gets its own transitions."""
        with self._lock:
            job = self._jobs[job_id]
            if job.status is not JobStatus.FAILED:
                raise ValueError(f"can only retry Failed jobs, not {job.status.value}")
            job.attempt += 1
            job.status = JobStatus.PENDING
            job.failure_reason = None

    def poll(self, job_ids: Sequence[str] | None = None) -> StatusSnapshot:
        """Consistent status snapshot; counts always sum to the total polled."""
        with self._lock:
            if job_ids is None:
                selected = list(self._jobs.values())
            else:
                missing = [j for j in job_ids if j not in self._jobs]
                if missing:
                    raise KeyError(f"unknown job id '{missing[0]}'")
                selected = [self._jobs[j] for j in job_ids]
            statuses = {j.job_id: j.status for j in selected}
        counts = {status: 0 for status in JobStatus}
        for status in statuses.values():
            counts[status] += 1
        return StatusSnapshot(
            statuses=statuses,
            pending=counts[JobStatus.PENDING],
            running=counts[JobStatus.RUNNING],
            completed=counts[JobStatus.COMPLETED],
            failed=counts[JobStatus.FAILED],
        )


@dataclass
class SubmissionResult:
    accepted: list[str]
    rejected: list[tuple[str, str]]  # (job_id, reason)

    def raise_on_rejection(self) -> "SubmissionResult":
        if self.rejected:
            job_id, reason = self.rejected[0]
            raise SubmissionError(
                f"{len(self.rejected)} of {len(self.accepted) + len(self.rejected)} "
                f"job submissions rejected; first: '{job_id}' ({reason})"
            )
        return self


def submit_jobs(
    store: ArtifactStore, ledger: JobLedger, requests: Iterable[JobRequest]
) -> SubmissionResult:
    """Enqueue one Pending job per request.

    Rejections are per-job (missing input bundle, duplicate id) and do not
    block the rest of the batch. All accepted jobs are registered before the
    function returns, so the full set can be enqueued before anything runs.
    """
    accepted: list[str] = []
    rejected: list[tuple[str, str]] = []
    for request in requests:
        job_id = request.job_id
        bundle_marker = f"{request.input_bundle}/job.json"
        if not store.exists(bundle_marker):
            rejected.append((job_id, f"missing input bundle '{request.input_bundle}'"))
            continue
        job = SimulationJob(
            job_id=job_id,
            run_id=request.run_id,
            trial=request.trial,
            year=request.year,
            input_bundle=request.input_bundle,
            output_path=request.output_path,
        )
        try:
            ledger.add(job)
        except ValueError as exc:
            rejected.append((job_id, str(exc)))
            continue
        accepted.append(job_id)
    return SubmissionResult(accepted=accepted, rejected=rejected)


# A job runner maps (store_root, job spec dict) -> None and must be a
# module-level callable so process pools can pickle it. It writes the job's
# output artifacts itself and raises on failure.
JobRunner = Callable[[str, dict], None]


def _job_spec(job: SimulationJob) -> dict:
    return {
        "job_id": job.job_id,
        "run_id": job.run_id,
        "trial": job.trial,
        "year": job.year,
        "input_bundle": job.input_bundle,
        "output_path": job.output_path,
    }


@dataclass
class PoolResult:
    wall_time_s: float
    completed: int
    failed: int
    durations_s: dict[str, float] = field(default_factory=dict)


class ThroughputLog:
    """Appends `timestamp_ms,pending,running,completed,failed` rows."""

    def __init__(self, store: ArtifactStore, run_id: str):
        self._store = store
        self._rel = throughput_rel_path(run_id)
        if not store.exists(self._rel):
            store.append_log(self._rel, "timestamp_ms,pending,running,completed,failed")

    def record(self, snapshot: StatusSnapshot) -> None:
        self._store.append_log(
            self._rel,
            f"{int(time.time() * 1000)},{snapshot.pending},{snapshot.running},"
            f"{snapshot.completed},{snapshot.failed}",
        )


def execute_pool(
    ledger: JobLedger,
    job_ids: Sequence[str],
    runner: JobRunner,
    store_root: str | Path,
    worker_count: int,
    *,
    use_processes: bool = True,
    retries: int = 0,
    throughput: ThroughputLog | None = None,
    on_event: Callable[[StatusSnapshot], None] | None = None,
) -> PoolResult:
    """Run every job exactly once (plus configured retries) on a worker pool.

    Jobs are dispatched at most `worker_count` at a time; a worker failure
    marks its job Failed with the reason and never stalls the pool. Because
    runners are pure functions of the job bundle, terminal statuses and
    output artifacts are identical for any worker count.
    """
    if worker_count < 1:
        raise ValueError(f"worker_count must be at least 1, got {worker_count}")
    t0 = time.monotonic()
    queue: list[str] = list(job_ids)
    attempts_left = {job_id: 1 + retries for job_id in queue}
    durations: dict[str, float] = {}
    completed = failed = 0

    def notify() -> None:
        if throughput is not None or on_event is not None:
            snapshot = ledger.poll(list(job_ids))
            if throughput is not None:
                throughput.record(snapshot)
            if on_event is not None:
                on_event(snapshot)

    executor_cls = ProcessPoolExecutor if use_processes else ThreadPoolExecutor
    notify()
    with executor_cls(max_workers=worker_count) as executor:
        in_flight: dict = {}

        def dispatch() -> None:
            while queue and len(in_flight) < worker_count:
                job_id = queue.pop(0)
                job = ledger.job(job_id)
                ledger.mark_running(job_id)
                attempts_left[job_id] -= 1
                start = time.monotonic()
                future = executor.submit(runner, str(store_root), _job_spec(job))
                in_flight[future] = (job_id, start)

        dispatch()
        while in_flight:
            done, _ = wait(list(in_flight), return_when=FIRST_COMPLETED)
            for future in done:
                job_id, start = in_flight.pop(future)
                durations[job_id] = time.monotonic() - start
                try:
                    future.result()
                except Exception as exc:  # worker failure is a per-job event
                    reason = f"{type(exc).__name__}: {exc}"
                    ledger.mark_failed(job_id, reason)
                    if attempts_left[job_id] > 0:
                        ledger.reset_for_retry(job_id)
                        queue.append(job_id)
                    else:
                        failed += 1
                else:
                    ledger.mark_completed(job_id)
                    completed += 1
                notify()
            dispatch()

    return PoolResult(
        wall_time_s=time.monotonic() - t0,
        completed=completed,
        failed=failed,
        durations_s=durations,
    )


def poll_status(ledger: JobLedger, job_ids: Sequence[str] | None = None) -> StatusSnapshot:
    """Current status per job plus aggregate counts (counts sum to total)."""
    return ledger.poll(job_ids)


@dataclass
class RunManifest:
    """Run-level record: identity, sizing, config snapshot, and job ledger."""

    run_id: str
    n: int
    m: int
    master_seed: int
    config: dict
    jobs: list[dict]
    report_paths: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "run_id": self.run_id,
                "n": self.n,
                "m": self.m,
                "master_seed": self.master_seed,
                "config": self.config,
                "jobs": self.jobs,
                "report_paths": self.report_paths,
            },
            indent=1,
            sort_keys=True,
        ) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        doc = json.loads(text)
        return cls(
            run_id=doc["run_id"],
            n=int(doc["n"]),
            m=int(doc["m"]),
            master_seed=int(doc["master_seed"]),
            config=doc["config"],
            jobs=doc["jobs"],
            report_paths=list(doc.get("report_paths", [])),
        )


def ledger_entries(ledger: JobLedger) -> list[dict]:
    """Manifest-ready job entries (timestamps included; excluded from
    byte-identity comparisons by consumers)."""
    entries = []
    for job in sorted(ledger.jobs(), key=lambda j: (j.trial, j.year)):
        entries.append(
            {
                "job_id": job.job_id,
                "trial": job.trial,
                "year": job.year,
                "status": job.status.value,
                "input_bundle": job.input_bundle,
                "output_path": job.output_path,
                "submitted_at": job.submitted_at,
                "started_at": job.started_at,
                "finished_at": job.finished_at,
                "failure_reason": job.failure_reason,
                "attempt": job.attempt,
            }
        )
    return entries
