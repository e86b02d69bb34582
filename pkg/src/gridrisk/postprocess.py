"""Overload-risk aggregation and report artifacts.

Scans the stored yearly loading series for hours above the overload
threshold, reduces them across trials into per-transformer impact summaries
(first violating year per trial, per-year violation frequency), and renders
the feeder map with concentric impact circles: ring size encodes how likely
a violation is in that year, ring color how early violations start.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .execution import ArtifactStore, RunManifest, result_rel_dir
from .feeder import FeederModel
from .powerflow import loading_from_csv

DEFAULT_THRESHOLD = 1.0
DEFAULT_MIN_DURATION_H = 1
DEFAULT_RING_RADIUS = (3.0, 18.0)

# Earliest-violation-year urgency palette: early = red through late = blue.
YEAR_PALETTE = ("#d73027", "#fc8d59", "#fee090", "#c6dbef", "#91bfdb", "#4575b4")


@dataclass(frozen=True)
class ViolationRecord:
    """Overload observation for one (transformer, trial, year)."""

    transformer_id: str
    trial: int
    year: int
    violation_hours: int
    peak_loading_ratio: float


def detect_overloads(
    series: np.ndarray,
    rating_kva: float,
    threshold: float = DEFAULT_THRESHOLD,
    min_duration_h: int = DEFAULT_MIN_DURATION_H,
) -> tuple[int, float]:
    """Count overloaded hours in one yearly loading series.

    Returns:
        (violation_hours, peak_loading_ratio). An hour counts when loading
        exceeds threshold x rating and belongs to a run of at least
        `min_duration_h` consecutive such hours.
    """
    if rating_kva <= 0:
        raise ValueError(f"rating must be positive, got {rating_kva}")
    if threshold <= 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    if series.shape[-1] != 8760:
        raise ValueError(f"expected an 8,760-hour series, got {series.shape}")
    mask = series > threshold * rating_kva
    if min_duration_h <= 1:
        hours = int(mask.sum())
    else:
        edges = np.diff(np.concatenate(([0], mask.view(np.int8), [0])))
        starts = np.flatnonzero(edges == 1)
        ends = np.flatnonzero(edges == -1)
        lengths = ends - starts
        hours = int(lengths[lengths >= min_duration_h].sum())
    return hours, float(series.max() / rating_kva)


def first_violation_year(counts_by_year: Mapping[int, int]) -> int | None:
    """Smallest year with a nonzero violation count, or None."""
    years = sorted(y for y, count in counts_by_year.items() if count > 0)
    return years[0] if years else None


def violation_frequency(
    records: Iterable[ViolationRecord], transformer_id: str, year: int, m: int
) -> float:
    """Fraction of the m trials with at least one violation in `year`."""
    if m < 1:
        raise ValueError(f"trial count must be at least 1, got {m}")
    trials = {
        rec.trial
        for rec in records
        if rec.transformer_id == transformer_id
        and rec.year == year
        and rec.violation_hours > 0
    }
    return len(trials) / m


@dataclass
class TransformerImpactSummary:
    """Cross-trial overload risk for one transformer."""

    transformer_id: str
    first_violation_year: dict[int, int]  # trial -> earliest violating year
    yearly_frequency: dict[int, float]    # year -> fraction of trials
    earliest_year_overall: int | None


def summarize_impacts(
    records: Iterable[ViolationRecord], m: int, n: int
) -> dict[str, TransformerImpactSummary]:
    """Reduce violation records into per-transformer summaries.

    The reduction is a tally over (transformer, trial, year) sets, so it is
    invariant to record order and to how trials were partitioned.
    """
    by_transformer: dict[str, list[ViolationRecord]] = defaultdict(list)
    for rec in records:
        if rec.violation_hours > 0:
            by_transformer[rec.transformer_id].append(rec)

    summaries: dict[str, TransformerImpactSummary] = {}
    for tid, recs in sorted(by_transformer.items()):
        first_by_trial: dict[int, int] = {}
        trials_by_year: dict[int, set[int]] = defaultdict(set)
        for rec in recs:
            trials_by_year[rec.year].add(rec.trial)
            best = first_by_trial.get(rec.trial)
            if best is None or rec.year < best:
                first_by_trial[rec.trial] = rec.year
        frequency = {
            year: len(trials_by_year.get(year, ())) / m for year in range(1, n + 1)
        }
        summaries[tid] = TransformerImpactSummary(
            transformer_id=tid,
            first_violation_year=dict(sorted(first_by_trial.items())),
            yearly_frequency=frequency,
            earliest_year_overall=min(first_by_trial.values()) if first_by_trial else None,
        )
    return summaries


def collect_violations(
    store: ArtifactStore,
    manifest: RunManifest,
    feeder: FeederModel,
    threshold: float = DEFAULT_THRESHOLD,
    min_duration_h: int = DEFAULT_MIN_DURATION_H,
) -> list[ViolationRecord]:
    """Scan every Completed job's loading series for overloads.

    Jobs can be read in any order; only violating (transformer, trial, year)
    triples produce records.
    """
    records: list[ViolationRecord] = []
    ratings = {t.id: t.rating_kva for t in feeder.transformers}
    for entry in manifest.jobs:
        if entry["status"] != "Completed":
            continue
        rel = f"{result_rel_dir(manifest.run_id, entry['trial'], entry['year'])}/transformer_loading.csv"
        ids, loading = loading_from_csv(store.fetch_text(rel))
        for row, tid in enumerate(ids):
            hours, peak = detect_overloads(
                loading[row], ratings[tid], threshold, min_duration_h
            )
            if hours > 0:
                records.append(
                    ViolationRecord(
                        transformer_id=tid,
                        trial=entry["trial"],
                        year=entry["year"],
                        violation_hours=hours,
                        peak_loading_ratio=peak,
                    )
                )
    return records


def year_color(year: int, horizon_n: int) -> str:
    """Palette bucket for the earliest violation year (6 buckets over the horizon)."""
    if not 1 <= year <= horizon_n:
        raise ValueError(f"year {year} outside horizon 1..{horizon_n}")
    bucket = min(len(YEAR_PALETTE) - 1, (year - 1) * len(YEAR_PALETTE) // horizon_n)
    return YEAR_PALETTE[bucket]


@dataclass(frozen=True)
class ImpactCircleSpec:
    """Concentric-circle encoding of one transformer's risk at its bus location."""

    transformer_id: str
    center: tuple[float, float]
    rings: tuple[tuple[int, float, str], ...]  # (year, radius, color)


def build_impact_circles(
    summaries: Mapping[str, TransformerImpactSummary],
    feeder: FeederModel,
    horizon_n: int,
    r_min: float = DEFAULT_RING_RADIUS[0],
    r_max: float = DEFAULT_RING_RADIUS[1],
) -> list[ImpactCircleSpec]:
    """One circle group per transformer with any violation.

    Ring radius grows linearly with the year's violation frequency between
    `r_min` and `r_max`; every ring of a transformer shares the color bucket
    of its earliest violation year. Zero-frequency years draw no ring.
    """
    specs: list[ImpactCircleSpec] = []
    for tid in sorted(summaries):
        summary = summaries[tid]
        if summary.earliest_year_overall is None:
            continue
        xfmr = feeder.transformer_map.get(tid)
        if xfmr is None:
            raise KeyError(f"summary references unknown transformer '{tid}'")
        bus = feeder.bus_map[xfmr.bus]
        color = year_color(summary.earliest_year_overall, horizon_n)
        rings = tuple(
            (year, r_min + (r_max - r_min) * freq, color)
            for year, freq in sorted(summary.yearly_frequency.items())
            if freq > 0
        )
        specs.append(
            ImpactCircleSpec(transformer_id=tid, center=(bus.x, bus.y), rings=rings)
        )
    return specs


def five_year_trend(
    records: Iterable[ViolationRecord], transformer_id: str, trial: int, horizon_n: int
) -> list[int]:
    """Violation hours sampled at years 5, 10, ..., horizon for one trial."""
    if horizon_n < 5:
        raise ValueError(f"horizon must cover at least 5 years, got {horizon_n}")
    hours_by_year = {
        rec.year: rec.violation_hours
        for rec in records
        if rec.transformer_id == transformer_id and rec.trial == trial
    }
    return [hours_by_year.get(year, 0) for year in range(5, horizon_n + 1, 5)]


def _svg_layout(feeder: FeederModel, width: float, height: float, pad: float):
    xs = [b.x for b in feeder.buses]
    ys = [b.y for b in feeder.buses]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    span_x = max(x1 - x0, 1e-9)
    span_y = max(y1 - y0, 1e-9)
    scale = min((width - 2 * pad) / span_x, (height - 2 * pad) / span_y)

    def place(x: float, y: float) -> tuple[float, float]:
        return (pad + (x - x0) * scale, height - pad - (y - y0) * scale)

    return place


def render_impact_map(
    feeder: FeederModel,
    circles: Iterable[ImpactCircleSpec],
    width: int = 960,
    height: int = 720,
) -> str:
    """Feeder topology as SVG with concentric impact circles per transformer."""
    place = _svg_layout(feeder, width, height, pad=30.0)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        '<g stroke="#999999" stroke-width="1.2">',
    ]
    for line in feeder.lines:
        fx, fy = place(feeder.bus_map[line.from_bus].x, feeder.bus_map[line.from_bus].y)
        tx, ty = place(feeder.bus_map[line.to_bus].x, feeder.bus_map[line.to_bus].y)
        parts.append(f'<line x1="{fx:.2f}" y1="{fy:.2f}" x2="{tx:.2f}" y2="{ty:.2f}"/>')
    parts.append("</g>")

    parts.append('<g fill="#555555">')
    for bus in feeder.buses:
        cx, cy = place(bus.x, bus.y)
        if bus.id == feeder.source_bus:
            parts.append(
                f'<rect x="{cx - 5:.2f}" y="{cy - 5:.2f}" width="10" height="10" fill="#222222"/>'
            )
        else:
            parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="2"/>')
    parts.append("</g>")

    parts.append('<g fill="none" stroke-width="1.5">')
    for spec in circles:
        cx, cy = place(*spec.center)
        parts.append(f'<g data-transformer="{spec.transformer_id}">')
        # Larger rings first so small rings stay visible on top.
        for year, radius, color in sorted(spec.rings, key=lambda r: -r[1]):
            parts.append(
                f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{radius:.2f}" '
                f'stroke="{color}" data-year="{year}"/>'
            )
        parts.append("</g>")
    parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(
    store: ArtifactStore,
    manifest: RunManifest,
    feeder: FeederModel,
    records: list[ViolationRecord],
    r_min: float = DEFAULT_RING_RADIUS[0],
    r_max: float = DEFAULT_RING_RADIUS[1],
) -> list[str]:
    """Write the report artifacts and return their store-relative paths.

    Emits `impact_summary.csv` (one row per impacted transformer),
    `impact_map.svg`, per-transformer `trend_<id>.csv` files (5-year marks,
    when the horizon allows), and `report.json` with completed/failed job
    counts so partial runs are flagged. Output depends only on inputs, so a
    rerun reproduces every artifact byte-for-byte.
    """
    run_id, n, m = manifest.run_id, manifest.n, manifest.m
    summaries = summarize_impacts(records, m, n)
    report_dir = f"runs/{run_id}/report"
    written: list[str] = []

    header = "transformer_id,earliest_year," + ",".join(
        f"freq_year_{y}" for y in range(1, n + 1)
    )
    lines = [header]
    for tid in sorted(summaries):
        summary = summaries[tid]
        freqs = ",".join(f"{summary.yearly_frequency[y]:.6f}" for y in range(1, n + 1))
        lines.append(f"{tid},{summary.earliest_year_overall},{freqs}")
    summary_rel = f"{report_dir}/impact_summary.csv"
    store.store_text(summary_rel, "\n".join(lines) + "\n")
    written.append(summary_rel)

    circles = build_impact_circles(summaries, feeder, n, r_min, r_max)
    map_rel = f"{report_dir}/impact_map.svg"
    store.store_text(map_rel, render_impact_map(feeder, circles))
    written.append(map_rel)

    if n >= 5:
        marks = list(range(5, n + 1, 5))
        trend_header = "trial," + ",".join(f"year_{y}" for y in marks)
        for tid in sorted(summaries):
            trials = sorted({rec.trial for rec in records if rec.transformer_id == tid})
            rows = [trend_header]
            for trial in trials:
                counts = five_year_trend(records, tid, trial, n)
                rows.append(f"{trial}," + ",".join(str(c) for c in counts))
            trend_rel = f"{report_dir}/trend_{tid}.csv"
            store.store_text(trend_rel, "\n".join(rows) + "\n")
            written.append(trend_rel)

    status_counts = {"Completed": 0, "Failed": 0, "Pending": 0, "Running": 0}
    for entry in manifest.jobs:
        status_counts[entry["status"]] = status_counts.get(entry["status"], 0) + 1
    report_doc = {
        "run_id": run_id,
        "n": n,
        "m": m,
        "jobs_total": len(manifest.jobs),
        "jobs_completed": status_counts["Completed"],
        "jobs_failed": status_counts["Failed"],
        "partial": status_counts["Completed"] < len(manifest.jobs),
        "impacted_transformers": len(summaries),
        "artifacts": sorted(written),
    }
    report_rel = f"{report_dir}/report.json"
    store.store_text(report_rel, json.dumps(report_doc, indent=1, sort_keys=True) + "\n")
    written.append(report_rel)
    return written
