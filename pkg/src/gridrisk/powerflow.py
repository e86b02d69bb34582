"""Radial power-flow solver and yearly 8,760-hour grid-state extraction.

The solver is a forward-backward sweep on the validated radial tree:
starting flat at 1.0 pu, the backward pass accumulates branch currents from
the constant-power injections leaf to root, the forward pass re-propagates
voltages root to leaf, and the pair repeats until voltages settle and the
source/load/loss power balance closes. A yearly run solves all 8,760
snapshots; hours share no state (quasi-static), which lets the sweep operate
on (bus, hour) arrays with identical per-hour semantics.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .feeder import FeederModel, validate_radial
from .profiles import HOURS_PER_YEAR

DEFAULT_S_BASE_KVA = 1000.0
DEFAULT_VOLTAGE_TOL = 1e-6
DEFAULT_BALANCE_TOL = 1e-8
DEFAULT_MAX_ITERATIONS = 50
DEFAULT_POWER_FACTOR = 0.95


class PowerFlowError(Exception):
    """Raised on invalid cases or non-converged solves under the abort policy."""


@dataclass(frozen=True)
class PreparedNetwork:
    """BFS-ordered array view of a radial feeder (index 0 is the source)."""

    bus_ids: tuple[str, ...]
    index: dict[str, int]
    parent: np.ndarray
    impedance: np.ndarray
    line_of_bus: dict[str, int]

    @classmethod
    def from_feeder(cls, feeder: FeederModel) -> "PreparedNetwork":
        report = validate_radial(feeder)
        ids = report.order
        index = {bid: i for i, bid in enumerate(ids)}
        parent = np.full(len(ids), -1, dtype=np.int64)
        impedance = np.zeros(len(ids), dtype=complex)
        for bid in ids[1:]:
            parent[index[bid]] = index[report.parent[bid]]
            impedance[index[bid]] = feeder.lines[report.parent_line[bid]].impedance
        return cls(
            bus_ids=ids,
            index=index,
            parent=parent,
            impedance=impedance,
            line_of_bus=dict(report.parent_line),
        )


@dataclass
class SweepSolution:
    """Raw batched solve output in per-unit; hours along the second axis."""

    voltage: np.ndarray        # (n_bus, H) complex
    branch_current: np.ndarray  # (n_bus, H) complex, row = line into that bus
    iterations: int
    residual: np.ndarray       # (H,) final max |dV| per hour
    balance_error: np.ndarray  # (H,) relative power mismatch per hour
    converged: np.ndarray      # (H,) bool


def _sweep(
    net: PreparedNetwork,
    s_bus_pu: np.ndarray,
    voltage_tol: float,
    balance_tol: float,
    max_iterations: int,
) -> SweepSolution:
    n_bus, n_hours = s_bus_pu.shape
    v = np.ones((n_bus, n_hours), dtype=complex)
    v_next = np.empty_like(v)
    i_branch = np.empty_like(v)
    row = np.empty(n_hours, dtype=complex)
    load_total = s_bus_pu.sum(axis=0)
    order = range(1, n_bus)
    parent = net.parent
    impedance = net.impedance  # z of the line feeding each bus; 0 at source

    def balance_of(currents: np.ndarray) -> np.ndarray:
        # Relative closure of source power vs loads plus series losses; the
        # voltages implied by `currents` are the just-forwarded ones.
        s_source = np.conj(currents[0])  # V_source is exactly 1.0 pu
        losses = (impedance[:, None] * np.abs(currents) ** 2).sum(axis=0)
        mismatch = np.abs(s_source - load_total - losses)
        return mismatch / np.maximum(np.abs(s_source), 1e-12)

    dv = np.full(n_hours, np.inf)
    balance = np.full(n_hours, np.inf)
    balance_checked = False
    iterations = 0
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        for iterations in range(1, max_iterations + 1):
            np.divide(s_bus_pu, v, out=i_branch)
            np.conjugate(i_branch, out=i_branch)
            for i in reversed(order):
                i_branch[parent[i]] += i_branch[i]
            v_next[0] = 1.0
            for i in order:
                np.multiply(impedance[i], i_branch[i], out=row)
                np.subtract(v_next[parent[i]], row, out=v_next[i])
            np.subtract(v_next, v, out=v)
            dv = np.abs(v).max(axis=0)
            v, v_next = v_next, v
            # The balance term is only worth computing once voltages settled.
            if bool(np.all(dv < voltage_tol)):
                balance = balance_of(i_branch)
                balance_checked = True
                if bool(np.all(balance < balance_tol)):
                    break
            else:
                balance_checked = False
        if not balance_checked:
            balance = balance_of(i_branch)
    converged = (dv < voltage_tol) & (balance < balance_tol)
    return SweepSolution(
        voltage=v,
        branch_current=i_branch,
        iterations=iterations,
        residual=dv,
        balance_error=balance,
        converged=converged,
    )


def aggregate_bus_injections(
    feeder: FeederModel,
    net: PreparedNetwork,
    customer_s_kva: Mapping[str, np.ndarray],
    s_base_kva: float,
) -> np.ndarray:
    """Sum per-customer complex kVA into per-bus per-unit injections."""
    n_hours = next(iter(customer_s_kva.values())).shape[-1] if customer_s_kva else 1
    s_bus = np.zeros((len(net.bus_ids), n_hours), dtype=complex)
    for cust_id, s_kva in customer_s_kva.items():
        cust = feeder.customer_map.get(cust_id)
        if cust is None:
            raise PowerFlowError(f"unknown customer '{cust_id}' in injections")
        bus = feeder.transformer_map[cust.transformer_id].bus
        s_bus[net.index[bus]] += np.asarray(s_kva)
    s_bus *= 1.0 / s_base_kva
    return s_bus


def solve_snapshot(
    feeder: FeederModel,
    hour_injections: Mapping[str, complex],
    *,
    s_base_kva: float = DEFAULT_S_BASE_KVA,
    voltage_tol: float = DEFAULT_VOLTAGE_TOL,
    balance_tol: float = DEFAULT_BALANCE_TOL,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    no_load_kva: float = 0.0,
) -> "SnapshotSolution":
    """Solve one hour from per-customer net injections (kW + j kvar).

    Customers missing from the mapping draw zero power. Injections are
    positive for consumption; PV export is negative.

    Raises:
        PowerFlowError: Unknown customer id or non-finite injection.
    """
    for cust_id, s in hour_injections.items():
        if not (np.isfinite(s.real) and np.isfinite(s.imag)):
            raise PowerFlowError(f"non-finite injection for customer '{cust_id}'")
    net = PreparedNetwork.from_feeder(feeder)
    series = {cid: np.array([complex(s)]) for cid, s in hour_injections.items()}
    s_bus = aggregate_bus_injections(feeder, net, series, s_base_kva)
    sol = _sweep(net, s_bus, voltage_tol, balance_tol, max_iterations)

    voltage = {bid: complex(sol.voltage[i, 0]) for bid, i in net.index.items()}
    branch_flow: dict[tuple[str, str], complex] = {}
    for bid, line_idx in net.line_of_bus.items():
        line = feeder.lines[line_idx]
        i = net.index[bid]
        sending = sol.voltage[net.parent[i], 0]
        branch_flow[(line.from_bus, line.to_bus)] = complex(
            sending * np.conj(sol.branch_current[i, 0]) * s_base_kva
        )

    loading: dict[str, float] = {}
    for xfmr in feeder.transformers:
        s_total = sum(hour_injections.get(cid, 0j) for cid in xfmr.customer_ids)
        loading[xfmr.id] = abs(s_total) + no_load_kva

    return SnapshotSolution(
        voltage=voltage,
        branch_flow=branch_flow,
        transformer_loading=loading,
        converged=bool(sol.converged[0]),
        iterations=sol.iterations,
        residual=float(sol.residual[0]),
        balance_error=float(sol.balance_error[0]),
    )


@dataclass
class SnapshotSolution:
    """Grid state of one solved hour."""

    voltage: dict[str, complex]                 # per-bus complex pu
    branch_flow: dict[tuple[str, str], complex]  # sending-end complex kVA per line
    transformer_loading: dict[str, float]        # apparent power kVA
    converged: bool
    iterations: int
    residual: float
    balance_error: float


@dataclass(frozen=True)
class PowerFlowCase:
    """One yearly job: feeder plus a net-injection profile per customer."""

    feeder: FeederModel
    injections: dict[str, np.ndarray]  # customer id -> (8760,) complex kVA
    trial: int
    year: int

    def validate(self) -> "PowerFlowCase":
        expected = set(self.feeder.customer_map)
        got = set(self.injections)
        if expected != got:
            missing = sorted(expected - got)[:3]
            extra = sorted(got - expected)[:3]
            raise PowerFlowError(
                f"case injections do not cover the feeder's customers exactly "
                f"(missing {missing}, extra {extra})"
            )
        for cid, arr in self.injections.items():
            if arr.shape != (HOURS_PER_YEAR,):
                raise PowerFlowError(
                    f"injection profile for '{cid}' has shape {arr.shape}"
                )
        return self


@dataclass
class SolverStats:
    iterations: int
    residual: float
    balance_error: float
    nonconverged_hours: tuple[int, ...]
    peak_loading_kva: float
    source_energy_kwh: float
    load_energy_kwh: float
    loss_energy_kwh: float


@dataclass
class YearlyResult:
    """Per-hour transformer loadings plus per-bus voltage envelopes for one job."""

    trial: int
    year: int
    transformer_ids: tuple[str, ...]
    loading_kva: np.ndarray  # (n_transformers, 8760)
    bus_ids: tuple[str, ...]
    v_min: np.ndarray
    v_max: np.ndarray
    stats: SolverStats


def run_yearly(
    case: PowerFlowCase,
    *,
    s_base_kva: float = DEFAULT_S_BASE_KVA,
    voltage_tol: float = DEFAULT_VOLTAGE_TOL,
    balance_tol: float = DEFAULT_BALANCE_TOL,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    no_load_kva: float = 0.0,
    on_nonconverged: str = "abort",
) -> YearlyResult:
    """Solve all 8,760 quasi-static snapshots of one job.

    Transformer loading at each hour is the magnitude of the summed net
    apparent power of the customers it serves, plus the configured no-load
    allowance. `on_nonconverged` is either "abort" (raise, naming the first
    bad hour) or "continue" (record the hours and keep going).
    """
    if on_nonconverged not in ("abort", "continue"):
        raise ValueError(f"unknown non-convergence policy '{on_nonconverged}'")
    case.validate()
    feeder = case.feeder
    net = PreparedNetwork.from_feeder(feeder)
    s_bus = aggregate_bus_injections(feeder, net, case.injections, s_base_kva)
    sol = _sweep(net, s_bus, voltage_tol, balance_tol, max_iterations)

    bad_hours = tuple(int(h) for h in np.flatnonzero(~sol.converged))
    if bad_hours and on_nonconverged == "abort":
        h = bad_hours[0]
        raise PowerFlowError(
            f"power flow failed to converge at hour {h} "
            f"(residual {sol.residual[h]:.3e}, {sol.iterations} iterations, "
            f"{len(bad_hours)} hours affected)"
        )

    xfmr_ids = tuple(t.id for t in feeder.transformers)
    loading = np.zeros((len(xfmr_ids), HOURS_PER_YEAR))
    for row, xfmr in enumerate(feeder.transformers):
        s_total = np.zeros(HOURS_PER_YEAR, dtype=complex)
        for cid in xfmr.customer_ids:
            s_total += case.injections[cid]
        loading[row] = np.abs(s_total) + no_load_kva

    v_mag = np.abs(sol.voltage)
    resistance = net.impedance.real
    loss_kw = (resistance[:, None] * np.abs(sol.branch_current) ** 2).sum(axis=0) * s_base_kva
    source_kw = np.conj(sol.branch_current[0]).real * s_base_kva
    load_kw = s_bus.sum(axis=0).real * s_base_kva

    stats = SolverStats(
        iterations=sol.iterations,
        residual=float(np.nanmax(sol.residual)),
        balance_error=float(np.nanmax(sol.balance_error)),
        nonconverged_hours=bad_hours,
        peak_loading_kva=float(loading.max()) if loading.size else 0.0,
        source_energy_kwh=float(source_kw.sum()),
        load_energy_kwh=float(load_kw.sum()),
        loss_energy_kwh=float(loss_kw.sum()),
    )
    return YearlyResult(
        trial=case.trial,
        year=case.year,
        transformer_ids=xfmr_ids,
        loading_kva=loading,
        bus_ids=net.bus_ids,
        v_min=v_mag.min(axis=1),
        v_max=v_mag.max(axis=1),
        stats=stats,
    )


def extract_transformer_series(result: YearlyResult, transformer_id: str) -> np.ndarray:
    """The stored 8,760-value kVA loading series of one transformer."""
    try:
        row = result.transformer_ids.index(transformer_id)
    except ValueError:
        raise KeyError(f"unknown transformer '{transformer_id}' in result") from None
    return result.loading_kva[row]


def result_to_json(result: YearlyResult) -> str:
    """Serialize statistics and voltage envelopes (not the loading matrix)."""
    doc = {
        "trial": result.trial,
        "year": result.year,
        "transformers": list(result.transformer_ids),
        "voltage_envelope": {
            bid: [round(float(result.v_min[i]), 9), round(float(result.v_max[i]), 9)]
            for i, bid in enumerate(result.bus_ids)
        },
        "stats": {
            "iterations": result.stats.iterations,
            "residual": result.stats.residual,
            "balance_error": result.stats.balance_error,
            "nonconverged_hours": list(result.stats.nonconverged_hours),
            "peak_loading_kva": round(result.stats.peak_loading_kva, 6),
            "source_energy_kwh": round(result.stats.source_energy_kwh, 6),
            "load_energy_kwh": round(result.stats.load_energy_kwh, 6),
            "loss_energy_kwh": round(result.stats.loss_energy_kwh, 6),
        },
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def loading_to_csv(result: YearlyResult) -> str:
    """8,760 rows by transformer columns, kVA at 6 decimal places."""
    header = "hour," + ",".join(result.transformer_ids)
    by_hour = result.loading_kva.T
    fmt = "%d," + ",".join(["%.6f"] * len(result.transformer_ids))
    rows = [header]
    rows.extend(fmt % (h, *by_hour[h]) for h in range(by_hour.shape[0]))
    return "\n".join(rows) + "\n"


def loading_from_csv(text: str) -> tuple[tuple[str, ...], np.ndarray]:
    """Parse a loading CSV back to (transformer ids, (n, 8760) array)."""
    header_end = text.index("\n")
    ids = tuple(text[:header_end].split(",")[1:])
    table = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1, ndmin=2)
    if table.shape != (HOURS_PER_YEAR, len(ids) + 1):
        raise ValueError(
            f"loading CSV has shape {table.shape}, expected "
            f"({HOURS_PER_YEAR}, {len(ids) + 1})"
        )
    return ids, np.ascontiguousarray(table[:, 1:].T)
