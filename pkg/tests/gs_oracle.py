"""Independent Gauss-Seidel power-flow oracle and random-feeder builders.

Deliberately kept apart from the package: this solves the same network by a
different method (bus-admittance fixed point instead of the radial sweep) so
solver tests compare two algorithmically unrelated answers.
"""

from __future__ import annotations

import numpy as np

from gridrisk.feeder import (
    BusNode,
    CustomerSite,
    FeederModel,
    LineSegment,
    ServiceTransformer,
    validate_feeder,
)


def gauss_seidel_voltages(
    model: FeederModel,
    bus_loads_pu: dict[str, complex],
    tol: float = 1e-12,
    max_iterations: int = 200_000,
) -> dict[str, complex]:
    """Solve bus voltages with Gauss-Seidel on the bus admittance matrix.

    `bus_loads_pu` maps bus id -> constant-power consumption (positive = load).
    The source bus is held at 1.0 + 0j. Iterates to a much tighter tolerance
    than the solver under test so the oracle's own error is negligible.
    """
    ids = [b.id for b in model.buses]
    index = {bid: i for i, bid in enumerate(ids)}
    n = len(ids)
    ybus = np.zeros((n, n), dtype=complex)
    for line in model.lines:
        i, j = index[line.from_bus], index[line.to_bus]
        y = 1.0 / line.impedance
        ybus[i, j] -= y
        ybus[j, i] -= y
        ybus[i, i] += y
        ybus[j, j] += y

    slack = index[model.source_bus]
    s_injection = np.zeros(n, dtype=complex)
    for bid, s_load in bus_loads_pu.items():
        s_injection[index[bid]] -= s_load

    v = np.ones(n, dtype=complex)
    for _ in range(max_iterations):
        max_dv = 0.0
        for i in range(n):
            if i == slack:
                continue
            total = ybus[i] @ v - ybus[i, i] * v[i]
            v_new = (np.conj(s_injection[i] / v[i]) - total) / ybus[i, i]
            max_dv = max(max_dv, abs(v_new - v[i]))
            v[i] = v_new
        if max_dv < tol:
            break
    else:
        raise RuntimeError(f"Gauss-Seidel oracle did not converge (last dv={max_dv})")
    return {bid: v[index[bid]] for bid in ids}


def random_radial_feeder(rng: np.random.Generator, n_buses: int) -> FeederModel:
    """Random tree feeder of `n_buses` with one customer per non-source bus."""
    buses = [BusNode(id="src", base_voltage=2401.78)]
    lines = []
    transformers = []
    customers = []
    for k in range(1, n_buses):
        parent = buses[int(rng.integers(0, len(buses)))].id
        bid = f"n{k}"
        buses.append(BusNode(id=bid, base_voltage=2401.78, x=float(k), y=0.0))
        r = float(rng.uniform(0.001, 0.01))
        lines.append(LineSegment(from_bus=parent, to_bus=bid, resistance=r, reactance=1.5 * r))
        tid = f"x{k}"
        transformers.append(
            ServiceTransformer(id=tid, bus=bid, rating_kva=50.0, customer_ids=(f"c{k}",))
        )
        customers.append(
            CustomerSite(id=f"c{k}", transformer_id=tid, base_load_kw=10.0, p_pv=0.05, p_ev=0.05)
        )
    return validate_feeder(
        FeederModel(
            source_bus="src",
            buses=tuple(buses),
            lines=tuple(lines),
            transformers=tuple(transformers),
            customers=tuple(customers),
        )
    )


def random_feasible_injections(
    rng: np.random.Generator, model: FeederModel, peak_kw: float = 30.0
) -> dict[str, complex]:
    """Random per-customer net injections, PV-export negative values included."""
    injections = {}
    for cust in model.customers:
        p = float(rng.uniform(-0.5 * peak_kw, peak_kw))
        q = float(rng.uniform(0.0, 0.3 * abs(p)))
        injections[cust.id] = complex(p, q)
    return injections
