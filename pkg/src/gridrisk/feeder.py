"""Radial distribution feeder model: load, validate, disaggregate.

The feeder is the shared, read-only input of every simulation job: a tree of
buses and line segments rooted at the substation source, with service
transformers hanging off buses and customer sites hanging off transformers.
Lumped transformer loads can be split into individual houses so that
customer-level DER adoption has concrete attachment points.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path


class FeederError(Exception):
    """Base class for feeder file and model errors."""


class FeederParseError(FeederError):
    """Raised when a feeder file cannot be parsed into a model."""


class FeederValidationError(FeederError):
    """Raised when a parsed model violates a structural invariant."""


@dataclass(frozen=True)
class BusNode:
    """Electrical node of the feeder.

    Attributes:
        id: Unique bus name.
        base_voltage: Line-to-neutral base voltage [V].
        x, y: Plot coordinates (unitless, used for report layout only).
    """

    id: str
    base_voltage: float
    x: float = 0.0
    y: float = 0.0


@dataclass(frozen=True)
class LineSegment:
    """Series branch between two buses, impedance in per-unit."""

    from_bus: str
    to_bus: str
    resistance: float
    reactance: float

    @property
    def impedance(self) -> complex:
        return complex(self.resistance, self.reactance)


@dataclass(frozen=True)
class ServiceTransformer:
    """Final transformer serving a small group of customers.

    A transformer either lists the customers it serves or carries a lumped
    load (kW) that `disaggregate_loads` will split into houses. `p_pv`/`p_ev`
    are optional location-based adoption-probability hints applied to houses
    created from the lumped load.
    """

    id: str
    bus: str
    rating_kva: float
    customer_ids: tuple[str, ...] = ()
    lumped_load_kw: float = 0.0
    p_pv: float | None = None
    p_ev: float | None = None


@dataclass(frozen=True)
class CustomerSite:
    """One service point: annual-peak load scale plus adoption probabilities.

    `pv_kw` / `ev_kw` are pre-existing DER capacities (0 means none); a
    customer with pre-existing equipment starts the adoption process already
    in the adopted state for that technology.
    """

    id: str
    transformer_id: str
    base_load_kw: float
    p_pv: float
    p_ev: float
    pv_kw: float = 0.0
    ev_kw: float = 0.0


@dataclass(frozen=True)
class TopologyReport:
    """Parent-pointer tree of a validated radial feeder.

    Attributes:
        order: Bus ids in breadth-first order from the source.
        parent: Bus id -> upstream bus id (source maps to None).
        depth: Bus id -> hop count from the source.
        parent_line: Bus id -> index into `FeederModel.lines` of the segment
            connecting it to its parent (absent for the source).
    """

    order: tuple[str, ...]
    parent: dict[str, str | None]
    depth: dict[str, int]
    parent_line: dict[str, int]

    @property
    def max_depth(self) -> int:
        return max(self.depth.values())


@dataclass(frozen=True)
class FeederModel:
    """Immutable radial feeder; safe to share across concurrent jobs."""

    source_bus: str
    buses: tuple[BusNode, ...]
    lines: tuple[LineSegment, ...]
    transformers: tuple[ServiceTransformer, ...]
    customers: tuple[CustomerSite, ...]

    @cached_property
    def bus_map(self) -> dict[str, BusNode]:
        return {b.id: b for b in self.buses}

    @cached_property
    def transformer_map(self) -> dict[str, ServiceTransformer]:
        return {t.id: t for t in self.transformers}

    @cached_property
    def customer_map(self) -> dict[str, CustomerSite]:
        return {c.id: c for c in self.customers}

    @cached_property
    def customers_by_transformer(self) -> dict[str, tuple[CustomerSite, ...]]:
        grouped: dict[str, list[CustomerSite]] = defaultdict(list)
        for c in self.customers:
            grouped[c.transformer_id].append(c)
        return {tid: tuple(sites) for tid, sites in grouped.items()}

    def total_base_load_kw(self) -> float:
        """Feeder load total: customer base loads plus remaining lumped loads."""
        return sum(c.base_load_kw for c in self.customers) + sum(
            t.lumped_load_kw for t in self.transformers
        )


def validate_radial(model: FeederModel) -> TopologyReport:
    """Check that the bus/line graph is a tree rooted at the source bus.

    Returns:
        TopologyReport listing every bus exactly once with parent and depth.

    Raises:
        FeederValidationError: On a cycle (naming the closing line) or an
            unreachable bus (naming the bus).
    """
    if model.source_bus not in model.bus_map:
        raise FeederValidationError(f"source bus '{model.source_bus}' is not defined")

    adjacency: dict[str, list[tuple[str, int]]] = defaultdict(list)
    for idx, line in enumerate(model.lines):
        adjacency[line.from_bus].append((line.to_bus, idx))
        adjacency[line.to_bus].append((line.from_bus, idx))

    parent: dict[str, str | None] = {model.source_bus: None}
    parent_line: dict[str, int] = {}
    depth: dict[str, int] = {model.source_bus: 0}
    order: list[str] = [model.source_bus]
    frontier = [model.source_bus]
    while frontier:
        nxt: list[str] = []
        for bus in frontier:
            for neighbor, idx in adjacency[bus]:
                if neighbor == parent[bus]:
                    continue
                if neighbor in parent:
                    line = model.lines[idx]
                    raise FeederValidationError(
                        f"cycle detected: line {line.from_bus}--{line.to_bus} "
                        f"closes a loop at bus '{neighbor}'"
                    )
                parent[neighbor] = bus
                parent_line[neighbor] = idx
                depth[neighbor] = depth[bus] + 1
                order.append(neighbor)
                nxt.append(neighbor)
        frontier = nxt

    unreachable = [b.id for b in model.buses if b.id not in parent]
    if unreachable:
        raise FeederValidationError(
            f"unreachable bus(es) not connected to '{model.source_bus}': "
            + ", ".join(sorted(unreachable))
        )
    return TopologyReport(
        order=tuple(order), parent=parent, depth=depth, parent_line=parent_line
    )


def validate_feeder(model: FeederModel) -> FeederModel:
    """Validate every model invariant; returns the model unchanged on success.

    Raises:
        FeederValidationError: Naming the first offending element found.
    """
    seen_buses: set[str] = set()
    for bus in model.buses:
        if bus.id in seen_buses:
            raise FeederValidationError(f"duplicate bus id '{bus.id}'")
        seen_buses.add(bus.id)
        if bus.base_voltage <= 0:
            raise FeederValidationError(
                f"bus '{bus.id}' has nonpositive base voltage {bus.base_voltage}"
            )

    if len(model.lines) != len(model.buses) - 1:
        raise FeederValidationError(
            f"not radial: {len(model.lines)} lines for {len(model.buses)} buses "
            f"(expected {len(model.buses) - 1})"
        )
    for line in model.lines:
        if line.from_bus == line.to_bus:
            raise FeederValidationError(
                f"line {line.from_bus}--{line.to_bus} connects a bus to itself"
            )
        for end in (line.from_bus, line.to_bus):
            if end not in model.bus_map:
                raise FeederValidationError(
                    f"line {line.from_bus}--{line.to_bus} references unknown bus '{end}'"
                )
        if abs(line.impedance) <= 0:
            raise FeederValidationError(
                f"line {line.from_bus}--{line.to_bus} has zero impedance"
            )

    seen_transformers: set[str] = set()
    for xfmr in model.transformers:
        if xfmr.id in seen_transformers:
            raise FeederValidationError(f"duplicate transformer id '{xfmr.id}'")
        seen_transformers.add(xfmr.id)
        if xfmr.rating_kva <= 0:
            raise FeederValidationError(
                f"transformer '{xfmr.id}' has nonpositive rating {xfmr.rating_kva}"
            )
        if xfmr.bus not in model.bus_map:
            raise FeederValidationError(
                f"transformer '{xfmr.id}' references unknown bus '{xfmr.bus}'"
            )
        if not xfmr.customer_ids and xfmr.lumped_load_kw <= 0:
            raise FeederValidationError(
                f"transformer '{xfmr.id}' serves no customers and has no lumped load"
            )
        if xfmr.lumped_load_kw < 0:
            raise FeederValidationError(
                f"transformer '{xfmr.id}' has negative lumped load"
            )

    seen_customers: set[str] = set()
    for cust in model.customers:
        if cust.id in seen_customers:
            raise FeederValidationError(f"duplicate customer id '{cust.id}'")
        seen_customers.add(cust.id)
        if cust.transformer_id not in model.transformer_map:
            raise FeederValidationError(
                f"customer '{cust.id}' references unknown transformer "
                f"'{cust.transformer_id}'"
            )
        if cust.base_load_kw < 0:
            raise FeederValidationError(
                f"customer '{cust.id}' has negative base load"
            )
        for name, p in (("p_pv", cust.p_pv), ("p_ev", cust.p_ev)):
            if not 0.0 <= p <= 1.0:
                raise FeederValidationError(
                    f"customer '{cust.id}' has {name}={p} outside [0, 1]"
                )
        if cust.pv_kw < 0 or cust.ev_kw < 0:
            raise FeederValidationError(
                f"customer '{cust.id}' has negative pre-existing DER capacity"
            )

    for xfmr in model.transformers:
        for cid in xfmr.customer_ids:
            if cid not in seen_customers:
                raise FeederValidationError(
                    f"transformer '{xfmr.id}' lists unknown customer '{cid}'"
                )

    validate_radial(model)
    return model


def _require(record: dict, key: str, context: str):
    if key not in record:
        raise FeederParseError(f"{context} is missing required field '{key}'")
    return record[key]


def feeder_from_dict(doc: dict) -> FeederModel:
    """Build a validated FeederModel from a parsed feeder document."""
    if not isinstance(doc, dict):
        raise FeederParseError("feeder document must be a mapping at top level")
    source = _require(doc, "source_bus", "feeder document")

    buses = tuple(
        BusNode(
            id=str(_require(rec, "id", "bus entry")),
            base_voltage=float(_require(rec, "base_voltage_v", f"bus '{rec.get('id')}'")),
            x=float(rec.get("x", 0.0)),
            y=float(rec.get("y", 0.0)),
        )
        for rec in doc.get("buses", [])
    )
    lines = tuple(
        LineSegment(
            from_bus=str(_require(rec, "from", "line entry")),
            to_bus=str(_require(rec, "to", "line entry")),
            resistance=float(_require(rec, "r_pu", f"line '{rec.get('from')}--{rec.get('to')}'")),
            reactance=float(_require(rec, "x_pu", f"line '{rec.get('from')}--{rec.get('to')}'")),
        )
        for rec in doc.get("lines", [])
    )

    customers = tuple(
        CustomerSite(
            id=str(_require(rec, "id", "customer entry")),
            transformer_id=str(_require(rec, "transformer", f"customer '{rec.get('id')}'")),
            base_load_kw=float(_require(rec, "base_load_kw", f"customer '{rec.get('id')}'")),
            p_pv=float(_require(rec, "p_pv", f"customer '{rec.get('id')}'")),
            p_ev=float(_require(rec, "p_ev", f"customer '{rec.get('id')}'")),
            pv_kw=float(rec.get("pv_kw", 0.0)),
            ev_kw=float(rec.get("ev_kw", 0.0)),
        )
        for rec in doc.get("customers", [])
    )
    by_transformer: dict[str, list[str]] = defaultdict(list)
    for cust in customers:
        by_transformer[cust.transformer_id].append(cust.id)

    transformers = tuple(
        ServiceTransformer(
            id=str(_require(rec, "id", "transformer entry")),
            bus=str(_require(rec, "bus", f"transformer '{rec.get('id')}'")),
            rating_kva=float(_require(rec, "rating_kva", f"transformer '{rec.get('id')}'")),
            customer_ids=tuple(by_transformer.get(str(rec["id"]), ())),
            lumped_load_kw=float(rec.get("lumped_load_kw", 0.0)),
            p_pv=None if rec.get("p_pv") is None else float(rec["p_pv"]),
            p_ev=None if rec.get("p_ev") is None else float(rec["p_ev"]),
        )
        for rec in doc.get("transformers", [])
    )

    model = FeederModel(
        source_bus=str(source),
        buses=buses,
        lines=lines,
        transformers=transformers,
        customers=customers,
    )
    return validate_feeder(model)


def feeder_to_dict(model: FeederModel) -> dict:
    """Serialize a FeederModel back to the feeder file schema."""
    doc: dict = {
        "source_bus": model.source_bus,
        "buses": [
            {"id": b.id, "base_voltage_v": b.base_voltage, "x": b.x, "y": b.y}
            for b in model.buses
        ],
        "lines": [
            {"from": l.from_bus, "to": l.to_bus, "r_pu": l.resistance, "x_pu": l.reactance}
            for l in model.lines
        ],
        "transformers": [],
        "customers": [
            {
                "id": c.id,
                "transformer": c.transformer_id,
                "base_load_kw": c.base_load_kw,
                "p_pv": c.p_pv,
                "p_ev": c.p_ev,
                **({"pv_kw": c.pv_kw} if c.pv_kw else {}),
                **({"ev_kw": c.ev_kw} if c.ev_kw else {}),
            }
            for c in model.customers
        ],
    }
    for t in model.transformers:
        rec: dict = {"id": t.id, "bus": t.bus, "rating_kva": t.rating_kva}
        if t.lumped_load_kw:
            rec["lumped_load_kw"] = t.lumped_load_kw
        if t.p_pv is not None:
            rec["p_pv"] = t.p_pv
        if t.p_ev is not None:
            rec["p_ev"] = t.p_ev
        doc["transformers"].append(rec)
    return doc


def load_feeder(path: str | Path) -> FeederModel:
    """Load and validate a feeder model file.

    Raises:
        FeederParseError: Malformed file or missing fields.
        FeederValidationError: Structural invariant violations.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FeederParseError(f"cannot read feeder file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FeederParseError(f"malformed feeder file {path}: {exc}") from exc
    return feeder_from_dict(doc)


def save_feeder(model: FeederModel, path: str | Path) -> None:
    """Write the model so that `load_feeder` round-trips it field-for-field."""
    Path(path).write_text(
        json.dumps(feeder_to_dict(model), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


DEFAULT_HOUSES_PER_KVA = 0.2  # one house per 5 kVA of transformer rating


def disaggregate_loads(
    model: FeederModel,
    houses_per_kva: float = DEFAULT_HOUSES_PER_KVA,
    default_p_pv: float = 0.05,
    default_p_ev: float = 0.05,
) -> FeederModel:
    """Split lumped transformer loads into individual customer houses.

    Every transformer with a lumped load and no customers gains
    ``round(rating_kva * houses_per_kva)`` houses (at least one), splitting
    the lumped kW equally; transformers that already serve customers are
    left untouched, so the operation is idempotent. Total feeder base load
    is conserved.

    Args:
        model: Validated feeder model.
        houses_per_kva: Houses created per kVA of transformer rating.
        default_p_pv: PV adoption probability for created houses when the
            transformer carries no `p_pv` hint.
        default_p_ev: Same for EV.

    Returns:
        A new FeederModel; the input is not modified.
    """
    if houses_per_kva <= 0:
        raise ValueError(f"houses_per_kva must be positive, got {houses_per_kva}")

    new_transformers: list[ServiceTransformer] = []
    new_customers: list[CustomerSite] = list(model.customers)
    for xfmr in model.transformers:
        if xfmr.customer_ids or xfmr.lumped_load_kw <= 0:
            new_transformers.append(xfmr)
            continue
        n_houses = max(1, round(xfmr.rating_kva * houses_per_kva))
        share_kw = xfmr.lumped_load_kw / n_houses
        p_pv = xfmr.p_pv if xfmr.p_pv is not None else default_p_pv
        p_ev = xfmr.p_ev if xfmr.p_ev is not None else default_p_ev
        house_ids = tuple(f"{xfmr.id}_h{k}" for k in range(1, n_houses + 1))
        new_customers.extend(
            CustomerSite(
                id=house_id,
                transformer_id=xfmr.id,
                base_load_kw=share_kw,
                p_pv=p_pv,
                p_ev=p_ev,
            )
            for house_id in house_ids
        )
        new_transformers.append(
            replace(xfmr, customer_ids=house_ids, lumped_load_kw=0.0)
        )

    result = FeederModel(
        source_bus=model.source_bus,
        buses=model.buses,
        lines=model.lines,
        transformers=tuple(new_transformers),
        customers=tuple(new_customers),
    )
    return validate_feeder(result)


def bundled_fixture_path(name: str = "feeder123.json") -> Path:
    """Path of a data file bundled with the package."""
    return Path(__file__).parent / "data" / name


def _assert_conservation(before: FeederModel, after: FeederModel) -> None:
    # Internal sanity for tools; mirrors the documented 1e-9 relative bound.
    b, a = before.total_base_load_kw(), after.total_base_load_kw()
    if b > 0 and abs(a - b) / b > 1e-9:
        raise AssertionError(f"load not conserved: {b} -> {a}")
    assert math.isfinite(a)
