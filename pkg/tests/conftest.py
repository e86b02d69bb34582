"""Shared builders for the test suite."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # gs_oracle import

from gridrisk.feeder import (
    BusNode,
    CustomerSite,
    FeederModel,
    LineSegment,
    ServiceTransformer,
    validate_feeder,
)


def chain_feeder(n_customers: int = 2, p_pv: float = 0.05, p_ev: float = 0.05) -> FeederModel:
    """Source -> b1 -> b2 chain with one 50 kVA transformer on b2."""
    customers = tuple(
        CustomerSite(
            id=f"c{k}",
            transformer_id="t1",
            base_load_kw=4.0,
            p_pv=p_pv,
            p_ev=p_ev,
        )
        for k in range(1, n_customers + 1)
    )
    return validate_feeder(
        FeederModel(
            source_bus="src",
            buses=(
                BusNode("src", 2401.78, 0.0, 0.0),
                BusNode("b1", 2401.78, 1.0, 0.0),
                BusNode("b2", 2401.78, 2.0, 0.0),
            ),
            lines=(
                LineSegment("src", "b1", 0.002, 0.004),
                LineSegment("b1", "b2", 0.003, 0.0045),
            ),
            transformers=(
                ServiceTransformer(
                    id="t1",
                    bus="b2",
                    rating_kva=50.0,
                    customer_ids=tuple(c.id for c in customers),
                ),
            ),
            customers=customers,
        )
    )


def flat_probability_feeder(n_customers: int, p: float) -> FeederModel:
    """Star feeder with `n_customers` single-customer transformers, all at probability p."""
    buses = [BusNode("src", 2401.78, 0.0, 0.0), BusNode("hub", 2401.78, 1.0, 0.0)]
    lines = [LineSegment("src", "hub", 0.002, 0.004)]
    transformers = []
    customers = []
    for k in range(1, n_customers + 1):
        transformers.append(
            ServiceTransformer(id=f"t{k}", bus="hub", rating_kva=25.0, customer_ids=(f"c{k}",))
        )
        customers.append(
            CustomerSite(id=f"c{k}", transformer_id=f"t{k}", base_load_kw=4.0, p_pv=p, p_ev=p)
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


@pytest.fixture
def tiny_feeder() -> FeederModel:
    return chain_feeder()
