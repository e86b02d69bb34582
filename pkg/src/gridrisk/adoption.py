"""Two-state Markov DER adoption process and scenario-set generation.

Each customer and technology pair evolves on the state space {not adopted,
adopted} with an absorbing adopted state: a customer that has not adopted
flips with its location-based yearly probability and then never reverts.
Running the n-year process once is a trial; m independent trials give the
Monte Carlo scenario set of n*m (trial, year) snapshots.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .feeder import FeederModel
from .rng import substream

NOT_ADOPTED = 0
ADOPTED = 1


class Technology(str, Enum):
    PV = "PV"
    EV = "EV"


def adoption_probability_by_year(p: float, t: int) -> float:
    """Probability that a customer with yearly probability `p` has adopted by year `t`.

    Computes ``1 - (1 - p)**t``; monotone nondecreasing in both arguments.

    Raises:
        ValueError: If `p` is outside [0, 1] or `t` is negative.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"adoption probability must be in [0, 1], got {p}")
    if t < 0:
        raise ValueError(f"year count must be nonnegative, got {t}")
    return 1.0 - (1.0 - p) ** t


@dataclass(frozen=True)
class TransitionSpec:
    """Yearly transition of one (customer, technology) chain."""

    p_adopt: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_adopt <= 1.0:
            raise ValueError(f"p_adopt must be in [0, 1], got {self.p_adopt}")

    def matrix(self) -> np.ndarray:
        """2x2 transition matrix; rows sum to 1, adopted row is absorbing."""
        p = self.p_adopt
        return np.array([[1.0 - p, p], [0.0, 1.0]])


def step_customer(state: int, spec: TransitionSpec, rng: np.random.Generator) -> int:
    """Advance one chain by one year.

    Consumes exactly one uniform draw when `state` is not-adopted and zero
    draws when already adopted (the adopted state is absorbing).
    """
    if state == ADOPTED:
        return ADOPTED
    return ADOPTED if rng.random() < spec.p_adopt else NOT_ADOPTED


@dataclass(frozen=True)
class CapacityDistribution:
    """Discrete capacity distribution for newly adopted equipment."""

    values_kw: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.values_kw) != len(self.weights) or not self.values_kw:
            raise ValueError("values and weights must be nonempty and equal length")
        if any(v <= 0 for v in self.values_kw):
            raise ValueError("capacities must be strictly positive")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be nonnegative")
        total = sum(self.weights)
        if total <= 0:
            raise ValueError("weights must not all be zero")
        object.__setattr__(
            self, "weights", tuple(w / total for w in self.weights)
        )

    @classmethod
    def uniform(cls, values_kw: tuple[float, ...]) -> CapacityDistribution:
        return cls(values_kw=values_kw, weights=tuple(1.0 for _ in values_kw))

    def pick(self, u: float) -> float:
        """Map one uniform draw in [0, 1) to a capacity."""
        cumulative = 0.0
        for value, weight in zip(self.values_kw, self.weights):
            cumulative += weight
            if u < cumulative:
                return value
        return self.values_kw[-1]


DEFAULT_CAPACITIES: dict[Technology, CapacityDistribution] = {
    Technology.PV: CapacityDistribution.uniform((3.0, 5.0, 7.0, 10.0)),
    Technology.EV: CapacityDistribution.uniform((3.3, 7.2, 11.5)),
}


def sample_capacity(
    technology: Technology,
    rng: np.random.Generator,
    distributions: dict[Technology, CapacityDistribution] | None = None,
) -> float:
    """Draw an installed capacity [kW] for a new adoption; consumes one draw."""
    dists = distributions or DEFAULT_CAPACITIES
    return dists[Technology(technology)].pick(rng.random())


@dataclass(frozen=True)
class DerInstallation:
    """One adopted unit: who, what, how large, and when.

    `adoption_year` 0 marks equipment that pre-exists the planning horizon.
    """

    customer_id: str
    technology: Technology
    capacity_kw: float
    adoption_year: int


@dataclass(frozen=True)
class AdoptionScenario:
    """Cumulative adoption state of one trial at the end of one year."""

    trial: int
    year: int
    installations: tuple[DerInstallation, ...]

    def capacity_kw(self, technology: Technology | None = None) -> float:
        return sum(
            inst.capacity_kw
            for inst in self.installations
            if technology is None or inst.technology == technology
        )


def trial_streams(master_seed: int, trial: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (adoption, capacity) substreams for one trial."""
    return (
        substream(master_seed, "adopt", trial),
        substream(master_seed, "capacity", trial),
    )


def generate_trial(
    model: FeederModel,
    horizon_n: int,
    trial_index: int,
    master_seed: int,
    distributions: dict[Technology, CapacityDistribution] | None = None,
) -> list[AdoptionScenario]:
    """Run the adoption process for `horizon_n` years; one scenario per year.

    Customers without pre-existing equipment start not-adopted; customers
    with `pv_kw`/`ev_kw` in the feeder file start adopted at year 0 with that
    capacity. Each year, every still-pending (customer, technology) pair is
    stepped once, in lexicographic customer-id order with PV before EV; new
    adoptions draw a capacity from the configured distribution. Adoption and
    capacity draws come from two independent per-trial substreams, so the
    batched stepping below consumes streams identically to stepping each pair
    with `step_customer` and sampling with `sample_capacity` in order.

    Pure function of (model, horizon_n, trial_index, master_seed, config):
    repeated calls reproduce the trial exactly.
    """
    if horizon_n < 1:
        raise ValueError(f"horizon must be at least one year, got {horizon_n}")
    dists = distributions or DEFAULT_CAPACITIES
    rng_adopt, rng_capacity = trial_streams(master_seed, trial_index)

    ordered_customers = sorted(model.customers, key=lambda c: c.id)
    installations: list[DerInstallation] = []
    pending: list[tuple[str, Technology, float]] = []  # (customer, tech, p)
    for cust in ordered_customers:
        if cust.pv_kw > 0:
            installations.append(
                DerInstallation(cust.id, Technology.PV, cust.pv_kw, adoption_year=0)
            )
        else:
            pending.append((cust.id, Technology.PV, cust.p_pv))
        if cust.ev_kw > 0:
            installations.append(
                DerInstallation(cust.id, Technology.EV, cust.ev_kw, adoption_year=0)
            )
        else:
            pending.append((cust.id, Technology.EV, cust.p_ev))

    scenarios: list[AdoptionScenario] = []
    probs = np.array([p for _, _, p in pending])
    for year in range(1, horizon_n + 1):
        if pending:
            draws = rng_adopt.random(len(pending))
            adopted_mask = draws < probs
            capacity_draws = rng_capacity.random(int(adopted_mask.sum()))
            still_pending: list[tuple[str, Technology, float]] = []
            draw_cursor = 0
            for flag, pair in zip(adopted_mask, pending):
                if flag:
                    cust_id, tech, _ = pair
                    capacity = dists[tech].pick(capacity_draws[draw_cursor])
                    draw_cursor += 1
                    installations.append(
                        DerInstallation(cust_id, tech, capacity, adoption_year=year)
                    )
                else:
                    still_pending.append(pair)
            pending = still_pending
            probs = probs[~adopted_mask]
        scenarios.append(
            AdoptionScenario(
                trial=trial_index, year=year, installations=tuple(installations)
            )
        )
    return scenarios


def generate_scenarios(
    model: FeederModel,
    n: int,
    m: int,
    master_seed: int,
    distributions: dict[Technology, CapacityDistribution] | None = None,
) -> list[AdoptionScenario]:
    """Generate the full n*m scenario set, ordered by (trial, year).

    Trial k uses substreams derived only from (master_seed, k), so any trial
    can be regenerated alone and trials could run concurrently; the same
    master seed always reproduces the identical set.
    """
    if n < 1 or m < 1:
        raise ValueError(f"need n >= 1 and m >= 1, got n={n}, m={m}")
    scenarios: list[AdoptionScenario] = []
    for trial in range(1, m + 1):
        scenarios.extend(generate_trial(model, n, trial, master_seed, distributions))
    return scenarios


def scenario_to_dict(scenario: AdoptionScenario) -> dict:
    return {
        "trial": scenario.trial,
        "year": scenario.year,
        "installations": [
            {
                "customer": inst.customer_id,
                "technology": inst.technology.value,
                "capacity_kw": inst.capacity_kw,
                "adoption_year": inst.adoption_year,
            }
            for inst in scenario.installations
        ],
    }


def scenario_from_dict(doc: dict) -> AdoptionScenario:
    return AdoptionScenario(
        trial=int(doc["trial"]),
        year=int(doc["year"]),
        installations=tuple(
            DerInstallation(
                customer_id=str(rec["customer"]),
                technology=Technology(rec["technology"]),
                capacity_kw=float(rec["capacity_kw"]),
                adoption_year=int(rec["adoption_year"]),
            )
            for rec in doc["installations"]
        ),
    )


def scenario_to_json(scenario: AdoptionScenario) -> str:
    # Compact: the full scenario set is n*m files and installation lists grow
    # with the horizon.
    return json.dumps(
        scenario_to_dict(scenario), sort_keys=True, separators=(",", ":")
    ) + "\n"


def scenario_from_json(text: str) -> AdoptionScenario:
    return scenario_from_dict(json.loads(text))
