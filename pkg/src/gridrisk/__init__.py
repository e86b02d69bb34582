"""gridrisk: stochastic distribution-grid planning at desk scale.

Generates Markov-model DER adoption scenarios, fans yearly 8,760-hour radial
power-flow jobs out over a worker pool, and reduces the results into
transformer-overload risk metrics and visual reports.
"""

from .adoption import (
    AdoptionScenario,
    CapacityDistribution,
    DerInstallation,
    Technology,
    adoption_probability_by_year,
    generate_scenarios,
    generate_trial,
)
from .config import RunConfig
from .feeder import FeederModel, disaggregate_loads, load_feeder, validate_radial
from .pipeline import bench, generate_run, monitor, run_pipeline
from .postprocess import (
    TransformerImpactSummary,
    ViolationRecord,
    detect_overloads,
    summarize_impacts,
)
from .powerflow import PowerFlowCase, YearlyResult, run_yearly, solve_snapshot

__version__ = "0.1.0"

__all__ = [
    "AdoptionScenario",
    "CapacityDistribution",
    "DerInstallation",
    "FeederModel",
    "PowerFlowCase",
    "RunConfig",
    "Technology",
    "TransformerImpactSummary",
    "ViolationRecord",
    "YearlyResult",
    "adoption_probability_by_year",
    "bench",
    "detect_overloads",
    "disaggregate_loads",
    "generate_run",
    "generate_scenarios",
    "generate_trial",
    "load_feeder",
    "monitor",
    "run_pipeline",
    "run_yearly",
    "solve_snapshot",
    "summarize_impacts",
    "validate_radial",
]
