"""Run configuration: every assumption knob in one serializable record.

The config snapshot lands in the run manifest, so a finished run documents
the exact probabilities, distributions, tolerances, and thresholds it used;
manifest plus seed reproduce the run bit-for-bit.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .adoption import CapacityDistribution, Technology
from .profiles import EvBehavior


class ConfigError(Exception):
    """Invalid or unreadable run configuration."""


def _default_workers() -> int:
    return os.cpu_count() or 1


@dataclass
class RunConfig:
    feeder_path: str
    out_root: str
    years_n: int = 10
    trials_m: int = 20
    master_seed: int = 1
    worker_count: int = field(default_factory=_default_workers)
    run_id: str | None = None

    # Feeder preparation
    houses_per_kva: float = 0.2
    default_p_pv: float = 0.05
    default_p_ev: float = 0.05

    # Adoption capacity distributions
    pv_capacities_kw: tuple[float, ...] = (3.0, 5.0, 7.0, 10.0)
    pv_capacity_weights: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)
    ev_capacities_kw: tuple[float, ...] = (3.3, 7.2, 11.5)
    ev_capacity_weights: tuple[float, ...] = (1.0, 1.0, 1.0)

    # Profile synthesis
    weather_path: str | None = None  # None -> bundled synthetic fixture
    pv_derate: float = 0.85
    ev_start_hours: tuple[int, ...] = (16, 17, 18, 19, 20, 21, 22)
    ev_start_weights: tuple[float, ...] = (0.05, 0.15, 0.30, 0.20, 0.15, 0.10, 0.05)
    ev_durations_h: tuple[int, ...] = (2, 3, 4)
    ev_duration_weights: tuple[float, ...] = (1.0, 1.0, 1.0)

    # Power flow
    power_factor: float = 0.95
    s_base_kva: float = 1000.0
    voltage_tol: float = 1e-6
    balance_tol: float = 1e-8
    max_iterations: int = 50
    no_load_kva: float = 0.0
    on_nonconverged: str = "abort"

    # Post-processing
    overload_threshold: float = 1.0
    min_duration_h: int = 1
    ring_radius_min: float = 3.0
    ring_radius_max: float = 18.0

    # Execution
    retries: int = 0
    use_processes: bool = True

    def validate(self) -> "RunConfig":
        if self.years_n < 1 or self.trials_m < 1 or self.worker_count < 1:
            raise ConfigError(
                f"years, trials, and workers must be >= 1 "
                f"(got {self.years_n}, {self.trials_m}, {self.worker_count})"
            )
        if self.master_seed < 0:
            raise ConfigError(f"master seed must be nonnegative, got {self.master_seed}")
        if not Path(self.feeder_path).exists():
            raise ConfigError(f"feeder file not found: {self.feeder_path}")
        if self.weather_path is not None and not Path(self.weather_path).exists():
            raise ConfigError(f"weather file not found: {self.weather_path}")
        if not 0.0 < self.power_factor <= 1.0:
            raise ConfigError(f"power factor must be in (0, 1], got {self.power_factor}")
        if self.overload_threshold <= 0:
            raise ConfigError(f"overload threshold must be positive, got {self.overload_threshold}")
        if self.on_nonconverged not in ("abort", "continue"):
            raise ConfigError(f"unknown non-convergence policy '{self.on_nonconverged}'")
        if self.retries < 0:
            raise ConfigError(f"retries must be nonnegative, got {self.retries}")
        return self

    def capacity_distributions(self) -> dict[Technology, CapacityDistribution]:
        return {
            Technology.PV: CapacityDistribution(self.pv_capacities_kw, self.pv_capacity_weights),
            Technology.EV: CapacityDistribution(self.ev_capacities_kw, self.ev_capacity_weights),
        }

    def ev_behavior(self) -> EvBehavior:
        return EvBehavior(
            start_hours=self.ev_start_hours,
            start_weights=self.ev_start_weights,
            durations_h=self.ev_durations_h,
            duration_weights=self.ev_duration_weights,
        )

    def to_dict(self) -> dict:
        doc = asdict(self)
        for key, value in doc.items():
            if isinstance(value, tuple):
                doc[key] = list(value)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(doc)
        for key, value in kwargs.items():
            if isinstance(value, list):
                kwargs[key] = tuple(value)
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config file {path}: {exc}") from exc
        return cls.from_dict(doc)

    def with_overrides(self, **kwargs) -> "RunConfig":
        provided = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **provided)
