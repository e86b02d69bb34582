"""Synthesis of the 8,760-hour profiles that parameterize each yearly job.

Load shapes come from seasonal diurnal templates (winter/summer, weekday/
weekend) blended by day of year, perturbed with +/-10% hourly noise, and
peak-normalized to the customer's annual-peak kW. PV output follows the
weather fixture's plane-of-array irradiance fraction with a flat derate.
EV charging places one contiguous block per day with stochastic start hour
and duration. All synthesis is deterministic given its identifying seed
tokens, so any worker can rebuild any profile bit-for-bit.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .feeder import CustomerSite
from .rng import substream

HOURS_PER_YEAR = 8760
DAYS_PER_YEAR = 365

# Diurnal templates (fraction of daily peak), hour 0..23.
_WINTER_WEEKDAY = np.array(
    [0.42, 0.38, 0.36, 0.35, 0.36, 0.42, 0.55, 0.70, 0.68, 0.58, 0.52, 0.50,
     0.49, 0.48, 0.50, 0.56, 0.68, 0.85, 1.00, 0.98, 0.90, 0.76, 0.60, 0.48]
)
_WINTER_WEEKEND = np.array(
    [0.45, 0.40, 0.38, 0.37, 0.37, 0.40, 0.48, 0.58, 0.66, 0.68, 0.64, 0.60,
     0.58, 0.56, 0.56, 0.60, 0.70, 0.86, 1.00, 0.96, 0.88, 0.75, 0.62, 0.50]
)
_SUMMER_WEEKDAY = np.array(
    [0.35, 0.32, 0.30, 0.29, 0.29, 0.32, 0.40, 0.50, 0.55, 0.60, 0.66, 0.72,
     0.78, 0.84, 0.90, 0.95, 1.00, 0.98, 0.92, 0.85, 0.72, 0.58, 0.46, 0.38]
)
_SUMMER_WEEKEND = np.array(
    [0.38, 0.34, 0.32, 0.31, 0.31, 0.33, 0.38, 0.46, 0.54, 0.62, 0.70, 0.76,
     0.82, 0.88, 0.93, 0.97, 1.00, 0.97, 0.90, 0.82, 0.70, 0.57, 0.46, 0.39]
)


def _template_shape() -> np.ndarray:
    day = np.repeat(np.arange(DAYS_PER_YEAR), 24)
    hour = np.tile(np.arange(24), DAYS_PER_YEAR)
    winter_weight = 0.5 * (1.0 + np.cos(2.0 * np.pi * (day - 15) / 365.0))
    weekday = (day % 7) < 5
    weekday_shape = winter_weight * _WINTER_WEEKDAY[hour] + (1.0 - winter_weight) * _SUMMER_WEEKDAY[hour]
    weekend_shape = winter_weight * _WINTER_WEEKEND[hour] + (1.0 - winter_weight) * _SUMMER_WEEKEND[hour]
    return np.where(weekday, weekday_shape, weekend_shape)


_BASE_SHAPE = _template_shape()


@dataclass(frozen=True)
class WeatherYear:
    """One year of hourly weather: irradiance fraction [0,1] and temperature [C]."""

    irradiance: np.ndarray
    temperature: np.ndarray

    def __post_init__(self) -> None:
        for name, arr in (("irradiance", self.irradiance), ("temperature", self.temperature)):
            if arr.shape != (HOURS_PER_YEAR,):
                raise ValueError(f"{name} must have exactly {HOURS_PER_YEAR} values")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        if np.any(self.irradiance < 0.0) or np.any(self.irradiance > 1.0):
            raise ValueError("irradiance must lie in [0, 1]")


def load_weather(path: str | Path) -> WeatherYear:
    """Read a weather fixture CSV with columns hour, irradiance, temp_c."""
    irr = np.empty(HOURS_PER_YEAR)
    temp = np.empty(HOURS_PER_YEAR)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        count = 0
        for row in reader:
            h = int(row["hour"])
            irr[h] = float(row["irradiance"])
            temp[h] = float(row["temp_c"])
            count += 1
    if count != HOURS_PER_YEAR:
        raise ValueError(f"weather file has {count} rows, expected {HOURS_PER_YEAR}")
    return WeatherYear(irradiance=irr, temperature=temp)


def bundled_weather_path() -> Path:
    return Path(__file__).parent / "data" / "weather_synthetic.csv"


def build_load_profile(customer: CustomerSite, year: int, seed: int) -> np.ndarray:
    """Hourly customer load [kW], peak-normalized to `base_load_kw`.

    Deterministic given (customer id, year, seed); independent of trial, so
    all trials see the same underlying demand for a given customer and year.
    """
    rng = substream(seed, "load", customer.id, year)
    noise = 1.0 + rng.uniform(-0.1, 0.1, HOURS_PER_YEAR)
    profile = _BASE_SHAPE * noise
    peak = profile.max()
    return profile * (customer.base_load_kw / peak)


DEFAULT_PV_DERATE = 0.85


def build_pv_profile(
    capacity_kw: float, weather: WeatherYear, derate: float = DEFAULT_PV_DERATE
) -> np.ndarray:
    """Hourly PV output [kW]: capacity x irradiance x derate, zero at night."""
    if capacity_kw < 0:
        raise ValueError(f"capacity must be nonnegative, got {capacity_kw}")
    if not 0.0 < derate <= 1.0:
        raise ValueError(f"derate must be in (0, 1], got {derate}")
    return capacity_kw * weather.irradiance * derate


@dataclass(frozen=True)
class EvBehavior:
    """Charging-session distribution: start hour and duration, one session per day."""

    start_hours: tuple[int, ...] = (16, 17, 18, 19, 20, 21, 22)
    start_weights: tuple[float, ...] = (0.05, 0.15, 0.30, 0.20, 0.15, 0.10, 0.05)
    durations_h: tuple[int, ...] = (2, 3, 4)
    duration_weights: tuple[float, ...] = (1.0, 1.0, 1.0)

    def __post_init__(self) -> None:
        if len(self.start_hours) != len(self.start_weights):
            raise ValueError("start hour and weight lengths differ")
        if len(self.durations_h) != len(self.duration_weights):
            raise ValueError("duration and weight lengths differ")

    def draw_day(self, u_start: float, u_duration: float) -> tuple[int, int]:
        return (
            _discrete_pick(self.start_hours, self.start_weights, u_start),
            _discrete_pick(self.durations_h, self.duration_weights, u_duration),
        )


def _discrete_pick(values, weights, u: float):
    total = sum(weights)
    cumulative = 0.0
    for value, weight in zip(values, weights):
        cumulative += weight / total
        if u < cumulative:
            return value
    return values[-1]


def build_ev_profile(
    charger_kw: float, behavior: EvBehavior, rng: np.random.Generator
) -> np.ndarray:
    """Hourly EV charging [kW]: one contiguous block at charger power per day.

    Consumes exactly two uniform draws per day (start, duration) in day
    order; a block that would run past the end of the year is clipped at
    hour 8,760.
    """
    if charger_kw < 0:
        raise ValueError(f"charger power must be nonnegative, got {charger_kw}")
    profile = np.zeros(HOURS_PER_YEAR)
    if charger_kw == 0:
        return profile
    draws = rng.random((DAYS_PER_YEAR, 2))
    for day in range(DAYS_PER_YEAR):
        start, duration = behavior.draw_day(draws[day, 0], draws[day, 1])
        begin = day * 24 + start
        profile[begin : min(begin + duration, HOURS_PER_YEAR)] = charger_kw
    return profile


def net_load(load: np.ndarray, pv: np.ndarray, ev: np.ndarray) -> np.ndarray:
    """Pointwise net consumption: load - pv + ev."""
    if not (load.shape == pv.shape == ev.shape):
        raise ValueError(
            f"profile length mismatch: {load.shape}, {pv.shape}, {ev.shape}"
        )
    return load - pv + ev


def profile_to_csv(profile: np.ndarray) -> str:
    """Columnar (hour, kW) serialization used in job artifacts."""
    buf = io.StringIO()
    buf.write("hour,kw\n")
    for hour, value in enumerate(profile):
        buf.write(f"{hour},{value:.6f}\n")
    return buf.getvalue()


def profile_from_csv(text: str) -> np.ndarray:
    profile = np.empty(HOURS_PER_YEAR)
    reader = csv.DictReader(io.StringIO(text))
    count = 0
    for row in reader:
        profile[int(row["hour"])] = float(row["kw"])
        count += 1
    if count != HOURS_PER_YEAR:
        raise ValueError(f"profile has {count} rows, expected {HOURS_PER_YEAR}")
    return profile
