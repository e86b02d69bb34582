#!/usr/bin/env python3
"""Author the bundled synthetic fixtures: feeder123.json, its manifest, and
weather_synthetic.csv.

The feeder is a synthetic ~123-bus radial network (trunk plus laterals) with
~85 service transformers carrying lumped loads and location-based adoption
probability hints. The manifest freezes counts, depth, and load totals at
authoring time; tests treat those values as the oracle for the shipped file.

Run from the repo root:  python tools/build_fixtures.py
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import numpy as np

REPO = Path(__file__).resolve().parent.parent
DATA = REPO / "src" / "gridrisk" / "data"

SEED = 20240123
N_BUSES = 123            # including the source
N_TRANSFORMERS = 85
TRUNK_LEN = 14
BASE_VOLTAGE_V = 2401.78  # 4.16 kV line-to-line
HOURS = 8760

RATING_CHOICES = [15.0, 25.0, 37.5, 50.0, 75.0]
RATING_WEIGHTS = [0.25, 0.40, 0.20, 0.10, 0.05]


def build_feeder(rng: np.random.Generator) -> dict:
    buses = [{"id": "sourcebus", "base_voltage_v": BASE_VOLTAGE_V, "x": 0.0, "y": 0.0}]
    lines = []
    positions = {"sourcebus": (0.0, 0.0)}
    directions = {"sourcebus": 0.0}
    depth = {"sourcebus": 0}

    def add_bus(parent: str, name: str, trunk: bool) -> None:
        px, py = positions[parent]
        if trunk:
            angle = directions[parent] + rng.uniform(-0.25, 0.25)
            step = rng.uniform(0.9, 1.2)
        else:
            angle = directions[parent] + rng.uniform(-1.0, 1.0)
            step = rng.uniform(0.5, 0.9)
        x, y = px + step * math.cos(angle), py + step * math.sin(angle)
        positions[name] = (x, y)
        directions[name] = angle
        depth[name] = depth[parent] + 1
        buses.append(
            {"id": name, "base_voltage_v": BASE_VOLTAGE_V, "x": round(x, 3), "y": round(y, 3)}
        )
        if trunk:
            r = rng.uniform(0.0008, 0.0015)
            x_pu = 2.0 * r
        else:
            r = rng.uniform(0.001, 0.004)
            x_pu = 1.5 * r
        lines.append(
            {"from": parent, "to": name, "r_pu": round(r, 6), "x_pu": round(x_pu, 6)}
        )

    # Trunk: a chain leaving the substation.
    trunk = ["sourcebus"]
    for k in range(1, TRUNK_LEN + 1):
        name = f"b{k:03d}"
        add_bus(trunk[-1], name, trunk=True)
        trunk.append(name)

    # Laterals: grow from recent buses to get elongated branches.
    all_buses = list(trunk)
    next_idx = TRUNK_LEN + 1
    while len(buses) < N_BUSES:
        if rng.random() < 0.6 and len(all_buses) > 10:
            parent = all_buses[int(rng.integers(len(all_buses) - 10, len(all_buses)))]
        else:
            parent = all_buses[int(rng.integers(1, len(all_buses)))]
        name = f"b{next_idx:03d}"
        next_idx += 1
        add_bus(parent, name, trunk=False)
        all_buses.append(name)

    # Service transformers on distinct non-source buses, probability hints
    # rising with distance from the substation plus local noise.
    candidate_buses = [b["id"] for b in buses[1:]]
    chosen = rng.choice(len(candidate_buses), size=N_TRANSFORMERS, replace=False)
    x_max = max(abs(positions[b][0]) for b in candidate_buses) or 1.0
    transformers = []
    for t_idx, bus_idx in enumerate(sorted(chosen.tolist()), start=1):
        bus = candidate_buses[bus_idx]
        rating = float(rng.choice(RATING_CHOICES, p=RATING_WEIGHTS))
        lumped = rating * rng.uniform(0.5, 0.8)
        frac = min(1.0, abs(positions[bus][0]) / x_max)
        p_pv = 0.015 + 0.075 * frac + rng.uniform(0.0, 0.02)
        p_ev = 0.02 + 0.09 * frac + rng.uniform(0.0, 0.025)
        transformers.append(
            {
                "id": f"t{t_idx:02d}",
                "bus": bus,
                "rating_kva": rating,
                "lumped_load_kw": round(lumped, 3),
                "p_pv": round(p_pv, 4),
                "p_ev": round(p_ev, 4),
            }
        )

    # A few transformers ship pre-disaggregated, one with pre-existing PV.
    customers = []
    for xfmr in transformers[:3]:
        n = max(1, round(xfmr["rating_kva"] * 0.2))
        share = xfmr["lumped_load_kw"] / n
        for k in range(1, n + 1):
            rec = {
                "id": f"{xfmr['id']}_c{k}",
                "transformer": xfmr["id"],
                "base_load_kw": round(share, 3),
                "p_pv": xfmr["p_pv"],
                "p_ev": xfmr["p_ev"],
            }
            customers.append(rec)
        del xfmr["lumped_load_kw"], xfmr["p_pv"], xfmr["p_ev"]
    customers[0]["pv_kw"] = 5.0

    doc = {
        "source_bus": "sourcebus",
        "buses": buses,
        "lines": lines,
        "transformers": transformers,
        "customers": customers,
    }
    manifest = {
        "file": "feeder123.json",
        "seed": SEED,
        "bus_count": len(buses),
        "line_count": len(lines),
        "transformer_count": len(transformers),
        "customer_count": len(customers),
        "max_depth": max(depth.values()),
        "total_base_load_kw": round(
            sum(t.get("lumped_load_kw", 0.0) for t in transformers)
            + sum(c["base_load_kw"] for c in customers),
            6,
        ),
        "houses_per_kva_reference": 0.2,
        "customers_after_disaggregation_reference": sum(
            max(1, round(t["rating_kva"] * 0.2)) for t in transformers[3:]
        )
        + len(customers),
    }
    return {"doc": doc, "manifest": manifest}


def build_weather(rng: np.random.Generator) -> list[str]:
    """Clear-sky sinusoid with per-day stochastic cloud attenuation."""
    rows = ["hour,irradiance,temp_c"]
    for d in range(365):
        season = math.sin(2.0 * math.pi * (d - 81) / 365.0)
        daylight = 12.0 + 3.5 * season
        sunrise = 12.0 - daylight / 2.0
        amplitude = 0.75 + 0.25 * season
        u = rng.random()
        if u < 0.5:
            clearness = rng.uniform(0.85, 1.0)
        elif u < 0.8:
            clearness = rng.uniform(0.5, 0.85)
        else:
            clearness = rng.uniform(0.15, 0.5)
        t_day = 12.0 - 10.0 * math.cos(2.0 * math.pi * (d - 15) / 365.0)
        for h in range(24):
            elev = (h + 0.5 - sunrise) / daylight
            clear = math.sin(math.pi * elev) if 0.0 < elev < 1.0 else 0.0
            irr = clear * amplitude * clearness * rng.uniform(0.88, 1.0)
            irr = min(1.0, max(0.0, irr))
            temp = t_day + 5.0 * math.sin(2.0 * math.pi * (h - 9) / 24.0) + rng.normal(0.0, 0.6)
            rows.append(f"{d * 24 + h},{irr:.4f},{temp:.2f}")
    assert len(rows) == HOURS + 1
    return rows


def main() -> int:
    DATA.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED)
    built = build_feeder(rng)
    (DATA / "feeder123.json").write_text(
        json.dumps(built["doc"], indent=1) + "\n", encoding="utf-8"
    )
    (DATA / "feeder123_manifest.json").write_text(
        json.dumps(built["manifest"], indent=2) + "\n", encoding="utf-8"
    )
    weather_rng = np.random.default_rng(SEED + 1)
    (DATA / "weather_synthetic.csv").write_text(
        "\n".join(build_weather(weather_rng)) + "\n", encoding="utf-8"
    )

    # Cross-check through the package loader (counts come from construction).
    sys.path.insert(0, str(REPO / "src"))
    from gridrisk.feeder import disaggregate_loads, load_feeder, validate_radial

    model = load_feeder(DATA / "feeder123.json")
    report = validate_radial(model)
    manifest = built["manifest"]
    assert len(model.buses) == manifest["bus_count"]
    assert len(model.lines) == manifest["line_count"]
    assert report.max_depth == manifest["max_depth"]
    disaggregated = disaggregate_loads(model)
    assert len(disaggregated.customers) == manifest["customers_after_disaggregation_reference"]
    rel = abs(disaggregated.total_base_load_kw() - manifest["total_base_load_kw"]) / manifest[
        "total_base_load_kw"
    ]
    assert rel < 1e-9, rel
    print(f"feeder123.json: {manifest}")
    print(f"weather_synthetic.csv: {HOURS} rows")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
