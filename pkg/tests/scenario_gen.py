"""Seeded random scenario files for property and conservation tests."""

from __future__ import annotations

import math
import random
from datetime import datetime, timedelta
from typing import Any

from offgrid_twin.pv import PvModuleSpec, VoltageWindow, array_power, enumerate_string_configs
from offgrid_twin.simulation.presets import HYBRID_6K, LEAD_BLOCK, LFP_CELL_100

WINDOW = VoltageWindow(*HYBRID_6K["dc_window"])


def _module(rng: random.Random) -> dict[str, float]:
    v_mp = rng.uniform(15.0, 40.0)
    return {"power_peak": rng.uniform(50.0, 450.0), "v_mp": v_mp, "v_oc": v_mp * rng.uniform(1.1, 1.3)}


def _arrays(rng: random.Random, module: dict, prefix: str) -> list[dict[str, Any]]:
    spec = PvModuleSpec("m", module["power_peak"], module["v_mp"], module["v_oc"])
    arrays = []
    for i in range(rng.randint(0, 3)):
        configs = enumerate_string_configs(spec, rng.randint(4, 60), WINDOW)
        if configs:
            c = rng.choice(configs)
            arrays.append({"name": f"{prefix}-{i}", "module": "m", "series": c.series, "parallel": c.parallel})
    return arrays


def _pack(rng: random.Random, name: str) -> dict[str, Any]:
    soc = rng.uniform(0.0, 100.0)
    if rng.random() < 0.5:
        return {
            "name": name, "chemistry": "lfp", "series": 16, "parallel": rng.randint(1, 8),
            "block": dict(LFP_CELL_100), "capacity_factor": rng.uniform(0.6, 1.0),
            "resistance_factor": rng.uniform(1.0, 3.0), "initial_soc": soc,
        }
    return {
        "name": name, "chemistry": "lead_acid", "series": 4, "parallel": rng.randint(1, 6),
        "block": dict(LEAD_BLOCK), "capacity_factor": rng.uniform(0.6, 1.0), "initial_soc": soc,
    }


def random_scenario_dict(seed: int) -> dict[str, Any]:
    rng = random.Random(seed)
    module = _module(rng)
    n_channels = rng.randint(1, 3)
    shares = [rng.random() + 0.05 for _ in range(n_channels)]
    shares = [s / math.fsum(shares) for s in shares]
    channels = [
        {
            "name": f"ch{k + 1}",
            "inverters": ["inv"] * rng.randint(1, 3),
            "load_share": shares[k],
            "pv": _arrays(rng, module, f"ch{k + 1}"),
        }
        for k in range(n_channels)
    ]
    packs = [_pack(rng, f"p{i}") for i in range(rng.randint(1, 3))]
    start = datetime(2021, 1, 1) + timedelta(days=rng.randint(0, 364), hours=rng.randint(0, 23))
    faults = []
    for _ in range(rng.randint(0, 2)):
        at = (start + timedelta(seconds=rng.randint(0, 86400))).isoformat()
        kind = rng.choice(["inverter_failure", "charger_failure", "pack_failure"])
        if kind == "pack_failure":
            faults.append({"at": at, "kind": kind, "pack": rng.choice(packs)["name"]})
        else:
            faults.append({"at": at, "kind": kind, "channel": rng.randint(1, n_channels)})
    return {
        "schema_version": 1,
        "name": f"random-{seed}",
        "start_time": start.isoformat(),
        "duration_s": 86400.0,
        "dt_s": float(rng.choice([60, 120, 300, 600])),
        "pv_derate": rng.uniform(0.6, 1.0),
        "irradiance_scale": rng.uniform(0.0, 1.5),
        "load_scale": rng.uniform(0.2, 12.0),
        "irradiance": "default",
        "load": "default",
        "modules": {"m": module},
        "inverters": {"inv": dict(HYBRID_6K, max_charge_current=rng.uniform(10.0, 120.0))},
        "channels": channels,
        "battery": {
            "v_cap": rng.choice([None, 54.0, 56.0]),
            "floor_soc": rng.uniform(0.0, 30.0),
            "max_delta_v": 100.0,  # connection guard is not under test here
            "packs": packs,
        },
        "generator": {"available": rng.random() < 0.5, "rating": rng.uniform(500.0, 6000.0)},
        "faults": faults,
    }


def channel_inputs(scenario, t) -> list[tuple[float, float]]:
    """Independently recomputed (pv available, load) per channel at step time ``t``."""
    irr = scenario.irradiance(t)
    load_total = scenario.load(t) * scenario.load_scale
    out = []
    for ch in scenario.channels:
        pv = math.fsum(array_power(a.config, irr, scenario.pv_derate) for a in ch.pv) * scenario.irradiance_scale
        out.append((pv, load_total * ch.load_share))
    return out
