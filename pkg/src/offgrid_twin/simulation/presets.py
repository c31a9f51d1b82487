"""Built-in scenarios for the three system generations and the 2021 outage.

Module voltages are representative values for generic 75/80/420 Wp
crystalline modules, not vendor data.  The ``2021-default`` derate and
initial states come from ``scripts/calibrate.py``.
"""

from __future__ import annotations

import copy
from typing import Any

from .scenario import Scenario, scenario_from_dict

REPRESENTATIVE = "representative, not vendor data"

MODULES = {
    "generic-75": {"power_peak": 75.0, "v_mp": 17.0, "v_oc": 21.7, "note": REPRESENTATIVE},
    "generic-80": {"power_peak": 80.0, "v_mp": 17.3, "v_oc": 21.6, "note": REPRESENTATIVE},
    "generic-420": {"power_peak": 420.0, "v_mp": 31.5, "v_oc": 38.0, "note": REPRESENTATIVE},
}

HYBRID_6K = {
    "rated_power": 6000.0,
    "dc_window": [90.0, 230.0, 250.0],
    "ac_voltage": 110.0,
    "transfer_time": 0.0,
    "max_charge_current": 60.0,
}

LEAD_BLOCK = {"nominal_voltage": 12.0, "capacity_ah": 100.0, "internal_resistance": 0.009, "cutoff_voltage": 10.0}
LFP_CELL_100 = {"nominal_voltage": 3.2, "capacity_ah": 100.0, "internal_resistance": 0.000625, "cutoff_voltage": 2.5}
LFP_CELL_80 = {"nominal_voltage": 3.2, "capacity_ah": 80.0, "internal_resistance": 0.00078125, "cutoff_voltage": 2.5}

# Calibrated against the three daytime anchors of the 2021 operating record:
# 46 A peak charge current near 09:15, full charge near 09:40.
CALIBRATED_DERATE = 0.8268
CALIBRATED_LFP_SOC0 = 79.8
CALIBRATED_LEAD_SOC0 = 90.85


def _pre_2021() -> dict[str, Any]:
    # The surviving 24 V system: both arrays on PWM chargers, 24 V/600 Ah
    # lead-acid bank, one 3 kW inverter.
    return {
        "schema_version": 1,
        "name": "pre-2021",
        "start_time": "2021-05-12T06:00:00",
        "duration_s": 86400.0,
        "dt_s": 60.0,
        "pv_derate": CALIBRATED_DERATE,
        "irradiance_scale": 1.0,
        "load_scale": 1.0,
        "irradiance": "default",
        "load": "default",
        "modules": {k: MODULES[k] for k in ("generic-75", "generic-80")},
        "inverters": {
            "legacy-24v-3k": {
                "rated_power": 3000.0,
                "dc_window": [24.0, 50.0, 60.0],
                "ac_voltage": 110.0,
                "transfer_time": 0.0,
                "max_charge_current": 120.0,
            }
        },
        "channels": [
            {
                "name": "ch1",
                "inverters": ["legacy-24v-3k"],
                "load_share": 1.0,
                "pv": [
                    {"name": "PV1", "module": "generic-75", "series": 2, "parallel": 14},
                    {"name": "PV2", "module": "generic-80", "series": 2, "parallel": 20},
                ],
            }
        ],
        "battery": {
            "v_cap": 28.8,
            "floor_soc": 10.0,
            "max_delta_v": 0.5,
            "packs": [
                {
                    "name": "lead_acid",
                    "chemistry": "lead_acid",
                    "series": 2,
                    "parallel": 6,
                    "block": dict(LEAD_BLOCK),
                    "efficiency": 0.85,
                    "max_charge_c": 0.1,
                    "capacity_factor": 1.0,
                    "resistance_factor": 1.0,
                    "initial_soc": 80.0,
                }
            ],
        },
        "generator": {"available": False, "rating": 5000.0},
        "faults": [],
    }


def _2021_default() -> dict[str, Any]:
    return {
        "schema_version": 1,
        "name": "2021-default",
        "start_time": "2021-08-18T06:00:00",
        "duration_s": 86400.0,
        "dt_s": 60.0,
        "pv_derate": CALIBRATED_DERATE,
        "irradiance_scale": 1.0,
        "load_scale": 1.0,
        "irradiance": "default",
        "load": "default",
        "modules": {k: MODULES[k] for k in ("generic-75", "generic-80")},
        "inverters": {"hybrid-48v-6k": dict(HYBRID_6K)},
        "channels": [
            {
                "name": "ch1",
                "inverters": ["hybrid-48v-6k"],
                "load_share": 0.5,
                "pv": [{"name": "PV1", "module": "generic-75", "series": 7, "parallel": 4}],
            },
            {
                "name": "ch2",
                "inverters": ["hybrid-48v-6k"],
                "load_share": 0.5,
                "pv": [{"name": "PV2", "module": "generic-80", "series": 8, "parallel": 5}],
            },
        ],
        "battery": {
            "v_cap": 54.0,
            "floor_soc": 10.0,
            "max_delta_v": 0.5,
            "packs": [
                {
                    # 12 blocks of 12 V/100 Ah rewired from 24 V/600 Ah to 48 V/300 Ah
                    "name": "lead_acid",
                    "chemistry": "lead_acid",
                    "series": 4,
                    "parallel": 3,
                    "block": dict(LEAD_BLOCK),
                    "efficiency": 0.85,
                    "max_charge_c": 0.1,
                    "capacity_factor": 1.0,
                    "resistance_factor": 1.0,
                    "connect_soc": 95.0,
                    "initial_soc": CALIBRATED_LEAD_SOC0,
                },
                {
                    # two 48 V/100 Ah LFP batteries in parallel: 16S2P
                    "name": "lfp",
                    "chemistry": "lfp",
                    "series": 16,
                    "parallel": 2,
                    "block": dict(LFP_CELL_100),
                    "efficiency": 0.95,
                    "max_charge_c": 0.5,
                    "capacity_factor": 1.0,
                    "resistance_factor": 1.0,
                    "connect_soc": 20.0,
                    "initial_soc": CALIBRATED_LFP_SOC0,
                },
            ],
        },
        "generator": {"available": False, "rating": 5000.0},
        "faults": [],
    }


def _2021_outage() -> dict[str, Any]:
    data = _2021_default()
    data["name"] = "2021-outage"
    data["faults"] = [
        {"at": "2021-08-18T00:00:00", "kind": "inverter_failure", "channel": 2},
        {"at": "2021-08-18T00:00:00", "kind": "pack_failure", "pack": "lead_acid"},
    ]
    return data


def _future_plan() -> dict[str, Any]:
    inverter = dict(HYBRID_6K)
    return {
        "schema_version": 1,
        "name": "future-plan",
        "start_time": "2021-08-18T00:00:00",
        "duration_s": 86400.0,
        "dt_s": 60.0,
        "pv_derate": CALIBRATED_DERATE,
        "irradiance_scale": 1.0,
        "load_scale": 3.0,
        "irradiance": "default",
        "load": "default",
        "modules": {"generic-420": MODULES["generic-420"]},
        "inverters": {
            "hybrid-48v-6k-220": dict(inverter, ac_voltage=220.0),
            "hybrid-48v-6k-110": dict(inverter, ac_voltage=110.0),
            "dc-48v-3k": dict(inverter, rated_power=3000.0, ac_voltage=48.0),
        },
        "channels": [
            {
                "name": "220VAC",
                "inverters": ["hybrid-48v-6k-220", "hybrid-48v-6k-220"],
                "load_share": 0.4,
                "pv": [
                    {"name": f"PV{i}", "module": "generic-420", "series": 4, "parallel": 2}
                    for i in (1, 2, 3)
                ],
            },
            {
                "name": "110VAC",
                "inverters": ["hybrid-48v-6k-110", "hybrid-48v-6k-110"],
                "load_share": 0.5,
                "pv": [
                    {"name": f"PV{i}", "module": "generic-420", "series": 4, "parallel": 2}
                    for i in (4, 5, 6)
                ],
            },
            {
                "name": "48VDC",
                "inverters": ["dc-48v-3k", "dc-48v-3k"],
                "load_share": 0.1,
                "pv": [],
            },
        ],
        "battery": {
            "v_cap": 54.0,
            "floor_soc": 10.0,
            "max_delta_v": 0.5,
            "packs": [
                {
                    "name": "lfp_2021",
                    "chemistry": "lfp",
                    "series": 16,
                    "parallel": 2,
                    "block": dict(LFP_CELL_100),
                    "efficiency": 0.95,
                    "max_charge_c": 0.5,
                    "initial_soc": 80.0,
                },
                {
                    # twenty 16S1P 80 Ah modules, sized for porters
                    "name": "lfp_new",
                    "chemistry": "lfp",
                    "series": 16,
                    "parallel": 20,
                    "block": dict(LFP_CELL_80),
                    "efficiency": 0.95,
                    "max_charge_c": 0.5,
                    "initial_soc": 80.0,
                },
            ],
        },
        "generator": {"available": True, "rating": 5000.0},
        "faults": [],
    }


_BUILDERS = {
    "pre-2021": _pre_2021,
    "2021-default": _2021_default,
    "2021-outage": _2021_outage,
    "future-plan": _future_plan,
}

PRESET_NAMES = tuple(_BUILDERS)


def preset_dict(name: str) -> dict[str, Any]:
    """A fresh, editable copy of a preset's scenario-file mapping."""
    try:
        return copy.deepcopy(_BUILDERS[name]())
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}") from None


def load_preset(name: str, **overrides: Any) -> Scenario:
    data = preset_dict(name)
    data.update(overrides)
    return scenario_from_dict(data)
