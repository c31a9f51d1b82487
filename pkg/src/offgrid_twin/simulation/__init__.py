"""Time-stepped simulation of the PV / inverter / hybrid-battery system."""

from .engine import (
    CSV_HEADER,
    TracePoint,
    read_trace_csv,
    run_scenario,
    served_energy_wh,
    trace_to_csv,
    write_trace_csv,
)
from .presets import PRESET_NAMES, load_preset, preset_dict
from .profiles import DEFAULT_IRRADIANCE, DEFAULT_LOAD, Profile, irradiance_profile, load_profile
from .scenario import (
    Channel,
    Fault,
    FaultKind,
    GeneratorSpec,
    Scenario,
    ScenarioInvalid,
    load_scenario,
    scenario_from_dict,
)

__all__ = [
    "CSV_HEADER",
    "Channel",
    "DEFAULT_IRRADIANCE",
    "DEFAULT_LOAD",
    "Fault",
    "FaultKind",
    "GeneratorSpec",
    "PRESET_NAMES",
    "Profile",
    "Scenario",
    "ScenarioInvalid",
    "TracePoint",
    "irradiance_profile",
    "load_preset",
    "load_profile",
    "load_scenario",
    "preset_dict",
    "read_trace_csv",
    "run_scenario",
    "scenario_from_dict",
    "served_energy_wh",
    "trace_to_csv",
    "write_trace_csv",
]
