"""Scenario definition and its YAML file format.

File layout (``schema_version: 1``)::

    schema_version: 1
    name: 2021-default
    start_time: 2021-08-18T06:00:00
    duration_s: 86400
    dt_s: 60
    pv_derate: 0.79          # calibrated system derate
    irradiance_scale: 1.0    # clear-sky multiplier, 1.0 = profile as defined
    load_scale: 1.0
    irradiance: default      # or [[hour, fraction], ...]
    load: default            # or [[hour, watts], ...]
    modules:   {NAME: {power_peak, v_mp, v_oc, note}}
    inverters: {NAME: {rated_power, dc_window: [op_min, op_max, oc_max],
                       ac_voltage, transfer_time, max_charge_current}}
    channels:
      - {name, inverters: [NAME, ...], load_share,
         pv: [{name, module: NAME, series, parallel}, ...]}
    battery:
      v_cap, floor_soc, max_delta_v
      packs: [{name, chemistry, series, parallel,
               block: {nominal_voltage, capacity_ah, internal_resistance, cutoff_voltage},
               efficiency, max_charge_c, capacity_factor, resistance_factor,
               connect_soc, initial_soc}, ...]
    generator: {available, rating}
    faults: [{at, kind: inverter_failure|charger_failure, channel: N}
             | {at, kind: pack_failure, pack: NAME}]

``connect_soc`` is the state each pack was in when the bus was assembled
(the inrush guard is checked there); ``initial_soc`` is the state at
``start_time``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Any

import yaml

from ..battery import (
    BatteryPack,
    CellBlockSpec,
    Chemistry,
    HybridBus,
    parallel_connect,
    rest_state,
)
from ..errors import TwinError
from ..inverter import InverterSpec, group_rating
from ..pv import PvArrayConfig, PvModuleSpec, VoltageWindow, validate_config
from .profiles import BUILTIN, Profile

SCHEMA_VERSION = 1


class ScenarioInvalid(TwinError):
    pass


class FaultKind(str, enum.Enum):
    INVERTER_FAILURE = "inverter_failure"
    PACK_FAILURE = "pack_failure"
    CHARGER_FAILURE = "charger_failure"


@dataclass(frozen=True, slots=True)
class Fault:
    at: datetime
    kind: FaultKind
    target: int | str  # 1-based channel number, or pack name


@dataclass(frozen=True, slots=True)
class NamedArray:
    name: str
    config: PvArrayConfig


@dataclass(frozen=True, slots=True)
class Channel:
    name: str
    pv: tuple[NamedArray, ...]
    inverters: tuple[InverterSpec, ...]
    load_share: float = 1.0

    @property
    def rated_power(self) -> float:
        return group_rating(self.inverters)

    @property
    def effective_inverter(self) -> InverterSpec:
        """The parallel group seen as one unit: summed rating and charger current."""
        first = self.inverters[0]
        return replace(
            first,
            rated_power=self.rated_power,
            max_charge_current=sum(u.max_charge_current for u in self.inverters),
        )

    @property
    def pv_peak(self) -> float:
        return sum(a.config.power_peak for a in self.pv)


@dataclass(frozen=True, slots=True)
class GeneratorSpec:
    available: bool = False
    rating: float = 5000.0


@dataclass(frozen=True)
class Scenario:
    name: str
    start_time: datetime
    duration: float  # s
    dt: float  # s
    channels: tuple[Channel, ...]
    bus: HybridBus
    generator: GeneratorSpec = field(default_factory=GeneratorSpec)
    pv_derate: float = 1.0
    irradiance_scale: float = 1.0
    load_scale: float = 1.0
    irradiance: Profile = BUILTIN["irradiance"]["default"]
    load: Profile = BUILTIN["load"]["default"]
    faults: tuple[Fault, ...] = ()
    source: dict[str, Any] | None = field(default=None, compare=False, repr=False)

    @property
    def steps(self) -> int:
        return round(self.duration / self.dt)

    def validate(self) -> None:
        if not self.dt > 0:
            raise ScenarioInvalid("dt must be positive")
        if not self.duration > 0 or abs(self.steps * self.dt - self.duration) > 1e-9 * self.duration:
            raise ScenarioInvalid(f"duration {self.duration} s is not a multiple of dt {self.dt} s")
        if not self.channels:
            raise ScenarioInvalid("scenario needs at least one channel")
        if not 0 < self.pv_derate <= 1:
            raise ScenarioInvalid("pv_derate must be in (0, 1]")
        if self.irradiance_scale < 0 or self.load_scale < 0:
            raise ScenarioInvalid("scales must be >= 0")
        for ch in self.channels:
            try:
                ch.rated_power
            except TwinError as exc:
                raise ScenarioInvalid(f"channel {ch.name}: {exc}") from exc
            window = ch.inverters[0].dc_window
            for arr in ch.pv:
                result = validate_config(arr.config, window)
                if not result.ok:
                    issues = ", ".join(str(v) for v in result.violations)
                    raise ScenarioInvalid(f"channel {ch.name} array {arr.name}: {issues}")
        pack_names = {p.name for p, _ in self.bus.packs}
        for fault in self.faults:
            if fault.kind is FaultKind.PACK_FAILURE:
                if fault.target not in pack_names:
                    raise ScenarioInvalid(f"fault refers to unknown pack {fault.target!r}")
            elif not (isinstance(fault.target, int) and 1 <= fault.target <= len(self.channels)):
                raise ScenarioInvalid(f"fault refers to unknown channel {fault.target!r}")


# ---------------------------------------------------------------------------
# dict <-> Scenario
# ---------------------------------------------------------------------------


def _parse_time(value: Any) -> datetime:
    if isinstance(value, datetime):
        return value
    return datetime.fromisoformat(str(value))


def _profile(kind: str, value: Any) -> Profile:
    if isinstance(value, str):
        try:
            return BUILTIN[kind][value]
        except KeyError:
            raise ScenarioInvalid(f"unknown {kind} profile {value!r}") from None
    try:
        return Profile(f"custom-{kind}", tuple((float(h), float(v)) for h, v in value))
    except (TypeError, ValueError) as exc:
        raise ScenarioInvalid(f"bad {kind} profile: {exc}") from exc


def build_bus(battery: dict[str, Any]) -> HybridBus:
    """Assemble packs at their connection state, then move to the initial state."""
    packs = []
    for entry in battery["packs"]:
        block = entry["block"]
        spec = CellBlockSpec(
            Chemistry(entry["chemistry"]),
            float(block["nominal_voltage"]),
            float(block["capacity_ah"]),
            float(block["internal_resistance"]),
            float(block["cutoff_voltage"]),
        )
        pack = BatteryPack(
            spec,
            int(entry["series"]),
            int(entry["parallel"]),
            name=str(entry["name"]),
            efficiency=entry.get("efficiency"),
            max_charge_c=entry.get("max_charge_c"),
            capacity_factor=float(entry.get("capacity_factor", 1.0)),
            resistance_factor=float(entry.get("resistance_factor", 1.0)),
        )
        connect_soc = float(entry.get("connect_soc", entry["initial_soc"]))
        packs.append((pack, connect_soc, float(entry["initial_soc"])))
    if not packs:
        raise ScenarioInvalid("battery needs at least one pack")

    v_cap = battery.get("v_cap")
    floor = float(battery.get("floor_soc", 10.0))
    max_dv = float(battery.get("max_delta_v", 0.5))
    first, first_soc, _ = packs[0]
    if len(packs) == 1:
        bus = HybridBus.single(first, rest_state(first, first_soc), v_cap=v_cap, floor_soc=floor)
    else:
        members = [(first, rest_state(first, first_soc))]
        caps = []
        for pack, soc, _ in packs[1:]:
            pair = parallel_connect(members[0], (pack, rest_state(pack, soc)), max_delta_v=max_dv)
            members.append(pair.packs[-1])
            caps.append(pair.v_cap)
        cap = min(caps) if v_cap is None else float(v_cap)
        bus = HybridBus(tuple(members), float(first.voltage_class), cap, floor)
    return replace(
        bus, packs=tuple((pack, rest_state(pack, init)) for pack, _, init in packs)
    )


def scenario_from_dict(data: dict[str, Any]) -> Scenario:
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ScenarioInvalid(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    try:
        modules = {
            name: PvModuleSpec(name, float(m["power_peak"]), float(m["v_mp"]), float(m["v_oc"]))
            for name, m in data["modules"].items()
        }
        inverters = {}
        for name, inv in data["inverters"].items():
            op_min, op_max, oc_max = (float(v) for v in inv["dc_window"])
            inverters[name] = InverterSpec(
                rated_power=float(inv["rated_power"]),
                dc_window=VoltageWindow(op_min, op_max, oc_max),
                ac_voltage=float(inv.get("ac_voltage", 110.0)),
                transfer_time=float(inv.get("transfer_time", 0.0)),
                max_charge_current=float(inv.get("max_charge_current", 60.0)),
                name=name,
            )
        channels = []
        for ch in data["channels"]:
            arrays = tuple(
                NamedArray(
                    str(a["name"]),
                    PvArrayConfig(int(a["series"]), int(a["parallel"]), modules[a["module"]]),
                )
                for a in ch.get("pv", [])
            )
            channels.append(
                Channel(
                    str(ch["name"]),
                    arrays,
                    tuple(inverters[n] for n in ch["inverters"]),
                    float(ch.get("load_share", 1.0)),
                )
            )
        faults = []
        for f in data.get("faults", []) or []:
            kind = FaultKind(f["kind"])
            target = f["pack"] if kind is FaultKind.PACK_FAILURE else int(f["channel"])
            faults.append(Fault(_parse_time(f["at"]), kind, target))
        gen = data.get("generator", {}) or {}
        scenario = Scenario(
            name=str(data.get("name", "scenario")),
            start_time=_parse_time(data["start_time"]),
            duration=float(data["duration_s"]),
            dt=float(data.get("dt_s", 60.0)),
            channels=tuple(channels),
            bus=build_bus(data["battery"]),
            generator=GeneratorSpec(bool(gen.get("available", False)), float(gen.get("rating", 5000.0))),
            pv_derate=float(data.get("pv_derate", 1.0)),
            irradiance_scale=float(data.get("irradiance_scale", 1.0)),
            load_scale=float(data.get("load_scale", 1.0)),
            irradiance=_profile("irradiance", data.get("irradiance", "default")),
            load=_profile("load", data.get("load", "default")),
            faults=tuple(faults),
            source=data,
        )
    except ScenarioInvalid:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioInvalid(f"malformed scenario: {type(exc).__name__}: {exc}") from exc
    except TwinError as exc:
        raise ScenarioInvalid(f"{type(exc).__name__}: {exc}") from exc
    scenario.validate()
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ScenarioInvalid(f"{path}: not a scenario mapping")
    return scenario_from_dict(data)


def dump_scenario_dict(data: dict[str, Any], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(data, fh, sort_keys=False, default_flow_style=None)
