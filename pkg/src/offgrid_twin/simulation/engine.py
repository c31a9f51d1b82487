"""Deterministic fixed-step engine and trace CSV I/O."""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

from ..battery import BusLimits, HybridBus
from ..inverter import DispatchResult, OverloadError, dispatch
from ..pv import array_power
from .scenario import FaultKind, Scenario

CSV_HEADER = (
    "time,bus_voltage_V,bus_current_A,bus_power_W,soc_pct,ch,"
    "pv_to_load_W,pv_to_batt_W,batt_to_load_W,gen_to_load_W,curtailed_W,unserved_W"
)


@dataclass(frozen=True, slots=True)
class TracePoint:
    """State over the step ``[time, time + dt)``; SoC is the value at the step's end."""

    time: datetime
    bus_voltage: float
    bus_current: float
    bus_power: float
    soc: float
    channels: tuple[DispatchResult, ...]
    pack_soc: tuple[float, ...] = ()
    pack_voltage: tuple[float, ...] = ()
    pack_current: tuple[float, ...] = ()
    pack_power: tuple[float, ...] = ()

    @property
    def load(self) -> float:
        return math.fsum(c.load for c in self.channels)

    @property
    def served(self) -> float:
        return math.fsum(c.served for c in self.channels)


def _active_faults(scenario: Scenario, t: datetime) -> tuple[set[int], set[int], set[str]]:
    inverters, chargers, packs = set(), set(), set()
    for fault in scenario.faults:
        if fault.at > t:
            continue
        if fault.kind is FaultKind.INVERTER_FAILURE:
            inverters.add(fault.target)
        elif fault.kind is FaultKind.CHARGER_FAILURE:
            chargers.add(fault.target)
        else:
            packs.add(fault.target)
    return inverters, chargers, packs


def _dispatch_channels(
    scenario: Scenario,
    t: datetime,
    limits: BusLimits,
    failed_inverters: set[int],
    failed_chargers: set[int],
) -> tuple[DispatchResult, ...]:
    irradiance = scenario.irradiance(t)
    load_total = scenario.load(t) * scenario.load_scale
    charge_left, discharge_left = limits.charge, limits.discharge
    gen_left = scenario.generator.rating if scenario.generator.available else 0.0
    results = []
    for number, ch in enumerate(scenario.channels, start=1):
        pv = math.fsum(array_power(a.config, irradiance, scenario.pv_derate) for a in ch.pv)
        pv *= scenario.irradiance_scale
        load = load_total * ch.load_share
        if number in failed_inverters:
            results.append(DispatchResult(curtailed=pv, unserved=load))
            continue
        usable_pv = 0.0 if number in failed_chargers else pv
        view = BusLimits(max(charge_left, 0.0), max(discharge_left, 0.0), limits.voltage)
        try:
            res = dispatch(
                usable_pv,
                load,
                view,
                gen_left > 0,
                ch.effective_inverter,
                generator_rating=gen_left,
                rated_power=ch.rated_power,
            )
        except OverloadError:
            # overload protection trips the unit for the step
            res = DispatchResult(curtailed=usable_pv, unserved=load)
        if usable_pv != pv:
            res = DispatchResult(
                res.pv_to_load, res.pv_to_batt, res.batt_to_load, res.gen_to_load,
                res.curtailed + pv, res.unserved,
            )
        charge_left -= res.pv_to_batt
        discharge_left -= res.batt_to_load
        gen_left -= res.gen_to_load
        results.append(res)
    return tuple(results)


def run_scenario(scenario: Scenario) -> list[TracePoint]:
    """Simulate the scenario step by step.

    Channels are dispatched in order against one shared view of the bus
    limits; the net battery power of all channels is then applied to the bus
    once.  If the bus refuses the charge (voltage ceiling) the step is
    re-dispatched with charging disabled.
    """
    scenario.validate()
    bus: HybridBus = scenario.bus
    dt = scenario.dt
    trace = []
    for k in range(scenario.steps):
        t = scenario.start_time + timedelta(seconds=k * dt)
        failed_inv, failed_chg, failed_packs = _active_faults(scenario, t)
        for name in failed_packs - bus.disabled:
            bus = bus.with_disabled(name)
        limits = bus.limits(dt)
        results = _dispatch_channels(scenario, t, limits, failed_inv, failed_chg)
        net = math.fsum(r.pv_to_batt for r in results) - math.fsum(r.batt_to_load for r in results)
        stepped = bus.apply(net, dt)
        if net > 0 and stepped.power == 0.0:
            limits = BusLimits(0.0, limits.discharge, limits.voltage)
            results = _dispatch_channels(scenario, t, limits, failed_inv, failed_chg)
            net = math.fsum(r.pv_to_batt for r in results) - math.fsum(r.batt_to_load for r in results)
            stepped = bus.apply(net, dt)
        bus = stepped
        trace.append(
            TracePoint(
                time=t,
                bus_voltage=bus.voltage,
                bus_current=bus.current,
                bus_power=bus.power,
                soc=bus.soc,
                channels=results,
                pack_soc=tuple(s.soc for _, s in bus.packs),
                pack_voltage=tuple(s.terminal_voltage for _, s in bus.packs),
                pack_current=tuple(s.current for _, s in bus.packs),
                pack_power=tuple(s.power for _, s in bus.packs),
            )
        )
    return trace


def served_energy_wh(trace: Sequence[TracePoint], dt: float) -> float:
    """Served-load integral of a trace, in Wh."""
    return math.fsum(p.served for p in trace) * dt / 3600.0


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _rows(trace: Iterable[TracePoint]) -> Iterable[list[str]]:
    for p in trace:
        head = [
            p.time.isoformat(),
            f"{p.bus_voltage:.1f}",
            f"{p.bus_current:.1f}",
            f"{p.bus_power:.1f}",
            f"{p.soc:.2f}",
        ]
        for number, c in enumerate(p.channels, start=1):
            yield head + [
                str(number),
                f"{c.pv_to_load:.1f}",
                f"{c.pv_to_batt:.1f}",
                f"{c.batt_to_load:.1f}",
                f"{c.gen_to_load:.1f}",
                f"{c.curtailed:.1f}",
                f"{c.unserved:.1f}",
            ]


def trace_to_csv(trace: Iterable[TracePoint]) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(_rows(trace))
    return buf.getvalue()


def write_trace_csv(trace: Iterable[TracePoint], path: str | Path) -> None:
    Path(path).write_text(trace_to_csv(trace), encoding="utf-8")


def read_trace_csv(path: str | Path) -> list[TracePoint]:
    """Rebuild trace points from a CSV (values at the CSV's printed precision)."""
    points: dict[str, TracePoint] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or ",".join(reader.fieldnames) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected trace header")
        for row in reader:
            result = DispatchResult(
                float(row["pv_to_load_W"]),
                float(row["pv_to_batt_W"]),
                float(row["batt_to_load_W"]),
                float(row["gen_to_load_W"]),
                float(row["curtailed_W"]),
                float(row["unserved_W"]),
            )
            key = row["time"]
            prev = points.get(key)
            if prev is None:
                points[key] = TracePoint(
                    datetime.fromisoformat(key),
                    float(row["bus_voltage_V"]),
                    float(row["bus_current_A"]),
                    float(row["bus_power_W"]),
                    float(row["soc_pct"]),
                    (result,),
                )
            else:
                points[key] = TracePoint(
                    prev.time, prev.bus_voltage, prev.bus_current, prev.bus_power, prev.soc,
                    prev.channels + (result,),
                )
    return list(points.values())
