"""Hybrid solar inverter: source priority, charge management, overload guard."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

from .battery import BusLimits
from .errors import TwinError
from .pv import VoltageWindow

MAX_PARALLEL_UNITS = 9


class OverloadError(TwinError):
    pass


class GroupSizeExceeded(TwinError):
    pass


@dataclass(frozen=True, slots=True)
class InverterSpec:
    rated_power: float  # W AC
    dc_window: VoltageWindow  # PV input window of the MPPT charger
    ac_voltage: float = 110.0
    transfer_time: float = 0.0  # s
    max_charge_current: float = 60.0  # A DC from the solar charger
    name: str = "inverter"

    def __post_init__(self) -> None:
        if not self.rated_power > 0:
            raise ValueError("rated_power must be positive")


@dataclass(frozen=True, slots=True)
class DispatchResult:
    pv_to_load: float = 0.0
    pv_to_batt: float = 0.0
    batt_to_load: float = 0.0
    gen_to_load: float = 0.0
    curtailed: float = 0.0
    unserved: float = 0.0

    @property
    def pv_available(self) -> float:
        return self.pv_to_load + self.pv_to_batt + self.curtailed

    @property
    def pv_used(self) -> float:
        return self.pv_to_load + self.pv_to_batt

    @property
    def served(self) -> float:
        return self.pv_to_load + self.batt_to_load + self.gen_to_load

    @property
    def load(self) -> float:
        return self.served + self.unserved


def group_rating(units: Sequence[InverterSpec]) -> float:
    """Continuous AC rating of inverters running in parallel."""
    if not units:
        raise ValueError("need at least one inverter")
    if len(units) > MAX_PARALLEL_UNITS:
        raise GroupSizeExceeded(f"{len(units)} units; parallel operation supports up to {MAX_PARALLEL_UNITS}")
    return sum(u.rated_power for u in units)


def dispatch(
    pv_available: float,
    load: float,
    battery: BusLimits,
    generator_available: bool,
    spec: InverterSpec,
    generator_rating: float = 5000.0,
    rated_power: float | None = None,
) -> DispatchResult:
    """Route one step of power for a single AC channel.

    Priority is solar, then battery (down to its floor), then generator.
    Surplus solar charges the battery within the bus limit and the charger
    current cap; whatever is left is curtailed.  ``rated_power`` overrides the
    unit rating for a parallel group.
    """
    if pv_available < 0 or load < 0:
        raise ValueError("pv_available and load must be >= 0")
    rating = spec.rated_power if rated_power is None else rated_power
    if load > rating:
        raise OverloadError(f"load {load:.0f} W exceeds rating {rating:.0f} W")

    if pv_available >= load:
        pv_to_load = load
        surplus = pv_available - load
        charger_cap = spec.max_charge_current * battery.voltage
        pv_to_batt = min(surplus, max(battery.charge, 0.0), charger_cap)
        return DispatchResult(pv_to_load=pv_to_load, pv_to_batt=pv_to_batt, curtailed=surplus - pv_to_batt)

    deficit = load - pv_available
    batt = min(deficit, max(battery.discharge, 0.0))
    rest = deficit - batt
    gen = min(rest, generator_rating) if generator_available else 0.0
    return DispatchResult(
        pv_to_load=pv_available,
        batt_to_load=batt,
        gen_to_load=gen,
        unserved=rest - gen,
    )
