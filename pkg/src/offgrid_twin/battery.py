"""Lead-acid and LFP packs, pack reassembly, and the hybrid parallel DC bus.

Sign convention throughout: positive current/power charges the pack.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

from .curves import interp
from .errors import TwinError


class Chemistry(str, enum.Enum):
    LEAD_ACID = "lead_acid"
    LFP = "lfp"


class CellHealth(str, enum.Enum):
    HEALTHY = "healthy"
    FAILED = "failed"


class NonDivisibleTopology(TwinError):
    pass


class UnreachableVoltage(TwinError):
    pass


class VoltageClassMismatch(TwinError):
    pass


class InrushRisk(TwinError):
    """Paralleling would drive an excessive equalising current."""

    def __init__(self, delta_v: float, current: float, limit: float):
        self.delta_v = delta_v
        self.current = current
        self.limit = limit
        super().__init__(
            f"voltage difference {delta_v:.2f} V exceeds {limit:.2f} V; "
            f"estimated inrush {current:.1f} A"
        )


# Open-circuit voltage anchors, per unit of nominal block/cell voltage.
_OCV_SOC = (0.0, 20.0, 90.0, 100.0)
_OCV_PER_NOMINAL = {
    Chemistry.LFP: tuple(v / 3.2 for v in (3.000, 3.200, 3.300, 3.375)),
    Chemistry.LEAD_ACID: tuple(v / 12.0 for v in (11.8, 12.0, 12.6, 12.9)),
}
# BMS / charger voltage ceiling per unit of nominal voltage.
_CHARGE_CEILING = {Chemistry.LFP: 3.375 / 3.2, Chemistry.LEAD_ACID: 14.4 / 12.0}
_DEFAULT_EFFICIENCY = {Chemistry.LFP: 0.95, Chemistry.LEAD_ACID: 0.85}
# Charge acceptance limit as a C-rate.
_DEFAULT_MAX_CHARGE_C = {Chemistry.LFP: 0.5, Chemistry.LEAD_ACID: 0.1}


@dataclass(frozen=True, slots=True)
class CellBlockSpec:
    """One series element: a 12 V lead-acid block or a single LFP cell."""

    chemistry: Chemistry
    nominal_voltage: float
    capacity: float  # Ah
    internal_resistance: float  # ohm
    cutoff_voltage: float  # minimum healthy OCV

    def __post_init__(self) -> None:
        for name in ("nominal_voltage", "capacity", "internal_resistance", "cutoff_voltage"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.cutoff_voltage < self.nominal_voltage:
            raise ValueError("cutoff_voltage must be below nominal_voltage")


LEAD_ACID_BLOCK = CellBlockSpec(Chemistry.LEAD_ACID, 12.0, 100.0, 0.009, 10.0)
LFP_CELL = CellBlockSpec(Chemistry.LFP, 3.2, 100.0, 0.000625, 2.5)


@dataclass(frozen=True, slots=True)
class BatteryPack:
    spec: CellBlockSpec
    series: int
    parallel: int
    name: str = "pack"
    efficiency: float | None = None  # per direction; chemistry default when None
    max_charge_c: float | None = None
    capacity_factor: float = 1.0  # usable fraction of nameplate (aging)
    resistance_factor: float = 1.0  # aging multiplier on internal resistance

    def __post_init__(self) -> None:
        if self.series < 1 or self.parallel < 1:
            raise ValueError("series and parallel must be >= 1")
        if self.efficiency is None:
            object.__setattr__(self, "efficiency", _DEFAULT_EFFICIENCY[self.spec.chemistry])
        if self.max_charge_c is None:
            object.__setattr__(self, "max_charge_c", _DEFAULT_MAX_CHARGE_C[self.spec.chemistry])
        if not 0 < self.efficiency <= 1:
            raise ValueError("efficiency must be in (0, 1]")
        if not 0 < self.capacity_factor <= 1:
            raise ValueError("capacity_factor must be in (0, 1]")

    @property
    def chemistry(self) -> Chemistry:
        return self.spec.chemistry

    @property
    def block_count(self) -> int:
        return self.series * self.parallel

    @property
    def nominal_voltage(self) -> float:
        return self.series * self.spec.nominal_voltage

    @property
    def capacity_ah(self) -> float:
        return self.parallel * self.spec.capacity

    @property
    def energy_nominal(self) -> float:
        # block count first so any topology with the same blocks is bit-identical
        return self.block_count * self.spec.nominal_voltage * self.spec.capacity

    @property
    def energy_capacity(self) -> float:
        """Usable Wh after the aging factor; drives SoC bookkeeping."""
        return self.energy_nominal * self.capacity_factor

    @property
    def resistance(self) -> float:
        return self.spec.internal_resistance * self.series / self.parallel * self.resistance_factor

    @property
    def conductance(self) -> float:
        return 1.0 / self.resistance

    @property
    def voltage_class(self) -> int:
        """Nominal system class (12/24/48 V ...); a 16S LFP pack is a 48 V pack."""
        return 12 * max(1, round(self.nominal_voltage / 12.0))

    @property
    def charge_ceiling(self) -> float:
        return self.nominal_voltage * _CHARGE_CEILING[self.chemistry]

    @property
    def max_charge_current(self) -> float:
        return self.max_charge_c * self.capacity_ah


@dataclass(frozen=True, slots=True)
class PackState:
    soc: float  # percent
    terminal_voltage: float
    current: float  # A, + charging
    power: float = 0.0  # W accepted at the terminals, + charging

    def __post_init__(self) -> None:
        if not 0.0 <= self.soc <= 100.0:
            raise ValueError(f"soc {self.soc} outside [0, 100]")
        if self.terminal_voltage < 0:
            raise ValueError("terminal_voltage must be >= 0")


def pack_ocv(pack: BatteryPack, soc: float) -> float:
    """Open-circuit voltage of the pack; piecewise-linear and non-decreasing in SoC."""
    if not 0.0 <= soc <= 100.0:
        raise ValueError(f"soc {soc} outside [0, 100]")
    per_nominal = interp(soc, _OCV_SOC, _OCV_PER_NOMINAL[pack.chemistry])
    return pack.series * pack.spec.nominal_voltage * per_nominal


def rest_state(pack: BatteryPack, soc: float) -> PackState:
    return PackState(soc, pack_ocv(pack, soc), 0.0, 0.0)


def _current_for_power(ocv: float, resistance: float, power: float) -> float:
    # root of R*I^2 + ocv*I - P = 0 in the cancellation-free form
    disc = max(ocv * ocv + 4.0 * resistance * power, 0.0)
    denom = ocv + math.sqrt(disc)
    return 2.0 * power / denom if denom > 0 else 0.0


def _with_power(pack: BatteryPack, soc: float, power: float) -> PackState:
    ocv = pack_ocv(pack, soc)
    current = _current_for_power(ocv, pack.resistance, power)
    return PackState(soc, max(ocv + current * pack.resistance, 0.0), current, power)


def step_pack(
    state: PackState,
    pack: BatteryPack,
    power: float,
    dt: float,
    efficiency: float | None = None,
    v_cap: float | None = None,
) -> PackState:
    """Advance one pack by ``dt`` seconds at terminal ``power`` (W, + charging).

    SoC saturates at 0 and 100: the accepted power is trimmed so the pack lands
    exactly on the bound, and the trimmed value is reported in ``power``.
    Charging is refused outright when the pack is full or when the resulting
    terminal voltage would exceed ``v_cap``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    eff = pack.efficiency if efficiency is None else efficiency
    energy = pack.energy_capacity
    soc = state.soc
    if power > 0:
        if soc >= 100.0:
            return _with_power(pack, soc, 0.0)
        ceiling = (100.0 - soc) / 100.0 * energy * 3600.0 / (dt * eff)
        if power >= ceiling:
            accepted, new_soc = ceiling, 100.0
        else:
            accepted = power
            new_soc = min(soc + 100.0 * accepted * dt * eff / (3600.0 * energy), 100.0)
        result = _with_power(pack, new_soc, accepted)
        if v_cap is not None and result.terminal_voltage > v_cap:
            return _with_power(pack, soc, 0.0)
        return result
    if power < 0:
        if soc <= 0.0:
            return _with_power(pack, soc, 0.0)
        floor = -soc / 100.0 * energy * 3600.0 * eff / dt
        if power <= floor:
            return _with_power(pack, 0.0, floor)
        new_soc = max(soc + 100.0 * power * dt / (eff * 3600.0 * energy), 0.0)
        return _with_power(pack, new_soc, power)
    return _with_power(pack, soc, 0.0)


def reassemble_pack(source: BatteryPack, target_voltage: float) -> BatteryPack:
    """Rewire the same blocks into a new series/parallel layout."""
    ratio = target_voltage / source.spec.nominal_voltage
    series = round(ratio)
    if target_voltage <= 0 or series < 1 or not math.isclose(ratio, series, rel_tol=1e-9):
        raise UnreachableVoltage(
            f"{target_voltage:g} V is not a multiple of the {source.spec.nominal_voltage:g} V block"
        )
    blocks = source.block_count
    if blocks % series:
        raise NonDivisibleTopology(
            f"{blocks} blocks cannot form strings of {series} in series"
        )
    return replace(source, series=series, parallel=blocks // series)


def estimate_inrush(v_a: float, v_b: float, r_a: float, r_b: float) -> float:
    """Equalising current when two sources are paralleled through their resistances."""
    loop = r_a + r_b
    if not loop > 0:
        raise ValueError("loop resistance must be positive")
    return abs(v_a - v_b) / loop


def classify_cell_health(spec: CellBlockSpec, measured_ocv: float) -> CellHealth:
    if measured_ocv < 0:
        raise ValueError("measured_ocv must be >= 0")
    return CellHealth.FAILED if measured_ocv < spec.cutoff_voltage else CellHealth.HEALTHY


def _conductance_split(total: float, weights: list[float]) -> list[float]:
    """Split ``total`` proportionally to ``weights``; the last share absorbs rounding."""
    if not weights:
        return []
    weight_sum = math.fsum(weights)
    shares = [total * w / weight_sum for w in weights[:-1]]
    shares.append(total - math.fsum(shares))
    return shares


@dataclass(frozen=True, slots=True)
class BusLimits:
    """Power the bus can absorb or deliver over the next step, in W."""

    charge: float
    discharge: float
    voltage: float


@dataclass(frozen=True, slots=True)
class HybridBus:
    """Packs sharing one DC bus.

    Current divides by conductance among the packs able to take it.  A pack
    that is full (or at its charge-current limit, or at the discharge floor)
    drops out of the split and the remainder flows to the others.  Packs are
    coupled only through this split; circulating currents between packs at
    different open-circuit voltages are not modelled.
    """

    packs: tuple[tuple[BatteryPack, PackState], ...]
    nominal_voltage: float
    v_cap: float
    floor_soc: float = 10.0
    disabled: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if not self.packs:
            raise ValueError("bus needs at least one pack")
        names = [p.name for p, _ in self.packs]
        if len(set(names)) != len(names):
            raise ValueError("pack names must be unique on a bus")
        classes = {p.voltage_class for p, _ in self.packs}
        if len(classes) > 1:
            raise VoltageClassMismatch(f"mixed voltage classes {sorted(classes)}")

    @classmethod
    def single(cls, pack: BatteryPack, state: PackState, v_cap: float | None = None, **kw) -> HybridBus:
        cap = pack.charge_ceiling if v_cap is None else v_cap
        return cls(((pack, state),), float(pack.voltage_class), cap, **kw)

    @property
    def energy_total(self) -> float:
        return math.fsum(p.energy_nominal for p, _ in self.packs)

    def _active(self) -> list[tuple[int, BatteryPack, PackState]]:
        return [(i, p, s) for i, (p, s) in enumerate(self.packs) if p.name not in self.disabled]

    @property
    def soc(self) -> float:
        """Energy-weighted SoC of the enabled packs."""
        active = self._active()
        if not active:
            return 0.0
        if all(s.soc == 100.0 for _, _, s in active):
            return 100.0
        weights = [p.energy_capacity for _, p, _ in active]
        return math.fsum(w * s.soc for w, (_, _, s) in zip(weights, active)) / math.fsum(weights)

    @property
    def voltage(self) -> float:
        """Conductance-weighted mean of the enabled packs' terminal voltages."""
        active = self._active()
        if not active:
            return 0.0
        g = [p.conductance for _, p, _ in active]
        return math.fsum(gi * s.terminal_voltage for gi, (_, _, s) in zip(g, active)) / math.fsum(g)

    @property
    def current(self) -> float:
        return math.fsum(s.current for _, _, s in self._active())

    @property
    def power(self) -> float:
        return math.fsum(s.power for _, _, s in self._active())

    def with_disabled(self, name: str) -> HybridBus:
        if name not in {p.name for p, _ in self.packs}:
            raise KeyError(f"no pack named {name!r}")
        return replace(self, disabled=self.disabled | {name})

    def _charge_limit(self, pack: BatteryPack, state: PackState, dt: float) -> float:
        if state.soc >= 100.0:
            return 0.0
        headroom = (100.0 - state.soc) / 100.0 * pack.energy_capacity * 3600.0 / (dt * pack.efficiency)
        i_max = pack.max_charge_current
        current_cap = i_max * (pack_ocv(pack, state.soc) + i_max * pack.resistance)
        return min(headroom, current_cap)

    def _discharge_limit(self, pack: BatteryPack, state: PackState, dt: float) -> float:
        if state.soc <= self.floor_soc:
            return 0.0
        return (state.soc - self.floor_soc) / 100.0 * pack.energy_capacity * 3600.0 * pack.efficiency / dt

    def limits(self, dt: float) -> BusLimits:
        active = self._active()
        return BusLimits(
            charge=math.fsum(self._charge_limit(p, s, dt) for _, p, s in active),
            discharge=math.fsum(self._discharge_limit(p, s, dt) for _, p, s in active),
            voltage=self.voltage,
        )

    def _allocate(self, power: float, dt: float) -> dict[int, float]:
        """Water-fill ``power`` over the enabled packs by conductance."""
        limit_of = self._charge_limit if power > 0 else self._discharge_limit
        open_ = {i: (p, limit_of(p, s, dt)) for i, p, s in self._active()}
        open_ = {i: v for i, v in open_.items() if v[1] > 0}
        alloc: dict[int, float] = {}
        remaining = abs(power)
        while open_ and remaining > 0:
            keys = list(open_)
            shares = _conductance_split(remaining, [open_[k][0].conductance for k in keys])
            saturated = [k for k, share in zip(keys, shares) if share >= open_[k][1]]
            if not saturated:
                alloc.update(zip(keys, shares))
                break
            for k in saturated:
                alloc[k] = open_.pop(k)[1]
                remaining -= alloc[k]
        sign = 1.0 if power > 0 else -1.0
        return {k: sign * v for k, v in alloc.items()}

    def apply(self, power: float, dt: float) -> HybridBus:
        """Move ``power`` W into (+) or out of (-) the bus for ``dt`` seconds.

        If charging would lift the bus above ``v_cap`` the charge is refused
        and every pack rests for the step.
        """
        alloc = self._allocate(power, dt) if power != 0 else {}
        packs = []
        for i, (pack, state) in enumerate(self.packs):
            share = alloc.get(i, 0.0)
            packs.append((pack, step_pack(state, pack, share, dt)))
        stepped = replace(self, packs=tuple(packs))
        if power > 0 and stepped.voltage > self.v_cap:
            return self.apply(0.0, dt)
        return stepped


def parallel_connect(
    a: tuple[BatteryPack, PackState],
    b: tuple[BatteryPack, PackState],
    max_delta_v: float = 0.5,
    v_cap: float | None = None,
    floor_soc: float = 10.0,
) -> HybridBus:
    """Join two packs on one bus, refusing when the voltage gap risks inrush."""
    (pack_a, state_a), (pack_b, state_b) = a, b
    if pack_a.voltage_class != pack_b.voltage_class:
        raise VoltageClassMismatch(
            f"{pack_a.name} is a {pack_a.voltage_class} V pack, {pack_b.name} is {pack_b.voltage_class} V"
        )
    delta_v = abs(state_a.terminal_voltage - state_b.terminal_voltage)
    if delta_v > max_delta_v:
        current = estimate_inrush(
            state_a.terminal_voltage, state_b.terminal_voltage, pack_a.resistance, pack_b.resistance
        )
        raise InrushRisk(delta_v, current, max_delta_v)
    if pack_a is pack_b or pack_a.name == pack_b.name:
        # the same pack on both terminals is a no-op connection
        return HybridBus.single(pack_a, state_a, v_cap=v_cap, floor_soc=floor_soc)
    cap = min(pack_a.charge_ceiling, pack_b.charge_ceiling) if v_cap is None else v_cap
    return HybridBus(((pack_a, state_a), (pack_b, state_b)), float(pack_a.voltage_class), cap, floor_soc)


def split_bus_current(bus: HybridBus, total_current: float) -> list[float]:
    """Per-pack share of a bus current by conductance; disabled packs get zero."""
    active = {i for i, _, _ in bus._active()}
    weights = [p.conductance for i, (p, _) in enumerate(bus.packs) if i in active]
    shares = iter(_conductance_split(total_current, weights))
    return [next(shares) if i in active else 0.0 for i in range(len(bus.packs))]
