"""PV modules, arrays, and series/parallel string planning.

The electrical model is deliberately flat: a module is characterised by its
nameplate power and its max-power-point and open-circuit voltages, with no
temperature or irradiance dependence of voltage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import TwinError


class PvConfigError(TwinError):
    """A module, window, or array definition breaks its own invariants."""


@dataclass(frozen=True, slots=True)
class PvModuleSpec:
    name: str
    power_peak: float  # W at STC
    v_mp: float  # V
    v_oc: float  # V

    def __post_init__(self) -> None:
        if not self.power_peak > 0:
            raise PvConfigError(f"{self.name}: power_peak must be positive")
        if not 0 < self.v_mp < self.v_oc:
            raise PvConfigError(f"{self.name}: need 0 < v_mp < v_oc")


@dataclass(frozen=True, slots=True)
class VoltageWindow:
    """Inverter PV input limits.

    The operating range ``[op_min, op_max]`` is inclusive; the open-circuit
    limit is strict (string OCV must be *less than* ``oc_max``).
    """

    op_min: float
    op_max: float
    oc_max: float

    def __post_init__(self) -> None:
        if not 0 < self.op_min < self.op_max:
            raise PvConfigError("need 0 < op_min < op_max")
        if not self.oc_max > self.op_max:
            raise PvConfigError("need oc_max > op_max")


@dataclass(frozen=True, slots=True)
class PvArrayConfig:
    series: int
    parallel: int
    module: PvModuleSpec

    def __post_init__(self) -> None:
        if self.series < 1 or self.parallel < 1:
            raise PvConfigError("series and parallel counts must be >= 1")

    @property
    def module_count(self) -> int:
        return self.series * self.parallel

    @property
    def v_operating(self) -> float:
        return self.series * self.module.v_mp

    @property
    def v_open_circuit(self) -> float:
        return self.series * self.module.v_oc

    @property
    def power_peak(self) -> float:
        return self.module_count * self.module.power_peak


@dataclass(frozen=True, slots=True)
class Violation:
    code: str  # "op_min not reached" | "op_max exceeded" | "oc_max reached"
    value: float
    limit: float

    def __str__(self) -> str:
        return f"{self.code} ({self.value:.1f} V vs {self.limit:.1f} V)"


@dataclass(frozen=True, slots=True)
class ValidationResult:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def _string_violations(series: int, module: PvModuleSpec, window: VoltageWindow) -> list[Violation]:
    # single source of truth for the window predicate
    v_op = series * module.v_mp
    v_oc = series * module.v_oc
    found = []
    if v_op < window.op_min:
        found.append(Violation("op_min not reached", v_op, window.op_min))
    if v_op > window.op_max:
        found.append(Violation("op_max exceeded", v_op, window.op_max))
    if not v_oc < window.oc_max:
        found.append(Violation("oc_max reached", v_oc, window.oc_max))
    return found


def validate_config(config: PvArrayConfig, window: VoltageWindow) -> ValidationResult:
    """Check a string layout against an inverter input window."""
    return ValidationResult(tuple(_string_violations(config.series, config.module, window)))


def enumerate_string_configs(
    module: PvModuleSpec, total_modules: int, window: VoltageWindow
) -> list[PvArrayConfig]:
    """All exact ``series x parallel`` factorisations of ``total_modules`` that fit ``window``.

    Sorted by descending series count.  The feasible series range is derived
    from the window bounds first, so only a handful of divisors are tested.
    """
    if total_modules < 1:
        raise PvConfigError("total_modules must be >= 1")
    # analytic bounds, widened by one to absorb float rounding at the edges
    lo = max(1, math.ceil(window.op_min / module.v_mp) - 1)
    hi = min(
        total_modules,
        math.floor(window.op_max / module.v_mp) + 1,
        math.ceil(window.oc_max / module.v_oc) + 1,
    )
    configs = []
    for series in range(hi, lo - 1, -1):
        if total_modules % series:
            continue
        if _string_violations(series, module, window):
            continue
        configs.append(PvArrayConfig(series, total_modules // series, module))
    return configs


def array_power(config: PvArrayConfig, irradiance_fraction: float, derate: float = 1.0) -> float:
    """DC power of an array at a fraction of STC irradiance."""
    if not 0.0 <= irradiance_fraction <= 1.0:
        raise ValueError(f"irradiance_fraction {irradiance_fraction} outside [0, 1]")
    if not 0.0 < derate <= 1.0:
        raise ValueError(f"derate {derate} outside (0, 1]")
    return config.series * config.parallel * config.module.power_peak * irradiance_fraction * derate
