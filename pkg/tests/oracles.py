"""Independent reference implementations used as test oracles.

These deliberately share no code with the package: the CRC works bit by bit
from the polynomial, and the planner tries every factorisation.
"""

from __future__ import annotations

from offgrid_twin.pv import PvArrayConfig, PvModuleSpec, VoltageWindow


def crc16_bitwise(data: bytes) -> int:
    """CRC-16/MODBUS straight from the definition: poly 0x8005 reflected, init 0xFFFF."""
    poly = 0x8005
    reflected = int(f"{poly:016b}"[::-1], 2)  # 0xA001, derived rather than typed
    crc = 0xFFFF
    for byte in data:
        for i in range(8):
            bit = (byte >> i) & 1
            mix = (crc ^ bit) & 1
            crc >>= 1
            if mix:
                crc ^= reflected
    return crc


def brute_force_configs(module: PvModuleSpec, total: int, window: VoltageWindow) -> set[tuple[int, int]]:
    """Every (series, parallel) with series * parallel == total that fits the window."""
    found = set()
    for series in range(1, total + 1):
        parallel = total // series
        if series * parallel == total:
            v_op = series * module.v_mp
            v_oc = series * module.v_oc
            if window.op_min <= v_op <= window.op_max and v_oc < window.oc_max:
                found.add((series, parallel))
    return found


def as_pairs(configs: list[PvArrayConfig]) -> set[tuple[int, int]]:
    return {(c.series, c.parallel) for c in configs}
