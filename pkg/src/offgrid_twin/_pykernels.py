"""Pure-Python implementations of the hot kernels.

These are the reference versions; ``_ckernels.pyx`` mirrors them operation
for operation so both backends return bit-identical results.
"""

from __future__ import annotations

from collections.abc import Sequence


def _make_table() -> tuple[int, ...]:
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = (crc >> 1) ^ 0xA001 if crc & 1 else crc >> 1
        table.append(crc)
    return tuple(table)


_CRC_TABLE = _make_table()


def crc16(data: bytes | bytearray | memoryview) -> int:
    """CRC-16/MODBUS (reflected poly 0x8005, init 0xFFFF, no final xor)."""
    crc = 0xFFFF
    table = _CRC_TABLE
    for byte in bytes(data):
        crc = (crc >> 8) ^ table[(crc ^ byte) & 0xFF]
    return crc


def integrate_power(
    times: Sequence[float],
    powers: Sequence[float],
    max_gap: float,
    lo: float,
    hi: float,
) -> float:
    """Trapezoidal energy in Wh of a sampled power series, clipped to [lo, hi).

    ``times`` are seconds and must be non-decreasing.  A segment whose span
    exceeds ``max_gap`` contributes nothing.
    """
    n = min(len(times), len(powers))
    total = 0.0
    for i in range(n - 1):
        t0 = times[i]
        t1 = times[i + 1]
        span = t1 - t0
        if span <= 0.0 or span > max_gap:
            continue
        a = t0 if t0 > lo else lo
        b = t1 if t1 < hi else hi
        if a >= b:
            continue
        p0 = powers[i]
        slope = powers[i + 1] - p0
        pa = p0 + slope * (a - t0) / span
        pb = p0 + slope * (b - t0) / span
        total += (pa + pb) * 0.5 * (b - a)
    return total / 3600.0
