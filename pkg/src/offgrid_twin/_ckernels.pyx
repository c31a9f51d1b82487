# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_pykernels``; keep them in lockstep."""

from libc.stdint cimport uint16_t


cdef uint16_t _TABLE[256]


cdef void _fill_table():
    cdef int byte, bit
    cdef uint16_t crc
    for byte in range(256):
        crc = <uint16_t>byte
        for bit in range(8):
            if crc & 1:
                crc = (crc >> 1) ^ 0xA001
            else:
                crc = crc >> 1
        _TABLE[byte] = crc


_fill_table()


def crc16(data):
    """CRC-16/MODBUS (reflected poly 0x8005, init 0xFFFF, no final xor)."""
    buf = data if isinstance(data, bytes) else bytes(data)
    if not buf:
        return 0xFFFF
    cdef const unsigned char[:] view = buf
    cdef Py_ssize_t i, n = view.shape[0]
    cdef uint16_t crc = 0xFFFF
    for i in range(n):
        crc = (crc >> 8) ^ _TABLE[(crc ^ view[i]) & 0xFF]
    return crc


def integrate_power(times, powers, double max_gap, double lo, double hi):
    """Trapezoidal energy in Wh of a sampled power series, clipped to [lo, hi)."""
    cdef const double[:] tv = times
    cdef const double[:] pv = powers
    cdef Py_ssize_t i, n = min(tv.shape[0], pv.shape[0])
    cdef double total = 0.0
    cdef double t0, t1, span, a, b, p0, slope, pa, pb
    for i in range(n - 1):
        t0 = tv[i]
        t1 = tv[i + 1]
        span = t1 - t0
        if span <= 0.0 or span > max_gap:
            continue
        a = t0 if t0 > lo else lo
        b = t1 if t1 < hi else hi
        if a >= b:
            continue
        p0 = pv[i]
        slope = pv[i + 1] - p0
        pa = p0 + slope * (a - t0) / span
        pb = p0 + slope * (b - t0) / span
        total += (pa + pb) * 0.5 * (b - a)
    return total / 3600.0
