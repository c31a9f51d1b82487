from __future__ import annotations

import math
from array import array

import pytest
from hypothesis import given
from hypothesis import strategies as st

from offgrid_twin import kernels
from oracles import crc16_bitwise

BACKENDS = kernels.available_backends()


def test_compiled_backend_is_built():
    # the install builds the extension; the pure fallback must still import
    assert "python" in BACKENDS
    assert "cython" in BACKENDS
    assert kernels.BACKEND in BACKENDS


@pytest.mark.parametrize("name", sorted(BACKENDS))
class TestCrc:
    def test_check_value(self, name):
        assert BACKENDS[name].crc16(b"123456789") == 0x4B37 == crc16_bitwise(b"123456789")

    def test_empty_is_init_value(self, name):
        assert BACKENDS[name].crc16(b"") == 0xFFFF

    @pytest.mark.parametrize("kind", [bytes, bytearray, memoryview])
    def test_accepts_buffers(self, name, kind):
        assert BACKENDS[name].crc16(kind(b"\xa5\x01\x03")) == crc16_bitwise(b"\xa5\x01\x03")

    @given(data=st.binary(max_size=300))
    def test_matches_bitwise_oracle(self, name, data):
        assert BACKENDS[name].crc16(data) == crc16_bitwise(data)

    @given(data=st.binary(min_size=1, max_size=64), bit=st.integers(min_value=0))
    def test_single_bit_flip_changes_crc(self, name, data, bit):
        bit %= len(data) * 8
        flipped = bytearray(data)
        flipped[bit // 8] ^= 1 << (bit % 8)
        assert BACKENDS[name].crc16(bytes(flipped)) != BACKENDS[name].crc16(data)


finite = st.floats(min_value=-1e4, max_value=1e4, allow_nan=False)


@st.composite
def series(draw):
    steps = draw(st.lists(st.floats(min_value=0.0, max_value=50.0), min_size=0, max_size=60))
    times = [0.0]
    for s in steps:
        times.append(times[-1] + s)
    powers = draw(st.lists(finite, min_size=len(times), max_size=len(times)))
    return times, powers


def _reference(times, powers, max_gap, lo, hi):
    # fine-grained midpoint rule on the clipped, gap-filtered segments
    total = 0.0
    for (t0, p0), (t1, p1) in zip(zip(times, powers), zip(times[1:], powers[1:])):
        span = t1 - t0
        if span <= 0 or span > max_gap:
            continue
        a, b = max(t0, lo), min(t1, hi)
        if a >= b:
            continue
        pa = p0 + (p1 - p0) * (a - t0) / span
        pb = p0 + (p1 - p0) * (b - t0) / span
        total += 0.5 * (pa + pb) * (b - a)
    return total / 3600.0


class TestIntegratePower:
    def test_constant_day(self):
        times = [10.0 * k for k in range(8641)]
        assert kernels.integrate_power(times, [1000.0] * len(times), 20.0, 0.0, 86400.0) == pytest.approx(24000.0)

    def test_gap_contributes_nothing(self):
        assert kernels.integrate_power([0.0, 10.0, 100.0], [3600.0] * 3, 20.0, 0.0, 200.0) == pytest.approx(10.0)

    def test_clip_interpolates(self):
        # ramp 0 -> 3600 W over an hour, keep the second half
        wh = kernels.integrate_power([0.0, 3600.0], [0.0, 3600.0], 4000.0, 1800.0, 7200.0)
        assert wh == pytest.approx(1350.0)

    @pytest.mark.parametrize("name", sorted(BACKENDS))
    def test_empty_and_single(self, name):
        fn = BACKENDS[name].integrate_power
        assert fn(array("d"), array("d"), 20.0, 0.0, 1.0) == 0.0
        assert fn(array("d", [0.0]), array("d", [5.0]), 20.0, 0.0, 1.0) == 0.0

    @given(data=series(), max_gap=st.floats(1.0, 60.0), lo=st.floats(-10, 500), width=st.floats(0, 3000))
    def test_backends_agree_bitwise(self, data, max_gap, lo, width):
        times, powers = (array("d", x) for x in data)
        results = {n: b.integrate_power(times, powers, max_gap, lo, lo + width) for n, b in BACKENDS.items()}
        assert len(set(results.values())) == 1
        ref = _reference(list(times), list(powers), max_gap, lo, lo + width)
        assert math.isclose(results["python"], ref, rel_tol=1e-9, abs_tol=1e-9)

    @given(data=series(), cut=st.floats(0, 3000))
    def test_additive_over_adjacent_windows(self, data, cut):
        times, powers = data
        whole = kernels.integrate_power(times, powers, 60.0, 0.0, 3000.0)
        parts = kernels.integrate_power(times, powers, 60.0, 0.0, cut) + kernels.integrate_power(
            times, powers, 60.0, cut, 3000.0
        )
        assert math.isclose(whole, parts, rel_tol=1e-9, abs_tol=1e-6)
