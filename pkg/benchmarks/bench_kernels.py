"""Compare the compiled and pure-Python kernels on collector-sized workloads.

CRC: one day of 40-node polling at a 10 s cadence is about 690k frames
(request plus reply).  Integration: one node-day of 10 s samples, repeated.

    python3 benchmarks/bench_kernels.py [--frames N] [--repeat R]
"""

from __future__ import annotations

import argparse
import random
import time
from array import array

from offgrid_twin.kernels import available_backends


def _frames(n: int, seed: int) -> list[bytes]:
    rng = random.Random(seed)
    # mix of 6-byte request bodies and 26-byte reply bodies
    return [rng.randbytes(6 if rng.random() < 0.5 else 26) for _ in range(n)]


def _series(seed: int) -> tuple[array, array]:
    rng = random.Random(seed)
    times = array("d", (10.0 * k + rng.uniform(-0.5, 0.5) for k in range(8641)))
    powers = array("d", (rng.uniform(0.0, 3000.0) for _ in range(8641)))
    return times, powers


def _best(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--frames", type=int, default=690_000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)

    frames = _frames(args.frames, 1)
    times, powers = _series(2)
    backends = available_backends()
    results: dict[str, tuple[float, float]] = {}
    checks = set()
    for name, mod in backends.items():
        crc = mod.crc16
        integrate = mod.integrate_power
        t_crc = _best(lambda: [crc(f) for f in frames], args.repeat)
        t_int = _best(lambda: [integrate(times, powers, 20.0, 0.0, 86400.0) for _ in range(40)], args.repeat)
        checks.add((sum(crc(f) for f in frames[:1000]), integrate(times, powers, 20.0, 0.0, 86400.0)))
        results[name] = (t_crc, t_int)
    if len(checks) != 1:
        raise SystemExit("backends disagree")

    print(f"{'backend':<8} {'crc16 (s)':>10} {'frames/s':>12} {'integrate 40 node-days (s)':>28}")
    for name, (t_crc, t_int) in results.items():
        print(f"{name:<8} {t_crc:>10.3f} {args.frames / t_crc:>12,.0f} {t_int:>28.4f}")
    if "cython" in results:
        py, cy = results["python"], results["cython"]
        print(f"speedup: crc16 x{py[0] / cy[0]:.1f}, integrate x{py[1] / cy[1]:.1f}")


if __name__ == "__main__":
    main()
