"""Backend selection for the hot kernels.

The compiled extension is used when it was built; otherwise the pure-Python
module is used.  Set ``OFFGRID_TWIN_PURE=1`` to force the fallback.
"""

from __future__ import annotations

import os
from array import array
from collections.abc import Sequence
from types import ModuleType

from . import _pykernels

_compiled: ModuleType | None
try:
    from . import _ckernels as _compiled
except ImportError:  # extension not built
    _compiled = None

if _compiled is not None and not os.environ.get("OFFGRID_TWIN_PURE"):
    _active: ModuleType = _compiled
    BACKEND = "cython"
else:
    _active = _pykernels
    BACKEND = "python"

crc16 = _active.crc16
_integrate = _active.integrate_power


def _doubles(values: Sequence[float]) -> array:
    return values if isinstance(values, array) and values.typecode == "d" else array("d", values)


def integrate_power(
    times: Sequence[float], powers: Sequence[float], max_gap: float, lo: float, hi: float
) -> float:
    """Trapezoidal energy in Wh of a sampled power series clipped to ``[lo, hi)``.

    Segments longer than ``max_gap`` seconds count as gaps and add nothing.
    """
    return _integrate(_doubles(times), _doubles(powers), max_gap, lo, hi)


def available_backends() -> dict[str, ModuleType]:
    """All importable kernel implementations, keyed by name."""
    found = {"python": _pykernels}
    if _compiled is not None:
        found["cython"] = _compiled
    return found
