"""Daily irradiance and load shapes.

Both defaults are calibrated illustrations of a single clear August day at a
high-altitude hut, not measurements.  Knots are (hour of day, value) and the
curve is piecewise linear between them.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, time

from ..curves import interp


@dataclass(frozen=True, slots=True)
class Profile:
    name: str
    knots: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        hours = [h for h, _ in self.knots]
        if len(hours) < 2 or hours != sorted(hours) or hours[0] != 0.0 or hours[-1] != 24.0:
            raise ValueError(f"profile {self.name!r}: knots must be sorted and span 0..24 h")

    def __call__(self, t: datetime | time | float) -> float:
        return interp(hour_of_day(t), [h for h, _ in self.knots], [v for _, v in self.knots])

    @property
    def peak(self) -> tuple[float, float]:
        """(hour, value) of the largest knot."""
        return max(self.knots, key=lambda k: k[1])


def hour_of_day(t: datetime | time | float) -> float:
    if isinstance(t, (int, float)):
        return float(t) % 24.0
    return t.hour + t.minute / 60.0 + t.second / 3600.0 + t.microsecond / 3.6e9


# Normalised plane-of-array irradiance.  Dark outside 06:00-19:00, single peak
# at noon; the afternoon side falls faster (mountain cloud build-up), so the
# arrays stop covering the load around 17:00.
DEFAULT_IRRADIANCE = Profile(
    "default",
    (
        (0.0, 0.0),
        (6.0, 0.0),
        (7.0, 0.12),
        (8.0, 0.33),
        (9.0, 0.56),
        (10.0, 0.76),
        (11.0, 0.92),
        (12.0, 1.0),
        (13.0, 0.9),
        (14.0, 0.7),
        (15.0, 0.45),
        (16.0, 0.2),
        (17.0, 0.065),
        (18.0, 0.02),
        (19.0, 0.0),
        (24.0, 0.0),
    ),
)

# Whole-hut AC load in W: 150 W overnight base, breakfast bump at 07:00,
# evening ramp from 17:00 to the 620 W peak at 20:00.
DEFAULT_LOAD = Profile(
    "default",
    (
        (0.0, 330.0),
        (1.0, 260.0),
        (2.0, 200.0),
        (3.0, 150.0),
        (5.0, 150.0),
        (6.0, 170.0),
        (7.0, 280.0),
        (8.0, 240.0),
        (9.0, 220.0),
        (12.0, 240.0),
        (14.0, 220.0),
        (17.0, 260.0),
        (18.0, 380.0),
        (19.0, 520.0),
        (20.0, 620.0),
        (21.0, 540.0),
        (22.0, 430.0),
        (23.0, 370.0),
        (24.0, 330.0),
    ),
)

BUILTIN = {
    "irradiance": {"default": DEFAULT_IRRADIANCE},
    "load": {"default": DEFAULT_LOAD},
}


def irradiance_profile(t: datetime | time | float) -> float:
    return DEFAULT_IRRADIANCE(t)


def load_profile(t: datetime | time | float) -> float:
    return DEFAULT_LOAD(t)
