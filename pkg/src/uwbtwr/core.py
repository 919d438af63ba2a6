"""Tick-domain time arithmetic for DW1000-style 40-bit event timestamps.

The DW1000 timestamps radio events with a 40 bit counter running at
128 * 499.2 MHz = 63.8976 GHz.  Datasheets usually round the resolution
to "15 ps (about 4.5 mm)"; that rounded figure corresponds to a 66.7 GHz
rate which the hardware does not actually use.  Everything here is built
on the exact counter frequency so that tick arithmetic stays integer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TICKS_PER_SECOND = 128 * 499_200_000  # exact: 63_897_600_000 counts per second
TICK_SECONDS = 1.0 / TICKS_PER_SECOND  # ~15.65 ps
SPEED_OF_LIGHT = 299_792_458.0  # m/s, vacuum
TICK_METERS = SPEED_OF_LIGHT / TICKS_PER_SECOND  # ~4.692 mm of path per tick

TIMESTAMP_BITS = 40
TIMESTAMP_MODULUS = 1 << TIMESTAMP_BITS  # counter wraps every ~17.2 s
SPAN_LIMIT = 1 << (TIMESTAMP_BITS - 1)  # spans must stay below half the modulus

# Plausible window for received signal power.  Readings outside this range
# indicate a misconfigured scenario rather than a usable measurement.
RX_POWER_WINDOW = (-120.0, -40.0)

_MASK = TIMESTAMP_MODULUS - 1


@dataclass(frozen=True, slots=True)
class TickTime:
    """One reading of the wrapped 40-bit event counter."""

    ticks: int

    def __post_init__(self):
        object.__setattr__(self, "ticks", int(self.ticks) & _MASK)

    @classmethod
    def from_seconds(cls, seconds: float) -> "TickTime":
        """Quantize a local clock reading to the nearest tick, wrapping mod 2^40."""
        return cls(round(seconds * TICKS_PER_SECOND))

    def __add__(self, other: "TickSpan") -> "TickTime":
        if not isinstance(other, TickSpan):
            return NotImplemented
        return TickTime(self.ticks + other.span)


@dataclass(frozen=True, slots=True)
class TickSpan:
    """Signed tick count between two events.

    Magnitude is kept below 2^39 so the wrap direction of the underlying
    40 bit counter stays unambiguous.
    """

    span: int

    def __post_init__(self):
        span = int(self.span)
        if not -SPAN_LIMIT < span < SPAN_LIMIT:
            raise OverflowError(f"tick span {span} outside +-2^39 range")
        object.__setattr__(self, "span", span)

    def __add__(self, other: "TickSpan") -> "TickSpan":
        if not isinstance(other, TickSpan):
            return NotImplemented
        return TickSpan(self.span + other.span)

    def __sub__(self, other: "TickSpan") -> "TickSpan":
        if not isinstance(other, TickSpan):
            return NotImplemented
        return TickSpan(self.span - other.span)

    def __neg__(self) -> "TickSpan":
        return TickSpan(-self.span)


@dataclass(frozen=True, slots=True)
class PowerDbm:
    """Signal power in dBm."""

    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"power must be finite, got {self.value}")
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True, slots=True)
class Meters:
    """Non-negative distance in meters."""

    value: float

    def __post_init__(self):
        if not math.isfinite(self.value) or self.value < 0.0:
            raise ValueError(f"distance must be finite and >= 0, got {self.value}")
        object.__setattr__(self, "value", float(self.value))


def wrap_diff(earlier: TickTime, later: TickTime) -> TickSpan:
    """Minimal-magnitude signed difference later - earlier modulo 2^40.

    Total over all input pairs: any pair of counter readings has exactly one
    difference with magnitude below 2^39.
    """
    d = (later.ticks - earlier.ticks) & _MASK
    if d >= SPAN_LIMIT:
        d -= TIMESTAMP_MODULUS
    return TickSpan(d)


def ticks_to_seconds(span: TickSpan) -> float:
    return span.span / TICKS_PER_SECOND


def seconds_to_ticks(seconds: float) -> TickSpan:
    """Round a duration to the nearest whole tick.

    Raises OverflowError when the result would not fit a valid span,
    i.e. beyond roughly +-8.6 s.
    """
    if not math.isfinite(seconds):
        raise ValueError(f"duration must be finite, got {seconds}")
    return TickSpan(round(seconds * TICKS_PER_SECOND))


def span_to_meters(span: TickSpan) -> Meters:
    """Convert a propagation span to path length through vacuum.

    Distances are non-negative; a negative span has no geometric meaning
    here and is rejected.
    """
    if span.span < 0:
        raise ValueError(f"negative span {span.span} has no distance equivalent")
    return Meters(span.span * TICK_METERS)
