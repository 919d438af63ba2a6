"""Time-of-flight estimation from two-way ranging exchanges.

toa_basic halves the difference between the reference's round-trip span and
the tag's reply delay; any clock rate difference multiplies the (much
longer) reply delay and leaks into the result.  toa_corrected removes that
term using the drift ratio sampled by the third message:

    toa = 0.5 * (dt12_ref - dt12_tag
                 - ratio * (dt12_tag + E1) - E2 - E1) + Z

where ratio is measured from the tag's two transmit timestamps against the
reference's two receive timestamps (spans that carry no power-dependent
receive error on the tag side), E1/E2 are the power-dependent timestamp
errors of the tag's and the reference's receive timestamps, and Z absorbs
every constant offset (antenna delays, absolute bias level, mounting
offset).  Correction curves store the negated relative error, so E values
are obtained by negating curve lookups.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .calib import PowerCorrectionCurve, drift_ratio_from_spans, lookup_correction
from .core import SPEED_OF_LIGHT, TICK_SECONDS, Meters, wrap_diff
from .exchange import TwrExchange

Z_ESTIMATED = "estimated-from-known-distance"
Z_CONFIGURED = "configured"


@dataclass(frozen=True)
class ZOffset:
    """Constant time offset folded into every estimate, in seconds."""

    seconds: float
    provenance: str = Z_CONFIGURED

    def __post_init__(self):
        if self.provenance not in (Z_ESTIMATED, Z_CONFIGURED):
            raise ValueError(f"unknown Z provenance {self.provenance!r}")


ZERO_Z = ZOffset(0.0)


@dataclass(frozen=True)
class RangeComponents:
    """Additive breakdown of a time-of-flight estimate, in seconds."""

    raw_half_s: float
    drift_s: float
    e1_s: float
    e2_s: float
    z_s: float

    def total_s(self) -> float:
        # Same association order as the estimators, so the re-sum is exact.
        return self.raw_half_s + self.drift_s + self.e1_s + self.e2_s + self.z_s


@dataclass(frozen=True)
class RangeEstimate:
    exchange_index: int
    toa_s: float
    range_m: float  # signed: pre-Z pathologies stay visible instead of clamping
    components: RangeComponents


def _build(exchange_index: int, components: RangeComponents) -> RangeEstimate:
    toa = components.total_s()
    return RangeEstimate(exchange_index, toa, toa * SPEED_OF_LIGHT, components)


def toa_basic(x: TwrExchange, e1_ticks: float = 0.0, e2_ticks: float = 0.0) -> RangeEstimate:
    """Two-message estimate; e1/e2 are power error values in ticks to subtract."""
    dt12_ref = wrap_diff(x.t1r_tx, x.t2r_rx).span
    dt12_tag = wrap_diff(x.t1t_rx, x.t2t_tx).span
    components = RangeComponents(
        raw_half_s=0.5 * (dt12_ref - dt12_tag) * TICK_SECONDS,
        drift_s=0.0,
        e1_s=-0.5 * e1_ticks * TICK_SECONDS,
        e2_s=-0.5 * e2_ticks * TICK_SECONDS,
        z_s=0.0,
    )
    return _build(x.exchange_index, components)


def toa_corrected(
    x: TwrExchange,
    curve_tag: PowerCorrectionCurve,
    curve_ref: PowerCorrectionCurve,
    z: ZOffset = ZERO_Z,
) -> RangeEstimate:
    """Drift- and power-corrected time of flight.

    E1 is added to the tag span in ticks before the span is scaled by the
    dimensionless drift ratio: the ratio must multiply the noise-free reply
    delay, and the tag's receive timestamp error would otherwise leak in.
    """
    if not x.has_third_message:
        raise ValueError(f"exchange {x.exchange_index}: third message required for correction")
    ratio = drift_ratio_from_spans(
        wrap_diff(x.t2t_tx, x.t3t_tx),
        wrap_diff(x.t2r_rx, x.t3r_rx),
    )
    e1 = -lookup_correction(curve_tag, x.measured_power_tag)
    e2 = -lookup_correction(curve_ref, x.measured_power_ref_2)
    dt12_ref = wrap_diff(x.t1r_tx, x.t2r_rx).span
    dt12_tag = wrap_diff(x.t1t_rx, x.t2t_tx).span
    components = RangeComponents(
        raw_half_s=0.5 * (dt12_ref - dt12_tag) * TICK_SECONDS,
        drift_s=-0.5 * ratio * (dt12_tag + e1) * TICK_SECONDS,
        e1_s=-0.5 * e1 * TICK_SECONDS,
        e2_s=-0.5 * e2 * TICK_SECONDS,
        z_s=z.seconds,
    )
    return _build(x.exchange_index, components)


def power_mismatch_ticks(x: TwrExchange, curve_ref: PowerCorrectionCurve) -> float:
    """Correction difference between the two tag-to-reference messages.

    The drift ratio assumes both carry the same receive error; this reports
    how far that assumption is off, in ticks, for diagnostic use.
    """
    if x.measured_power_ref_3 is None:
        raise ValueError(f"exchange {x.exchange_index}: no third message power")
    return curve_ref.correction(x.measured_power_ref_3.value) - curve_ref.correction(
        x.measured_power_ref_2.value
    )


def estimate_z(known_distance: Meters, estimates: Sequence[RangeEstimate]) -> ZOffset:
    """Z that centers the given estimates on a known true distance.

    Any Z already applied to the inputs is backed out first, so this works
    on estimates produced with the default zero offset or with a stale one.
    """
    if not estimates:
        raise ValueError("cannot estimate Z from an empty set")
    mean_toa = math.fsum(e.toa_s - e.components.z_s for e in estimates) / len(estimates)
    return ZOffset(known_distance.value / SPEED_OF_LIGHT - mean_toa, Z_ESTIMATED)
