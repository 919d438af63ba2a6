"""Clock drift correction and signal-power self-calibration.

Drift correction interpolates the receive/transmit span mismatch of a
three-message burst linearly over the burst, which cancels any affine clock
difference exactly (up to tick quantization):

    residual = C12 - C13 * dt12_tx / dt13_tx,   Cnm = dtnm_rx - dtnm_tx

Because P1 and P3 run at constant power while P2 sweeps the TX gain ladder,
the residual of each sweep step isolates the power-dependent timestamp error
of P2 relative to the P1/P3 operating point.  All residuals are kept as
fractional ticks; nothing is re-quantized before the final range output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import PowerDbm, TickSpan, wrap_diff
from .exchange import BurstRecord


class CalibrationError(ValueError):
    """Calibration input rejected; message carries the diagnostic."""


@dataclass(frozen=True)
class DriftObservables:
    """Span quadruple of one burst, as seen by the two clocks."""

    dt12_tx: TickSpan
    dt13_tx: TickSpan
    dt12_rx: TickSpan
    dt13_rx: TickSpan

    def __post_init__(self):
        if not 0 < self.dt12_tx.span < self.dt13_tx.span:
            raise ValueError(
                f"malformed burst: need 0 < dt12_tx < dt13_tx, got "
                f"{self.dt12_tx.span}, {self.dt13_tx.span}"
            )


def burst_observables(record: BurstRecord) -> DriftObservables:
    t1, t2, t3 = record.tx_times
    r1, r2, r3 = record.rx_times
    return DriftObservables(
        dt12_tx=wrap_diff(t1, t2),
        dt13_tx=wrap_diff(t1, t3),
        dt12_rx=wrap_diff(r1, r2),
        dt13_rx=wrap_diff(r1, r3),
    )


def drift_ratio_from_spans(tx_span: TickSpan, rx_span: TickSpan) -> float:
    """Relative rate of the receiving clock against the transmitting one."""
    if tx_span.span == 0:
        raise ZeroDivisionError("transmit span is zero; malformed burst")
    return (rx_span.span - tx_span.span) / tx_span.span


def drift_ratio(obs: DriftObservables) -> float:
    """C13 / dt13_tx, the per-second clock difference over the burst."""
    return drift_ratio_from_spans(obs.dt13_tx, obs.dt13_rx)


def drift_residual(obs: DriftObservables) -> float:
    """Drift-corrected span mismatch of P2, in fractional ticks.

    Zero for ideal affine clocks regardless of rate difference; what remains
    is quantization, noise, and any power-dependent timestamp error of P2
    relative to the P1/P3 power.
    """
    c12 = obs.dt12_rx.span - obs.dt12_tx.span
    c13 = obs.dt13_rx.span - obs.dt13_tx.span
    return c12 - c13 * (obs.dt12_tx.span / obs.dt13_tx.span)


@dataclass(frozen=True)
class PowerCorrectionCurve:
    """Correction to add to a receive timestamp, indexed by measured power.

    Knots are (measured power dBm, correction in fractional ticks) with
    strictly ascending powers.  The curve is anchored so the correction at
    reference_power_dbm (the P1/P3 operating point of the calibration
    sweep) is zero; any absolute offset common to all powers is unknowable
    from timestamps alone and ends up in the ranging Z offset instead.
    """

    knots: tuple[tuple[float, float], ...]
    reference_power_dbm: float

    def __post_init__(self):
        if not self.knots:
            raise ValueError("correction curve needs at least one knot")
        powers = [p for p, _ in self.knots]
        if any(b - a <= 0.0 for a, b in zip(powers, powers[1:])):
            raise ValueError("curve knot powers must be strictly ascending")

    def correction(self, measured_dbm: float) -> float:
        powers = [p for p, _ in self.knots]
        values = [v for _, v in self.knots]
        return float(np.interp(measured_dbm, powers, values))

    def covers(self, measured_dbm: float) -> bool:
        """False when a lookup at this power would clamp to an end knot."""
        return self.knots[0][0] <= measured_dbm <= self.knots[-1][0]


def lookup_correction(curve: PowerCorrectionCurve, measured: PowerDbm) -> float:
    """Correction in fractional ticks, clamped outside the knot range."""
    return curve.correction(measured.value)


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)


def _step_gain(records: Sequence[BurstRecord]) -> float:
    gains = {r.tx_gain_p2_db for r in records}
    if len(gains) != 1:
        raise CalibrationError(f"mixed P2 gains within one sweep step: {sorted(gains)}")
    return gains.pop()


def calibrate_power(sweep: Sequence[Sequence[BurstRecord]]) -> PowerCorrectionCurve:
    """Build a correction curve from a gain-sweep of calibration bursts.

    One knot per gain step: measured P2 power averaged over the step's
    repetitions against the negated mean drift residual.  Means use exact
    summation, so the result does not depend on the order of repetitions
    within a step.
    """
    if len(sweep) < 3:
        raise CalibrationError(f"need at least 3 gain steps, got {len(sweep)}")
    step_powers = []
    step_corrections = []
    ref_powers = []
    for records in sweep:
        if not records:
            raise CalibrationError("empty sweep step")
        _step_gain(records)
        step_powers.append(_mean(r.measured_power_dbm[1].value for r in records))
        step_corrections.append(-_mean(drift_residual(burst_observables(r)) for r in records))
        for r in records:
            ref_powers.append(r.measured_power_dbm[0].value)
            ref_powers.append(r.measured_power_dbm[2].value)

    deltas = np.diff(step_powers)
    if not (np.all(deltas > 0.0) or np.all(deltas < 0.0)):
        raise CalibrationError(
            "measured P2 powers are not monotonic across the sweep; "
            "suspect interference between messages or too few repetitions"
        )

    reference_power = _mean(ref_powers)
    knots = sorted(zip(step_powers, step_corrections))
    # Anchor: zero correction at the P1/P3 operating point.
    at_ref = float(np.interp(reference_power, [p for p, _ in knots], [c for _, c in knots]))
    knots = tuple((p, c - at_ref) for p, c in knots)
    return PowerCorrectionCurve(knots, reference_power)


@dataclass(frozen=True)
class PowerRemap:
    """Linear map from measured to actual power over the distorted region.

    Below valid_from_dbm the register reading is trusted as-is.  The fit
    residual records how well a line describes the distortion across the
    sweep that produced the map.
    """

    slope: float
    intercept_db: float
    valid_from_dbm: float
    valid_to_dbm: float
    fit_residual_db: float

    def actual_power(self, measured_dbm: float) -> float:
        if measured_dbm < self.valid_from_dbm:
            return measured_dbm
        return self.slope * measured_dbm + self.intercept_db


def fit_power_remap(
    sweep: Sequence[Sequence[BurstRecord]],
    tx_step_db: float,
    linear_threshold_dbm: float = -85.0,
) -> PowerRemap:
    """Recover actual receive powers from a gain sweep's measured powers.

    Readings below linear_threshold_dbm are undistorted, so the sub-threshold
    steps pin the absolute level of the known TX gain ladder (tx_step_db
    apart).  Extrapolating that line across the whole sweep yields the actual
    power at every step; a line fitted to (measured, actual) over the
    distorted steps is returned as the remap.
    """
    if tx_step_db <= 0.0:
        raise CalibrationError("tx_step_db must be a positive step size")
    gains = [_step_gain(records) for records in sweep]
    measured = [_mean(r.measured_power_dbm[1].value for r in records) for records in sweep]

    order = sorted(range(len(gains)), key=lambda i: gains[i])
    gains = [gains[i] for i in order]
    measured = [measured[i] for i in order]
    ladder = [g - gains[0] for g in gains]
    for k, x in enumerate(ladder):
        if abs(x - k * tx_step_db) > 1e-9:
            raise CalibrationError(
                f"gain schedule is not a uniform {tx_step_db} dB ladder at step {k}"
            )

    below = [k for k in range(len(measured)) if measured[k] < linear_threshold_dbm]
    if len(below) < 3:
        raise CalibrationError(
            f"need >= 3 steps measured below {linear_threshold_dbm} dBm to anchor "
            f"the ladder, got {len(below)}"
        )
    anchor_slope, anchor_icpt = np.polyfit([ladder[k] for k in below], [measured[k] for k in below], 1)
    actual = [anchor_icpt + anchor_slope * x for x in ladder]

    distorted = [k for k in range(len(measured)) if measured[k] >= linear_threshold_dbm]
    if len(distorted) < 2:
        return PowerRemap(1.0, 0.0, linear_threshold_dbm, linear_threshold_dbm, 0.0)
    slope, intercept = np.polyfit([measured[k] for k in distorted], [actual[k] for k in distorted], 1)
    residual = max(abs(slope * measured[k] + intercept - actual[k]) for k in distorted)
    return PowerRemap(
        float(slope),
        float(intercept),
        linear_threshold_dbm,
        max(measured[k] for k in distorted),
        float(residual),
    )
