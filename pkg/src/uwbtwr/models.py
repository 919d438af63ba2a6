"""Station and channel models: clocks, power bias, power measurement, path loss.

All model evaluations are pure functions of their inputs plus, where noise
applies, the state of an explicitly passed random generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import TICK_SECONDS, Meters, PowerDbm, TickTime


@dataclass(frozen=True)
class ClockModel:
    """Free-running station clock.

    The local reading at true time t is

        offset + (1 + rate_error) * t + warmup_amplitude * tau * (1 - exp(-t / tau))

    The warm-up term integrates an exponentially decaying extra frequency
    component warmup_amplitude * exp(-t / tau): right after power-on the
    oscillator runs at rate_error + warmup_amplitude and settles towards
    rate_error with time constant tau.  jitter_sigma_s is white Gaussian
    noise applied per receive timestamp.
    """

    initial_offset_s: float = 0.0
    rate_error: float = 0.0
    warmup_amplitude: float = 0.0
    warmup_tau_s: float = 900.0
    jitter_sigma_s: float = 0.0

    def __post_init__(self):
        if abs(self.rate_error) >= 1e-3:
            raise ValueError(f"rate error {self.rate_error} implausibly large")
        if abs(self.warmup_amplitude) >= 1e-3:
            raise ValueError(f"warmup amplitude {self.warmup_amplitude} implausibly large")
        if self.warmup_tau_s <= 0.0:
            raise ValueError("warmup time constant must be positive")
        if self.jitter_sigma_s < 0.0:
            raise ValueError("jitter sigma must be >= 0")

    def local_seconds(self, t_true: float) -> float:
        """Continuous local clock reading before quantization and noise."""
        if t_true < 0.0:
            raise ValueError(f"true time must be >= 0, got {t_true}")
        local = self.initial_offset_s + (1.0 + self.rate_error) * t_true
        if self.warmup_amplitude != 0.0:
            tau = self.warmup_tau_s
            local += self.warmup_amplitude * tau * (1.0 - math.exp(-t_true / tau))
        return local


def local_timestamp(clock: ClockModel, t_true: float, rng: np.random.Generator | None = None) -> TickTime:
    """Counter reading this clock would latch at true time t_true.

    Jitter is drawn from rng when given; pass rng=None for commanded
    (transmit) timestamps which carry no estimation noise.
    """
    local = clock.local_seconds(t_true)
    if rng is not None and clock.jitter_sigma_s > 0.0:
        local += rng.normal(0.0, clock.jitter_sigma_s)
    return TickTime.from_seconds(local)


@dataclass(frozen=True)
class PowerBiasModel:
    """Receive timestamp error as a function of actual signal power.

    Piecewise linear in dBm, clamped to the end values outside the knot
    range.  Stronger signals trip the leading-edge detector earlier, so the
    bias is monotonically non-increasing with power and crosses zero at
    zero_crossing_dbm (between -80 and -75 dBm for the default model).
    """

    knots: tuple[tuple[float, float], ...]  # (actual power dBm, bias seconds), ascending power
    zero_crossing_dbm: float = -80.0

    def __post_init__(self):
        if not self.knots:
            raise ValueError("bias model needs at least one knot")
        powers = [p for p, _ in self.knots]
        biases = [b for _, b in self.knots]
        if any(b - a <= 0.0 for a, b in zip(powers, powers[1:])):
            raise ValueError("bias knot powers must be strictly ascending")
        if any(b > a for a, b in zip(biases, biases[1:])):
            raise ValueError("bias must be monotonically non-increasing with power")
        if abs(self._interp(self.zero_crossing_dbm)) > 1e-15:
            raise ValueError(f"bias does not vanish at {self.zero_crossing_dbm} dBm")

    def _interp(self, power_dbm: float) -> float:
        powers = [p for p, _ in self.knots]
        biases = [b for _, b in self.knots]
        return float(np.interp(power_dbm, powers, biases))

    @classmethod
    def from_tick_knots(cls, knots, zero_crossing_dbm: float = -80.0) -> "PowerBiasModel":
        """Build from (dBm, bias in ticks) pairs."""
        return cls(
            tuple((float(p), float(t) * TICK_SECONDS) for p, t in knots),
            zero_crossing_dbm,
        )

    @classmethod
    def default(cls) -> "PowerBiasModel":
        # Early trigger (negative bias) above -80 dBm, late below, spanning
        # roughly +60 to -40 ticks across the usable power range.
        return cls.from_tick_knots([(-105.0, 60.0), (-80.0, 0.0), (-60.0, -40.0)])

    @classmethod
    def zero(cls) -> "PowerBiasModel":
        return cls(((-120.0, 0.0), (-40.0, 0.0)))


def bias_seconds(model: PowerBiasModel, actual: PowerDbm) -> float:
    return model._interp(actual.value)


@dataclass(frozen=True)
class PowerMeasurementModel:
    """Distortion of the power register reading at strong signals.

    The reported power tracks the actual receive power up to knee_dbm
    (about -85 dBm) and compresses above it.  Both compression shapes are
    strictly increasing, stay at or below the actual power, and are
    invertible:

      log_knee     measured = knee + scale * ln(1 + (actual - knee) / scale)
      linear_knee  measured = knee + slope * (actual - knee),  0 < slope <= 1
    """

    kind: str = "log_knee"  # identity | log_knee | linear_knee
    knee_dbm: float = -85.0
    scale_db: float = 10.0
    slope: float = 1.0

    def __post_init__(self):
        if self.kind not in ("identity", "log_knee", "linear_knee"):
            raise ValueError(f"unknown measurement model kind {self.kind!r}")
        if self.kind == "log_knee" and self.scale_db <= 0.0:
            raise ValueError("log knee scale must be positive")
        if self.kind == "linear_knee" and not 0.0 < self.slope <= 1.0:
            raise ValueError("linear knee slope must be in (0, 1]")

    def measure(self, actual_dbm: float) -> float:
        if self.kind == "identity" or actual_dbm <= self.knee_dbm:
            return actual_dbm
        over = actual_dbm - self.knee_dbm
        if self.kind == "log_knee":
            return self.knee_dbm + self.scale_db * math.log1p(over / self.scale_db)
        return self.knee_dbm + self.slope * over


def measure_power(model: PowerMeasurementModel, actual: PowerDbm) -> PowerDbm:
    return PowerDbm(model.measure(actual.value))


@dataclass(frozen=True)
class ChannelModel:
    """Log-distance path loss referenced to the receive power at 1 m."""

    ref_power_at_1m_dbm: float = -66.5
    path_loss_exponent: float = 2.0
    base_tx_gain_db: float = 0.0

    def __post_init__(self):
        if self.path_loss_exponent <= 0.0:
            raise ValueError("path loss exponent must be positive")


def rx_power(channel: ChannelModel, distance: Meters, tx_gain_db: float = 0.0) -> PowerDbm:
    """Actual power arriving at the receiver for a given TX gain setting."""
    if distance.value <= 0.0:
        raise ValueError("propagation distance must be positive")
    loss = 10.0 * channel.path_loss_exponent * math.log10(distance.value)
    return PowerDbm(channel.ref_power_at_1m_dbm + channel.base_tx_gain_db + tx_gain_db - loss)
