"""Simulation of three-message calibration bursts and two-way ranging exchanges.

Message pattern for a calibration burst (station A transmits, station B
receives): P1 and P3 are sent at the base gain, P2 at the gain selected by
the sweep schedule.  A two-way ranging exchange sends message 1 from the
reference (station A) to the tag (station B); the tag replies with messages
2 and 3.

Timing noise model: transmit timestamps are commanded through delayed-send,
so they carry quantization only.  Receive timestamps get the receiver's
power-dependent bias plus its Gaussian jitter before quantization to the
40 bit counter.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import RX_POWER_WINDOW, SPEED_OF_LIGHT, Meters, PowerDbm, TickTime, wrap_diff
from .models import (
    ChannelModel,
    ClockModel,
    PowerBiasModel,
    PowerMeasurementModel,
    bias_seconds,
    measure_power,
    rx_power,
)


@dataclass(frozen=True)
class StationModel:
    station_id: str
    clock: ClockModel
    bias: PowerBiasModel
    power_meas: PowerMeasurementModel


@dataclass(frozen=True)
class DistanceProfile:
    """Separation between the stations as a function of true time."""

    start_m: float
    velocity_mps: float = 0.0
    accel_mps2: float = 0.0

    def __post_init__(self):
        if self.start_m <= 0.0:
            raise ValueError("start distance must be positive")

    def distance_at(self, t_true: float) -> float:
        d = self.start_m + self.velocity_mps * t_true + 0.5 * self.accel_mps2 * t_true * t_true
        if d <= 0.0:
            raise ValueError(f"distance profile reached {d:.3f} m at t={t_true:.6f} s")
        return d


@dataclass(frozen=True)
class Scenario:
    """Everything needed to reproduce a deterministic run.

    delay_12_s and delay_23_s are the true-time gaps between consecutive
    messages of one burst or exchange (2 ms each by default).  Successive
    bursts start interval_s apart.  gain_schedule_db applies to P2 of
    calibration bursts; each entry is repeated `repetitions` times.  The
    seed/stream pair pins every random draw of the run.
    """

    station_a: StationModel
    station_b: StationModel
    channel: ChannelModel
    profile: DistanceProfile
    delay_12_s: float = 2e-3
    delay_23_s: float = 2e-3
    interval_s: float = 50e-3
    gain_schedule_db: tuple[float, ...] = (0.0,)
    repetitions: int = 1
    seed: int = 0
    stream: int = 0
    rx_window_dbm: tuple[float, float] = RX_POWER_WINDOW
    interference_enabled: bool = False
    interference_threshold_s: float = 500e-6
    interference_offset_s: float = 1.565e-10  # ~10 ticks added to P3 reception

    def __post_init__(self):
        if self.delay_12_s <= 0.0 or self.delay_23_s <= 0.0:
            raise ValueError("inter-message delays must be positive")
        if self.interval_s <= 0.0:
            raise ValueError("burst interval must be positive")
        if not self.gain_schedule_db:
            raise ValueError("gain schedule must not be empty")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")

    @property
    def burst_count(self) -> int:
        return len(self.gain_schedule_db) * self.repetitions

    def swapped(self, stream: int | None = None) -> "Scenario":
        """Same link with the transmit/receive roles exchanged."""
        out = replace(self, station_a=self.station_b, station_b=self.station_a)
        if stream is not None:
            out = replace(out, stream=stream)
        return out


@dataclass(frozen=True)
class BurstRecord:
    """Timestamps and power readings of one three-message burst."""

    burst_index: int
    tx_times: tuple[TickTime, TickTime, TickTime]
    rx_times: tuple[TickTime, TickTime, TickTime]
    measured_power_dbm: tuple[PowerDbm, PowerDbm, PowerDbm]
    tx_gain_p2_db: float

    def __post_init__(self):
        for times, side in ((self.tx_times, "tx"), (self.rx_times, "rx")):
            if wrap_diff(times[0], times[1]).span <= 0 or wrap_diff(times[1], times[2]).span <= 0:
                raise ValueError(f"burst {self.burst_index}: {side} timestamps not strictly ordered")


@dataclass(frozen=True)
class TwrExchange:
    """Timestamps of one two-way ranging exchange.

    Naming follows role and clock: t2r_rx is the reference station's receive
    timestamp of message 2.  The third message may be absent in replayed
    hardware logs; basic two-message processing still works without it.
    """

    exchange_index: int
    t1r_tx: TickTime
    t1t_rx: TickTime
    t2t_tx: TickTime
    t2r_rx: TickTime
    t3t_tx: TickTime | None
    t3r_rx: TickTime | None
    measured_power_tag: PowerDbm
    measured_power_ref_2: PowerDbm
    measured_power_ref_3: PowerDbm | None

    def __post_init__(self):
        if wrap_diff(self.t1t_rx, self.t2t_tx).span <= 0:
            raise ValueError(f"exchange {self.exchange_index}: tag reply precedes its reception")
        if wrap_diff(self.t1r_tx, self.t2r_rx).span <= 0:
            raise ValueError(f"exchange {self.exchange_index}: reply received before transmission")
        if (self.t3t_tx is None) != (self.t3r_rx is None):
            raise ValueError(f"exchange {self.exchange_index}: third message half missing")
        if self.t3t_tx is not None:
            if wrap_diff(self.t2t_tx, self.t3t_tx).span <= 0:
                raise ValueError(f"exchange {self.exchange_index}: tag transmissions not ordered")
            if wrap_diff(self.t2r_rx, self.t3r_rx).span <= 0:
                raise ValueError(f"exchange {self.exchange_index}: reference receptions not ordered")

    @property
    def has_third_message(self) -> bool:
        return self.t3t_tx is not None


def _check_window(scenario: Scenario, actual: PowerDbm) -> None:
    lo, hi = scenario.rx_window_dbm
    if not lo <= actual.value <= hi:
        raise ValueError(
            f"receive power {actual.value:.1f} dBm outside plausible window [{lo}, {hi}]"
        )


def _rng_for(scenario: Scenario, index: int) -> np.random.Generator:
    return np.random.default_rng((scenario.seed, scenario.stream, index))


def run_burst(scenario: Scenario, burst_index: int) -> BurstRecord:
    """Simulate one calibration burst.  Deterministic in (scenario, index)."""
    if not 0 <= burst_index < scenario.burst_count:
        raise ValueError(f"burst index {burst_index} outside schedule of {scenario.burst_count}")
    gain_p2 = scenario.gain_schedule_db[burst_index // scenario.repetitions]
    rng = _rng_for(scenario, burst_index)
    tx_st, rx_st = scenario.station_a, scenario.station_b

    t0 = burst_index * scenario.interval_s
    send_times = (
        t0,
        t0 + scenario.delay_12_s,
        t0 + scenario.delay_12_s + scenario.delay_23_s,
    )
    gains = (0.0, gain_p2, 0.0)
    interference = (
        scenario.interference_enabled
        and scenario.delay_23_s < scenario.interference_threshold_s
    )

    tx_times, rx_times, measured = [], [], []
    for i in range(3):
        distance = Meters(scenario.profile.distance_at(send_times[i]))
        actual = rx_power(scenario.channel, distance, gains[i])
        _check_window(scenario, actual)
        arrival = send_times[i] + distance.value / SPEED_OF_LIGHT

        tx_times.append(TickTime.from_seconds(tx_st.clock.local_seconds(send_times[i])))
        local = rx_st.clock.local_seconds(arrival) + bias_seconds(rx_st.bias, actual)
        if rx_st.clock.jitter_sigma_s > 0.0:
            local += rng.normal(0.0, rx_st.clock.jitter_sigma_s)
        if i == 2 and interference:
            # Receiver still settling from P2 at short spacing; latches late.
            local += scenario.interference_offset_s
        rx_times.append(TickTime.from_seconds(local))
        measured.append(measure_power(rx_st.power_meas, actual))

    return BurstRecord(burst_index, tuple(tx_times), tuple(rx_times), tuple(measured), gain_p2)


def run_sweep(scenario: Scenario) -> list[list[BurstRecord]]:
    """All bursts of the schedule, grouped by gain step, in emission order."""
    reps = scenario.repetitions
    return [
        [run_burst(scenario, step * reps + k) for k in range(reps)]
        for step in range(len(scenario.gain_schedule_db))
    ]


def run_twr(scenario: Scenario, exchange_index: int) -> TwrExchange:
    """Simulate one two-way ranging exchange.

    Message 1 goes reference -> tag; the tag replies after delay_12_s and
    sends the drift-sampling third message delay_23_s later.  All three
    messages are sent at the base gain.  Distances are evaluated at each
    message's true emission time, so moving profiles are supported.
    """
    if exchange_index < 0:
        raise ValueError("exchange index must be >= 0")
    rng = _rng_for(scenario, exchange_index)
    ref, tag = scenario.station_a, scenario.station_b

    def receive(station, t_arrival: float, actual: PowerDbm) -> TickTime:
        local = station.clock.local_seconds(t_arrival) + bias_seconds(station.bias, actual)
        if station.clock.jitter_sigma_s > 0.0:
            local += rng.normal(0.0, station.clock.jitter_sigma_s)
        return TickTime.from_seconds(local)

    t1 = exchange_index * scenario.interval_s
    d1 = Meters(scenario.profile.distance_at(t1))
    p1 = rx_power(scenario.channel, d1)
    _check_window(scenario, p1)
    arrival1 = t1 + d1.value / SPEED_OF_LIGHT
    t1r_tx = TickTime.from_seconds(ref.clock.local_seconds(t1))
    t1t_rx = receive(tag, arrival1, p1)

    t2 = arrival1 + scenario.delay_12_s
    d2 = Meters(scenario.profile.distance_at(t2))
    p2 = rx_power(scenario.channel, d2)
    _check_window(scenario, p2)
    arrival2 = t2 + d2.value / SPEED_OF_LIGHT
    t2t_tx = TickTime.from_seconds(tag.clock.local_seconds(t2))
    t2r_rx = receive(ref, arrival2, p2)

    t3 = t2 + scenario.delay_23_s
    d3 = Meters(scenario.profile.distance_at(t3))
    p3 = rx_power(scenario.channel, d3)
    _check_window(scenario, p3)
    arrival3 = t3 + d3.value / SPEED_OF_LIGHT
    t3t_tx = TickTime.from_seconds(tag.clock.local_seconds(t3))
    t3r_rx = receive(ref, arrival3, p3)

    return TwrExchange(
        exchange_index,
        t1r_tx,
        t1t_rx,
        t2t_tx,
        t2r_rx,
        t3t_tx,
        t3r_rx,
        measure_power(tag.power_meas, p1),
        measure_power(ref.power_meas, p2),
        measure_power(ref.power_meas, p3),
    )
