"""Deterministic simulation and correction toolkit for UWB two-way ranging.

The package simulates DW1000-style stations exchanging timestamped messages,
applies the three-message clock drift correction, self-calibrates the
power-dependent receive timestamp error, and estimates corrected times of
flight.  Recorded hardware logs replay through the same pipelines.
"""

from .calib import (
    CalibrationError,
    DriftObservables,
    PowerCorrectionCurve,
    PowerRemap,
    burst_observables,
    calibrate_power,
    drift_ratio,
    drift_ratio_from_spans,
    drift_residual,
    fit_power_remap,
    lookup_correction,
)
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .core import (
    RX_POWER_WINDOW,
    SPEED_OF_LIGHT,
    TICK_METERS,
    TICK_SECONDS,
    TICKS_PER_SECOND,
    TIMESTAMP_BITS,
    TIMESTAMP_MODULUS,
    Meters,
    PowerDbm,
    TickSpan,
    TickTime,
    seconds_to_ticks,
    span_to_meters,
    ticks_to_seconds,
    wrap_diff,
)
from .exchange import (
    BurstRecord,
    DistanceProfile,
    Scenario,
    StationModel,
    TwrExchange,
    run_burst,
    run_sweep,
    run_twr,
)
from .logio import LogRecord, ReplayError, read_curve, read_records, write_curve, write_records
from .models import (
    ChannelModel,
    ClockModel,
    PowerBiasModel,
    PowerMeasurementModel,
    bias_seconds,
    local_timestamp,
    measure_power,
    rx_power,
)
from .ranging import (
    RangeComponents,
    RangeEstimate,
    ZOffset,
    estimate_z,
    power_mismatch_ticks,
    toa_basic,
    toa_corrected,
)

__version__ = "0.1.0"

__all__ = [
    "BurstRecord",
    "CalibrationError",
    "ChannelModel",
    "ClockModel",
    "ConfigError",
    "DistanceProfile",
    "DriftObservables",
    "ExperimentConfig",
    "LogRecord",
    "Meters",
    "PowerBiasModel",
    "PowerCorrectionCurve",
    "PowerDbm",
    "PowerMeasurementModel",
    "PowerRemap",
    "RX_POWER_WINDOW",
    "RangeComponents",
    "RangeEstimate",
    "ReplayError",
    "SPEED_OF_LIGHT",
    "Scenario",
    "StationModel",
    "TICKS_PER_SECOND",
    "TICK_METERS",
    "TICK_SECONDS",
    "TIMESTAMP_BITS",
    "TIMESTAMP_MODULUS",
    "TickSpan",
    "TickTime",
    "TwrExchange",
    "ZOffset",
    "bias_seconds",
    "burst_observables",
    "calibrate_power",
    "drift_ratio",
    "drift_ratio_from_spans",
    "drift_residual",
    "estimate_z",
    "fit_power_remap",
    "load_config",
    "local_timestamp",
    "lookup_correction",
    "measure_power",
    "parse_config",
    "power_mismatch_ticks",
    "read_curve",
    "read_records",
    "run_burst",
    "run_sweep",
    "run_twr",
    "rx_power",
    "seconds_to_ticks",
    "span_to_meters",
    "ticks_to_seconds",
    "toa_basic",
    "toa_corrected",
    "wrap_diff",
    "write_curve",
    "write_records",
]
