"""Experiment configuration: flat key-value files with one section per area.

Format example:

    [experiment]
    seed = 42
    # comment lines start with '#'
    [station_b]
    clock_rate_error = 5e-6

Unknown sections or keys are rejected with their line number, as are type
errors.  Every value has a default, so an empty text configures the stock
experiment.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace

from .core import RX_POWER_WINDOW
from .exchange import DistanceProfile, Scenario, StationModel
from .models import ChannelModel, ClockModel, PowerBiasModel, PowerMeasurementModel

KINDS = ("drift-demo", "power-calib", "twr-run", "replay")

# Sub-stream ids so independent phases of one experiment never share draws.
STREAM_BURSTS = 0
STREAM_TWR_CALIB_TAG = 1
STREAM_TWR_CALIB_REF = 2
STREAM_TWR_EXCHANGES = 3


class ConfigError(ValueError):
    """Configuration rejected; message carries file/line diagnostics."""


@dataclass(frozen=True)
class StationConfig:
    station_id: str
    clock_offset_s: float
    clock_rate_error: float
    warmup_amplitude: float
    warmup_tau_s: float = 900.0
    jitter_sigma_s: float = 1e-12
    bias_knots: tuple[tuple[float, float], ...] = (
        (-105.0, 60.0),
        (-80.0, 0.0),
        (-60.0, -40.0),
    )  # (dBm, ticks)
    bias_zero_crossing_dbm: float = -80.0
    meas_kind: str = "log_knee"
    meas_knee_dbm: float = -85.0
    meas_scale_db: float = 10.0
    meas_slope: float = 1.0

    def build(self) -> StationModel:
        return StationModel(
            station_id=self.station_id,
            clock=ClockModel(
                initial_offset_s=self.clock_offset_s,
                rate_error=self.clock_rate_error,
                warmup_amplitude=self.warmup_amplitude,
                warmup_tau_s=self.warmup_tau_s,
                jitter_sigma_s=self.jitter_sigma_s,
            ),
            bias=PowerBiasModel.from_tick_knots(self.bias_knots, self.bias_zero_crossing_dbm),
            power_meas=PowerMeasurementModel(
                kind=self.meas_kind,
                knee_dbm=self.meas_knee_dbm,
                scale_db=self.meas_scale_db,
                slope=self.meas_slope,
            ),
        )


@dataclass(frozen=True)
class ChannelConfig:
    ref_power_at_1m_dbm: float = -66.5
    path_loss_exponent: float = 2.0
    base_tx_gain_db: float = 0.0

    def build(self) -> ChannelModel:
        return ChannelModel(self.ref_power_at_1m_dbm, self.path_loss_exponent, self.base_tx_gain_db)


@dataclass(frozen=True)
class GeometryConfig:
    distance_m: float = 1.5
    velocity_mps: float = 0.0
    accel_mps2: float = 0.0
    rx_window_min_dbm: float = RX_POWER_WINDOW[0]
    rx_window_max_dbm: float = RX_POWER_WINDOW[1]

    def profile(self) -> DistanceProfile:
        return DistanceProfile(self.distance_m, self.velocity_mps, self.accel_mps2)


@dataclass(frozen=True)
class BurstConfig:
    delay_12_s: float = 2e-3
    delay_23_s: float = 2e-3
    # interval offset from an exact tick multiple so rounding phases precess
    interval_s: float = 50.0007e-3
    drift_bursts: int = 4000
    repetitions: int = 2000
    gain_start_db: float = 0.0
    gain_step_db: float = -0.5
    gain_steps: int = 61
    interference_enabled: bool = False
    interference_threshold_s: float = 500e-6
    interference_offset_s: float = 1.565e-10
    remap_threshold_dbm: float = -85.0

    def schedule(self) -> tuple[float, ...]:
        return tuple(self.gain_start_db + k * self.gain_step_db for k in range(self.gain_steps))


# Linear-rail sweep: 11 evenly spaced points from 3.515 m down to 0.562 m.
DEFAULT_DISTANCES_M = (
    3.515, 3.2197, 2.9244, 2.6291, 2.3338, 2.0385, 1.7432, 1.4479, 1.1526, 0.8573, 0.562,
)


@dataclass(frozen=True)
class TwrConfig:
    distances_m: tuple[float, ...] = DEFAULT_DISTANCES_M
    exchanges_per_point: int = 2000
    delay_12_s: float = 2e-3
    delay_23_s: float = 2e-3
    interval_s: float = 10e-3
    z_known_distance_m: float = 3.515
    z_estimate_count: int = 2000
    calib_distance_m: float = 1.5
    calib_gain_start_db: float = 10.0
    calib_gain_step_db: float = -0.5
    calib_gain_steps: int = 61
    calib_repetitions: int = 2000

    def calib_schedule(self) -> tuple[float, ...]:
        return tuple(
            self.calib_gain_start_db + k * self.calib_gain_step_db
            for k in range(self.calib_gain_steps)
        )


@dataclass(frozen=True)
class ReplayConfig:
    log_path: str = ""
    curve_tag_path: str = ""
    curve_ref_path: str = ""
    z_offset_s: float | None = None
    z_known_distance_m: float | None = None
    z_estimate_count: int = 2000


@dataclass(frozen=True)
class RadioConfig:
    """DW1000 operating point, echoed into output headers as metadata."""

    channel: int = 2
    center_frequency_mhz: float = 3993.6
    bandwidth_mhz: float = 499.2
    prf_mhz: float = 64.0
    preamble_length: int = 128
    data_rate_mbps: float = 6.81


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = ""
    seed: int = 20260816
    out_dir: str = "out"
    channel: ChannelConfig = ChannelConfig()
    geometry: GeometryConfig = GeometryConfig()
    station_a: StationConfig = StationConfig("ref", 0.0, 0.0, 0.0)
    station_b: StationConfig = StationConfig("tag", 0.37, 5e-6, -5e-6)
    burst: BurstConfig = BurstConfig()
    twr: TwrConfig = TwrConfig()
    replay: ReplayConfig = ReplayConfig()
    radio: RadioConfig = RadioConfig()

    def _base_scenario(self, **kwargs) -> Scenario:
        return Scenario(
            station_a=self.station_a.build(),
            station_b=self.station_b.build(),
            channel=self.channel.build(),
            profile=self.geometry.profile(),
            seed=self.seed,
            rx_window_dbm=(self.geometry.rx_window_min_dbm, self.geometry.rx_window_max_dbm),
            interference_enabled=self.burst.interference_enabled,
            interference_threshold_s=self.burst.interference_threshold_s,
            interference_offset_s=self.burst.interference_offset_s,
            **kwargs,
        )

    def drift_scenario(self) -> Scenario:
        """Constant-power burst train for the drift demonstration."""
        return self._base_scenario(
            delay_12_s=self.burst.delay_12_s,
            delay_23_s=self.burst.delay_23_s,
            interval_s=self.burst.interval_s,
            gain_schedule_db=(self.burst.gain_start_db,),
            repetitions=self.burst.drift_bursts,
            stream=STREAM_BURSTS,
        )

    def calib_scenario(self) -> Scenario:
        """Gain-sweep burst train; station A transmits, station B is calibrated."""
        return self._base_scenario(
            delay_12_s=self.burst.delay_12_s,
            delay_23_s=self.burst.delay_23_s,
            interval_s=self.burst.interval_s,
            gain_schedule_db=self.burst.schedule(),
            repetitions=self.burst.repetitions,
            stream=STREAM_BURSTS,
        )

    def twr_calib_scenario(self, station: str) -> Scenario:
        """Sweep that calibrates one station's curve before a ranging run.

        station "b" keeps A as transmitter (calibrates the tag's receive
        side); station "a" swaps the link direction.
        """
        if station not in ("a", "b"):
            raise ValueError(f"station must be 'a' or 'b', got {station!r}")
        scenario = self._base_scenario(
            delay_12_s=self.twr.delay_12_s,
            delay_23_s=self.twr.delay_23_s,
            interval_s=self.burst.interval_s,
            gain_schedule_db=self.twr.calib_schedule(),
            repetitions=self.twr.calib_repetitions,
            stream=STREAM_TWR_CALIB_TAG if station == "b" else STREAM_TWR_CALIB_REF,
        )
        scenario = replace(scenario, profile=DistanceProfile(self.twr.calib_distance_m))
        if station == "a":
            scenario = scenario.swapped()
        return scenario

    def twr_scenario(self, distance_m: float) -> Scenario:
        return replace(
            self._base_scenario(
                delay_12_s=self.twr.delay_12_s,
                delay_23_s=self.twr.delay_23_s,
                interval_s=self.twr.interval_s,
                stream=STREAM_TWR_EXCHANGES,
            ),
            profile=DistanceProfile(
                distance_m, self.geometry.velocity_mps, self.geometry.accel_mps2
            ),
        )

    def canonical_text(self) -> str:
        lines = ["[experiment]", f"kind = {self.kind}", f"seed = {self.seed}",
                 f"out_dir = {self.out_dir}"]
        for section, obj in _SECTION_OBJECTS(self):
            lines.append(f"[{section}]")
            for f in fields(obj):
                lines.append(f"{f.name} = {_render(getattr(obj, f.name))}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]


def _SECTION_OBJECTS(cfg: ExperimentConfig):
    return (
        ("channel", cfg.channel),
        ("geometry", cfg.geometry),
        ("station_a", cfg.station_a),
        ("station_b", cfg.station_b),
        ("burst", cfg.burst),
        ("twr", cfg.twr),
        ("replay", cfg.replay),
        ("radio", cfg.radio),
    )


def _render(value) -> str:
    if value is None:
        return ""
    if isinstance(value, tuple):
        # Pair elements (bias knots) use the power:value form the parser reads.
        return ", ".join(
            f"{_render(v[0])}:{_render(v[1])}" if isinstance(v, tuple) else _render(v)
            for v in value
        )
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _to_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}") from None


def _to_int(text: str) -> int:
    try:
        return int(text, 0)
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}") from None


def _to_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"expected true/false, got {text!r}")


def _to_floats(text: str) -> tuple[float, ...]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ConfigError("expected a comma-separated list of numbers")
    return tuple(_to_float(p) for p in parts)


def _to_knots(text: str) -> tuple[tuple[float, float], ...]:
    """Parse 'dBm:ticks, dBm:ticks, ...' pairs."""
    pairs = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" not in part:
            raise ConfigError(f"expected power:ticks pair, got {part!r}")
        p, t = part.split(":", 1)
        pairs.append((_to_float(p.strip()), _to_float(t.strip())))
    if not pairs:
        raise ConfigError("expected at least one power:ticks pair")
    return tuple(pairs)


def _to_opt_float(text: str) -> float | None:
    return None if not text.strip() else _to_float(text)


def _to_str(text: str) -> str:
    return text.strip()


_STATION_FIELDS = {
    "station_id": _to_str,
    "clock_offset_s": _to_float,
    "clock_rate_error": _to_float,
    "warmup_amplitude": _to_float,
    "warmup_tau_s": _to_float,
    "jitter_sigma_s": _to_float,
    "bias_knots": _to_knots,
    "bias_zero_crossing_dbm": _to_float,
    "meas_kind": _to_str,
    "meas_knee_dbm": _to_float,
    "meas_scale_db": _to_float,
    "meas_slope": _to_float,
}

_SCHEMA: dict[str, dict[str, object]] = {
    "experiment": {"kind": _to_str, "seed": _to_int, "out_dir": _to_str},
    "channel": {
        "ref_power_at_1m_dbm": _to_float,
        "path_loss_exponent": _to_float,
        "base_tx_gain_db": _to_float,
    },
    "geometry": {
        "distance_m": _to_float,
        "velocity_mps": _to_float,
        "accel_mps2": _to_float,
        "rx_window_min_dbm": _to_float,
        "rx_window_max_dbm": _to_float,
    },
    "station_a": _STATION_FIELDS,
    "station_b": _STATION_FIELDS,
    "burst": {
        "delay_12_s": _to_float,
        "delay_23_s": _to_float,
        "interval_s": _to_float,
        "drift_bursts": _to_int,
        "repetitions": _to_int,
        "gain_start_db": _to_float,
        "gain_step_db": _to_float,
        "gain_steps": _to_int,
        "interference_enabled": _to_bool,
        "interference_threshold_s": _to_float,
        "interference_offset_s": _to_float,
        "remap_threshold_dbm": _to_float,
    },
    "twr": {
        "distances_m": _to_floats,
        "exchanges_per_point": _to_int,
        "delay_12_s": _to_float,
        "delay_23_s": _to_float,
        "interval_s": _to_float,
        "z_known_distance_m": _to_float,
        "z_estimate_count": _to_int,
        "calib_distance_m": _to_float,
        "calib_gain_start_db": _to_float,
        "calib_gain_step_db": _to_float,
        "calib_gain_steps": _to_int,
        "calib_repetitions": _to_int,
    },
    "replay": {
        "log_path": _to_str,
        "curve_tag_path": _to_str,
        "curve_ref_path": _to_str,
        "z_offset_s": _to_opt_float,
        "z_known_distance_m": _to_opt_float,
        "z_estimate_count": _to_int,
    },
    "radio": {
        "channel": _to_int,
        "center_frequency_mhz": _to_float,
        "bandwidth_mhz": _to_float,
        "prf_mhz": _to_float,
        "preamble_length": _to_int,
        "data_rate_mbps": _to_float,
    },
}

_SECTION_TYPES = ("channel", "geometry", "station_a", "station_b", "burst", "twr", "replay", "radio")


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    values: dict[tuple[str, str], tuple[str, int]] = {}
    section = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(f"{source}:{line_no}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_no}: expected 'key = value', got {line!r}")
        if section is None:
            raise ConfigError(f"{source}:{line_no}: key outside of any [section]")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _SCHEMA[section]:
            raise ConfigError(f"{source}:{line_no}: unknown key '{key}' in section [{section}]")
        if (section, key) in values:
            first = values[(section, key)][1]
            raise ConfigError(f"{source}:{line_no}: duplicate key '{key}' (first set on line {first})")
        values[(section, key)] = (value, line_no)

    def section_kwargs(name: str) -> dict:
        kwargs = {}
        for key, conv in _SCHEMA[name].items():
            if (name, key) in values:
                raw_value, line_no = values.pop((name, key))
                try:
                    kwargs[key] = conv(raw_value)
                except ConfigError as err:
                    raise ConfigError(f"{source}:{line_no}: {name}.{key}: {err}") from None
        return kwargs

    exp = section_kwargs("experiment")
    kind = exp.get("kind", "")
    if kind and kind not in KINDS:
        raise ConfigError(f"{source}: experiment.kind must be one of {', '.join(KINDS)}")
    defaults = ExperimentConfig()
    sections = {
        name: replace(getattr(defaults, name), **section_kwargs(name))
        for name in _SECTION_TYPES
    }
    return ExperimentConfig(
        kind=kind,
        seed=exp.get("seed", defaults.seed),
        out_dir=exp.get("out_dir", defaults.out_dir),
        **sections,
    )


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    return parse_config(text, source=path)
