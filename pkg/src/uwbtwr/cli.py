"""Command line experiment runner.

Subcommands:

  drift-demo   constant-power burst train; per-burst drift residual series
  power-calib  TX gain sweep; correction curve + measured-to-actual remap
  twr-run      two-way ranging sweep with self-calibration and Z estimation
  replay       run the same pipelines over a recorded timestamp log

Every run first dumps the raw timestamp records, then parses that file back
and computes all derived tables from the parsed rows.  A replay of the dump
therefore reproduces the derived tables exactly; only the '#' provenance
headers differ.  Fixed seed plus fixed config means byte-identical reruns.
"""

from __future__ import annotations

import argparse
import math
import os
import statistics
import sys
from dataclasses import replace
from typing import Sequence

from .calib import (
    CalibrationError,
    PowerCorrectionCurve,
    PowerRemap,
    burst_observables,
    calibrate_power,
    drift_ratio,
    drift_residual,
    fit_power_remap,
)
from .config import ConfigError, ExperimentConfig, load_config
from .core import SPEED_OF_LIGHT, TICK_METERS, Meters
from .exchange import BurstRecord, TwrExchange, run_burst, run_twr
from .logio import (
    LogRecord,
    ReplayError,
    burst_to_records,
    format_float,
    group_kind,
    group_records,
    group_to_burst,
    group_to_twr,
    read_curve,
    read_records,
    twr_to_records,
    write_curve,
    write_records,
    write_table,
)
from .ranging import Z_CONFIGURED, ZERO_Z, ZOffset, estimate_z, toa_basic, toa_corrected


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)


def _std(values) -> float:
    values = list(values)
    return statistics.stdev(values) if len(values) > 1 else 0.0


def _metadata(cfg: ExperimentConfig, kind: str) -> dict[str, str]:
    radio = cfg.radio
    return {
        "tool": "uwbtwr",
        "experiment": kind,
        "seed": str(cfg.seed),
        "config_sha256": cfg.config_hash(),
        "radio_channel": str(radio.channel),
        "center_frequency_mhz": format_float(radio.center_frequency_mhz),
        "bandwidth_mhz": format_float(radio.bandwidth_mhz),
        "prf_mhz": format_float(radio.prf_mhz),
        "preamble_length": str(radio.preamble_length),
        "data_rate_mbps": format_float(radio.data_rate_mbps),
    }


def _parse_burst_log(path: str) -> tuple[list[BurstRecord], int]:
    """Parsed complete bursts plus the count of skipped incomplete groups."""
    records, _ = read_records(path)
    groups = group_records(records)
    if not groups:
        raise ReplayError(f"{path}: log contains no record groups")
    bursts, skipped = [], 0
    for group in groups:
        if not group.complete_for("burst"):
            skipped += 1
            continue
        if group_kind(group) != "burst":
            raise ReplayError(
                f"{path}: group {group.group_id} is a ranging exchange, not a one-way burst"
            )
        bursts.append(group_to_burst(group))
    if not bursts:
        raise ReplayError(f"{path}: log contains no complete bursts")
    return bursts, skipped


def _parse_twr_log(path: str) -> tuple[list[TwrExchange], int, str, str]:
    """Parsed complete exchanges, skipped count, and the (ref, tag) station ids."""
    records, _ = read_records(path)
    groups = group_records(records)
    if not groups:
        raise ReplayError(f"{path}: log contains no record groups")
    exchanges, skipped = [], 0
    ref_id = tag_id = None
    for group in groups:
        if not group.complete_for("twr"):
            skipped += 1
            continue
        if group_kind(group) != "twr":
            raise ReplayError(
                f"{path}: group {group.group_id} is a one-way burst, not a ranging exchange"
            )
        if ref_id is None:
            ref_id = group.tx[1].station_id
            tag_id = group.rx[1].station_id
        elif group.tx[1].station_id != ref_id or group.rx[1].station_id != tag_id:
            raise ReplayError(f"{path}: group {group.group_id} swaps the station roles")
        exchanges.append(group_to_twr(group))
    if not exchanges:
        raise ReplayError(f"{path}: log contains no complete exchanges")
    return exchanges, skipped, ref_id, tag_id


def _split_sweep(bursts: Sequence[BurstRecord]) -> list[list[BurstRecord]]:
    """Split a burst list into contiguous runs of equal P2 gain."""
    steps: list[list[BurstRecord]] = []
    for burst in bursts:
        if steps and steps[-1][0].tx_gain_p2_db == burst.tx_gain_p2_db:
            steps[-1].append(burst)
        else:
            steps.append([burst])
    return steps


def _drift_outputs(out_dir: str, bursts: Sequence[BurstRecord], skipped: int,
                   metadata: dict[str, str]) -> dict[str, float]:
    rows = []
    sum_c12_m = 0.0
    sum_residual_m = 0.0
    residuals = []
    ratios = []
    c12_values = []
    for n, burst in enumerate(bursts, start=1):
        obs = burst_observables(burst)
        c12 = obs.dt12_rx.span - obs.dt12_tx.span
        c13 = obs.dt13_rx.span - obs.dt13_tx.span
        residual = drift_residual(obs)
        residuals.append(residual)
        ratios.append(drift_ratio(obs))
        c12_values.append(c12)
        sum_c12_m += c12 * TICK_METERS
        sum_residual_m += residual * TICK_METERS
        rows.append((
            burst.burst_index,
            obs.dt12_tx.span,
            obs.dt13_tx.span,
            c12,
            c13,
            float(residual),
            c12 * TICK_METERS,
            residual * TICK_METERS,
            sum_c12_m / n,
            sum_residual_m / n,
        ))
    write_table(
        os.path.join(out_dir, "drift_series.csv"),
        ("group_id", "dt12_tx_ticks", "dt13_tx_ticks", "c12_ticks", "c13_ticks",
         "residual_ticks", "c12_m", "residual_m", "mean_c12_m", "mean_residual_m"),
        rows,
        metadata,
    )
    stats = {
        "bursts": len(bursts),
        "skipped_groups": skipped,
        "mean_c12_ticks": _mean(c12_values),
        "mean_c12_m": _mean(c12_values) * TICK_METERS,
        "mean_drift_ratio": _mean(ratios),
        "mean_residual_ticks": _mean(residuals),
        "mean_residual_m": _mean(residuals) * TICK_METERS,
        "std_residual_ticks": _std(residuals),
        "max_abs_residual_ticks": max(abs(r) for r in residuals),
    }
    write_table(os.path.join(out_dir, "summary.csv"), ("metric", "value"),
                list(stats.items()), metadata)
    return stats


def _infer_gain_step(steps: Sequence[Sequence[BurstRecord]]) -> float:
    gains = sorted(step[0].tx_gain_p2_db for step in steps)
    diffs = [b - a for a, b in zip(gains, gains[1:])]
    if not diffs or any(abs(d - diffs[0]) > 1e-9 for d in diffs):
        raise CalibrationError("P2 gains do not form a uniform ladder")
    if diffs[0] <= 0.0:
        raise CalibrationError("P2 gain ladder has repeated values")
    return diffs[0]


def _calib_outputs(out_dir: str, steps: Sequence[Sequence[BurstRecord]], skipped: int,
                   station_id: str, remap_threshold_dbm: float,
                   metadata: dict[str, str]) -> tuple[PowerCorrectionCurve, str]:
    curve = calibrate_power(steps)
    curve_path = os.path.join(out_dir, f"correction_curve_{station_id}.csv")
    write_curve(curve_path, curve, station_id, metadata)

    rows = []
    for index, step in enumerate(steps):
        p2 = _mean(r.measured_power_dbm[1].value for r in step)
        rows.append((
            index,
            step[0].tx_gain_p2_db,
            len(step),
            _mean(r.measured_power_dbm[0].value for r in step),
            p2,
            _mean(r.measured_power_dbm[2].value for r in step),
            _mean(drift_residual(burst_observables(r)) for r in step),
            curve.correction(p2),
        ))
    write_table(
        os.path.join(out_dir, "calib_series.csv"),
        ("step", "tx_gain_db", "bursts", "mean_p1_dbm", "mean_p2_dbm", "mean_p3_dbm",
         "mean_residual_ticks", "correction_ticks"),
        rows,
        metadata,
    )

    remap: PowerRemap | None = None
    remap_note = ""
    try:
        remap = fit_power_remap(steps, _infer_gain_step(steps), remap_threshold_dbm)
    except CalibrationError as err:
        remap_note = str(err)
    if remap is not None:
        remap_meta = dict(metadata)
        remap_meta.update({
            "station_id": station_id,
            "slope": format_float(remap.slope),
            "intercept_db": format_float(remap.intercept_db),
            "valid_from_dbm": format_float(remap.valid_from_dbm),
            "valid_to_dbm": format_float(remap.valid_to_dbm),
            "fit_residual_db": format_float(remap.fit_residual_db),
        })
        write_table(
            os.path.join(out_dir, f"power_remap_{station_id}.csv"),
            ("measured_dbm", "actual_dbm"),
            [(row[4], remap.actual_power(row[4])) for row in rows],
            remap_meta,
        )

    stats = [
        ("steps", len(steps)),
        ("bursts", sum(len(s) for s in steps)),
        ("skipped_groups", skipped),
        ("station_id", station_id),
        ("reference_power_dbm", curve.reference_power_dbm),
        ("curve_min_dbm", curve.knots[0][0]),
        ("curve_max_dbm", curve.knots[-1][0]),
        ("max_abs_correction_ticks", max(abs(c) for _, c in curve.knots)),
        ("remap_slope", remap.slope if remap else ""),
        ("remap_intercept_db", remap.intercept_db if remap else ""),
        ("remap_valid_from_dbm", remap.valid_from_dbm if remap else ""),
        ("remap_valid_to_dbm", remap.valid_to_dbm if remap else ""),
        ("remap_fit_residual_db", remap.fit_residual_db if remap else ""),
        ("remap_note", remap_note),
    ]
    write_table(os.path.join(out_dir, "summary.csv"), ("metric", "value"), stats, metadata)
    return curve, remap_note


def _resolve_z(exchanges: Sequence[TwrExchange], curve_tag: PowerCorrectionCurve,
               curve_ref: PowerCorrectionCurve, z_offset_s: float | None,
               z_known_m: float | None, z_count: int) -> ZOffset:
    if z_offset_s is not None:
        return ZOffset(z_offset_s, Z_CONFIGURED)
    if z_known_m is None:
        raise ReplayError(
            "no Z offset available: set z_offset_s or z_known_distance_m"
        )
    head = exchanges[: max(1, z_count)]
    estimates = [toa_corrected(x, curve_tag, curve_ref, ZERO_Z) for x in head]
    return estimate_z(Meters(z_known_m), estimates)


def _twr_outputs(out_dir: str, exchanges: Sequence[TwrExchange],
                 curve_tag: PowerCorrectionCurve, curve_ref: PowerCorrectionCurve,
                 z: ZOffset, skipped: int, metadata: dict[str, str],
                 distances_m: Sequence[float] | None = None,
                 per_point: int = 0) -> dict[str, float]:
    corrected = [toa_corrected(x, curve_tag, curve_ref, z) for x in exchanges]
    basic = [toa_basic(x) for x in exchanges]
    clamped = sum(
        1
        for x in exchanges
        if not (curve_tag.covers(x.measured_power_tag.value)
                and curve_ref.covers(x.measured_power_ref_2.value))
    )

    meta = dict(metadata)
    meta.update({
        "z_offset_s": format_float(z.seconds),
        "z_provenance": z.provenance,
        "skipped_groups": str(skipped),
        "clamped_exchanges": str(clamped),
    })
    rows = [
        (
            x.exchange_index,
            est.toa_s,
            est.range_m,
            est.components.raw_half_s,
            est.components.drift_s,
            est.components.e1_s,
            est.components.e2_s,
            est.components.z_s,
            b.toa_s,
            b.range_m,
        )
        for x, est, b in zip(exchanges, corrected, basic)
    ]
    write_table(
        os.path.join(out_dir, "ranges.csv"),
        ("group_id", "toa_s", "range_m", "raw_half_s", "drift_s", "e1_s", "e2_s",
         "z_s", "toa_basic_s", "range_basic_m"),
        rows,
        meta,
    )

    if distances_m is not None and per_point > 0:
        columns = ("point", "distance_m", "exchanges", "mean_range_m", "std_range_m",
                   "mean_error_m", "mean_basic_m", "std_basic_m", "mean_basic_error_m")
        summary_rows = []
        worst_std = 0.0
        worst_err = 0.0
        basic_worse = 0
        for point, distance in enumerate(distances_m):
            ranges = [est.range_m for x, est in zip(exchanges, corrected)
                      if x.exchange_index // per_point == point]
            basics = [b.range_m for x, b in zip(exchanges, basic)
                      if x.exchange_index // per_point == point]
            if not ranges:
                continue
            err = _mean(ranges) - distance
            berr = _mean(basics) - distance
            worst_std = max(worst_std, _std(ranges))
            worst_err = max(worst_err, abs(err))
            basic_worse += abs(berr) > abs(err)
            summary_rows.append((point, distance, len(ranges), _mean(ranges),
                                 _std(ranges), err, _mean(basics), _std(basics), berr))
        write_table(os.path.join(out_dir, "summary.csv"), columns, summary_rows, meta)
        stats = {
            "points": len(summary_rows),
            "exchanges": len(exchanges),
            "skipped_groups": skipped,
            "clamped_exchanges": clamped,
            "worst_std_m": worst_std,
            "worst_abs_error_m": worst_err,
            "basic_worse_points": basic_worse,
            "z_offset_s": z.seconds,
        }
    else:
        ranges = [est.range_m for est in corrected]
        basics = [b.range_m for b in basic]
        write_table(
            os.path.join(out_dir, "summary.csv"),
            ("metric", "value"),
            [
                ("exchanges", len(exchanges)),
                ("skipped_groups", skipped),
                ("clamped_exchanges", clamped),
                ("mean_range_m", _mean(ranges)),
                ("std_range_m", _std(ranges)),
                ("mean_basic_m", _mean(basics)),
                ("std_basic_m", _std(basics)),
            ],
            meta,
        )
        stats = {
            "exchanges": len(exchanges),
            "skipped_groups": skipped,
            "clamped_exchanges": clamped,
            "mean_range_m": _mean(ranges),
            "std_range_m": _std(ranges),
            "z_offset_s": z.seconds,
        }
    return stats


def cmd_drift_demo(cfg: ExperimentConfig, out_dir: str) -> int:
    scenario = cfg.drift_scenario()
    metadata = _metadata(cfg, "drift-demo")
    records: list[LogRecord] = []
    for index in range(scenario.burst_count):
        records.extend(burst_to_records(
            run_burst(scenario, index),
            scenario.station_a.station_id,
            scenario.station_b.station_id,
        ))
    log_path = os.path.join(out_dir, "records.csv")
    write_records(log_path, records, metadata)

    bursts, skipped = _parse_burst_log(log_path)
    stats = _drift_outputs(out_dir, bursts, skipped, metadata)
    print(
        f"drift-demo: {stats['bursts']} bursts ({skipped} skipped) -> {out_dir}; "
        f"mean corrected offset {stats['mean_residual_m']:.3e} m, "
        f"raw clock offset {stats['mean_c12_m']:.3e} m"
    )
    return 0


def cmd_power_calib(cfg: ExperimentConfig, out_dir: str) -> int:
    scenario = cfg.calib_scenario()
    metadata = _metadata(cfg, "power-calib")
    records: list[LogRecord] = []
    for index in range(scenario.burst_count):
        records.extend(burst_to_records(
            run_burst(scenario, index),
            scenario.station_a.station_id,
            scenario.station_b.station_id,
        ))
    log_path = os.path.join(out_dir, "records.csv")
    write_records(log_path, records, metadata)

    bursts, skipped = _parse_burst_log(log_path)
    steps = _split_sweep(bursts)
    curve, remap_note = _calib_outputs(
        out_dir, steps, skipped, scenario.station_b.station_id,
        cfg.burst.remap_threshold_dbm, metadata,
    )
    note = f" ({remap_note})" if remap_note else ""
    print(
        f"power-calib: {len(steps)} steps, {len(bursts)} bursts -> {out_dir}; "
        f"curve spans [{curve.knots[0][0]:.2f}, {curve.knots[-1][0]:.2f}] dBm{note}"
    )
    return 0


def cmd_twr_run(cfg: ExperimentConfig, out_dir: str) -> int:
    metadata = _metadata(cfg, "twr-run")
    curves: dict[str, PowerCorrectionCurve] = {}
    for station in ("b", "a"):
        scenario = cfg.twr_calib_scenario(station)
        receiver = scenario.station_b.station_id
        records: list[LogRecord] = []
        for index in range(scenario.burst_count):
            records.extend(burst_to_records(
                run_burst(scenario, index),
                scenario.station_a.station_id,
                receiver,
            ))
        log_path = os.path.join(out_dir, f"calib_records_{receiver}.csv")
        write_records(log_path, records, metadata)
        bursts, skipped = _parse_burst_log(log_path)
        curve = calibrate_power(_split_sweep(bursts))
        curve_path = os.path.join(out_dir, f"correction_curve_{receiver}.csv")
        write_curve(curve_path, curve, receiver, metadata)
        print(
            f"twr-run: calibrated {receiver} over "
            f"[{curve.knots[0][0]:.2f}, {curve.knots[-1][0]:.2f}] dBm "
            f"({len(bursts)} bursts, {skipped} skipped)"
        )

    tag_id = cfg.station_b.station_id
    ref_id = cfg.station_a.station_id
    curve_tag, read_tag_id = read_curve(os.path.join(out_dir, f"correction_curve_{tag_id}.csv"))
    curve_ref, read_ref_id = read_curve(os.path.join(out_dir, f"correction_curve_{ref_id}.csv"))
    if read_tag_id != tag_id or read_ref_id != ref_id:
        raise ReplayError("correction curve station ids do not match the configured stations")

    per_point = cfg.twr.exchanges_per_point
    records = []
    for point in range(len(cfg.twr.distances_m)):
        scenario = cfg.twr_scenario(cfg.twr.distances_m[point])
        for k in range(per_point):
            exchange = run_twr(scenario, point * per_point + k)
            records.extend(twr_to_records(exchange, ref_id, tag_id))
    log_path = os.path.join(out_dir, "twr_records.csv")
    write_records(log_path, records, metadata)

    exchanges, skipped, log_ref, log_tag = _parse_twr_log(log_path)
    if (log_ref, log_tag) != (ref_id, tag_id):
        raise ReplayError("parsed log station roles do not match the configuration")
    z = _resolve_z(exchanges, curve_tag, curve_ref, None,
                   cfg.twr.z_known_distance_m, cfg.twr.z_estimate_count)
    stats = _twr_outputs(out_dir, exchanges, curve_tag, curve_ref, z, skipped,
                         metadata, cfg.twr.distances_m, per_point)
    print(
        f"twr-run: {stats['points']} points, {stats['exchanges']} exchanges -> {out_dir}; "
        f"worst |mean error| {stats['worst_abs_error_m']:.4f} m, "
        f"worst std {stats['worst_std_m']:.4f} m, "
        f"basic worse at {stats['basic_worse_points']}/{stats['points']} points"
    )
    return 0


def cmd_replay(cfg: ExperimentConfig, out_dir: str) -> int:
    rp = cfg.replay
    if not rp.log_path:
        raise ConfigError("replay needs replay.log_path")
    metadata = _metadata(cfg, "replay")
    metadata["log_path"] = rp.log_path

    records, _ = read_records(rp.log_path)
    groups = group_records(records)
    kinds = {group_kind(g) for g in groups if g.tx and g.rx}
    if not kinds:
        raise ReplayError(f"{rp.log_path}: no usable record groups")
    if len(kinds) > 1:
        raise ReplayError(f"{rp.log_path}: log mixes one-way bursts and ranging exchanges")

    if kinds.pop() == "burst":
        bursts, skipped = _parse_burst_log(rp.log_path)
        steps = _split_sweep(bursts)
        if len(steps) >= 3:
            receiver = _receiver_id(records)
            curve, remap_note = _calib_outputs(
                out_dir, steps, skipped, receiver, cfg.burst.remap_threshold_dbm, metadata
            )
            note = f" ({remap_note})" if remap_note else ""
            print(
                f"replay: calibration log, {len(steps)} steps, {len(bursts)} bursts "
                f"({skipped} skipped) -> {out_dir}{note}"
            )
        else:
            stats = _drift_outputs(out_dir, bursts, skipped, metadata)
            print(
                f"replay: drift log, {stats['bursts']} bursts ({skipped} skipped) -> "
                f"{out_dir}; mean corrected offset {stats['mean_residual_m']:.3e} m"
            )
        return 0

    if not rp.curve_tag_path or not rp.curve_ref_path:
        raise ConfigError("replaying a ranging log needs curve_tag_path and curve_ref_path")
    exchanges, skipped, ref_id, tag_id = _parse_twr_log(rp.log_path)
    curve_tag, curve_tag_id = read_curve(rp.curve_tag_path)
    curve_ref, curve_ref_id = read_curve(rp.curve_ref_path)
    if curve_tag_id != tag_id:
        raise ReplayError(
            f"curve {rp.curve_tag_path} is for {curve_tag_id!r}, log tag is {tag_id!r}"
        )
    if curve_ref_id != ref_id:
        raise ReplayError(
            f"curve {rp.curve_ref_path} is for {curve_ref_id!r}, log reference is {ref_id!r}"
        )
    z = _resolve_z(exchanges, curve_tag, curve_ref, rp.z_offset_s,
                   rp.z_known_distance_m, rp.z_estimate_count)
    stats = _twr_outputs(out_dir, exchanges, curve_tag, curve_ref, z, skipped, metadata)
    print(
        f"replay: ranging log, {stats['exchanges']} exchanges ({skipped} skipped) -> "
        f"{out_dir}; mean range {stats['mean_range_m']:.4f} m"
    )
    return 0


def _receiver_id(records: Sequence[LogRecord]) -> str:
    for record in records:
        if record.role == "rx":
            return record.station_id
    raise ReplayError("log has no receive rows")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uwbtwr",
        description="Simulation and correction toolkit for UWB two-way ranging",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("drift-demo", "run a constant-power burst train and emit drift residual series"),
        ("power-calib", "run a TX gain sweep and emit correction curve and power remap"),
        ("twr-run", "run the ranging distance sweep with self-calibration"),
        ("replay", "run the pipelines over a recorded timestamp log"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", help="experiment config file")
        cmd.add_argument("--seed", type=int, help="override the config seed")
        cmd.add_argument("--out", help="override the output directory")
    return parser


_COMMANDS = {
    "drift-demo": cmd_drift_demo,
    "power-calib": cmd_power_calib,
    "twr-run": cmd_twr_run,
    "replay": cmd_replay,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if cfg.kind and cfg.kind != args.command:
            raise ConfigError(
                f"config is for experiment kind {cfg.kind!r}, not {args.command!r}"
            )
        if args.seed is not None:
            cfg = _with_seed(cfg, args.seed)
        out_dir = args.out or cfg.out_dir
        os.makedirs(out_dir, exist_ok=True)
        return _COMMANDS[args.command](cfg, out_dir)
    except (ConfigError, ReplayError, CalibrationError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def _with_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    return replace(cfg, seed=seed)


if __name__ == "__main__":
    raise SystemExit(main())
