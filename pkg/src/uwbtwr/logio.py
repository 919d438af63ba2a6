"""CSV log formats for timestamp records, correction curves, and result tables.

A timestamp log holds one row per transmit or receive event, six rows per
three-message group.  Header lines starting with '#' carry run metadata as
'key = value' pairs; they are informational and never feed computation, so
a replay of the same rows reproduces the same results byte for byte.

Floats are written with 12 significant digits.  All downstream numbers are
computed from the parsed file, not from in-memory state, so the round trip
through this format is the canonical data path.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

from .calib import PowerCorrectionCurve
from .core import PowerDbm, TickTime, TIMESTAMP_MODULUS
from .exchange import BurstRecord, TwrExchange

ROLES = ("tx", "rx")

RECORD_COLUMNS = (
    "group_id",
    "msg_index",
    "role",
    "station_id",
    "timestamp_ticks",
    "measured_power_dbm",
    "tx_gain_db",
)

CURVE_COLUMNS = ("measured_dbm", "correction_ticks")


class ReplayError(ValueError):
    """Log or curve file rejected; message carries file/row diagnostics."""


@dataclass(frozen=True, slots=True)
class LogRecord:
    """One radio event: a transmit or receive timestamp with its power fields."""

    group_id: int
    msg_index: int
    role: str
    station_id: str
    timestamp_ticks: int
    measured_power_dbm: float | None  # rx rows only
    tx_gain_db: float | None  # tx rows only

    def __post_init__(self):
        if self.group_id < 0:
            raise ValueError(f"group_id must be >= 0, got {self.group_id}")
        if self.msg_index not in (1, 2, 3):
            raise ValueError(f"msg_index must be 1..3, got {self.msg_index}")
        if self.role not in ROLES:
            raise ValueError(f"role must be tx or rx, got {self.role!r}")
        if not self.station_id:
            raise ValueError("station_id must be non-empty")
        if not 0 <= self.timestamp_ticks < TIMESTAMP_MODULUS:
            raise ValueError(f"timestamp_ticks out of range: {self.timestamp_ticks}")
        if self.role == "tx" and self.measured_power_dbm is not None:
            raise ValueError("tx rows carry no measured power")
        if self.role == "rx" and self.tx_gain_db is not None:
            raise ValueError("rx rows carry no tx gain")
        if self.role == "rx" and self.measured_power_dbm is None:
            raise ValueError("rx rows require a measured power")
        if self.role == "tx" and self.tx_gain_db is None:
            raise ValueError("tx rows require a tx gain")


def format_float(value: float) -> str:
    return format(float(value), ".12g")


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def write_table(path: str, columns: Sequence[str], rows: Iterable[Sequence],
                metadata: dict[str, str] | None = None) -> None:
    """Write a CSV table with '# key = value' metadata lines above the header."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key, value in (metadata or {}).items():
            fh.write(f"# {key} = {value}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(cell) for cell in row])


def _read_table(path: str, expected_columns: Sequence[str]) -> tuple[dict[str, str], list[tuple[list[str], int]]]:
    """Return (metadata, rows with line numbers); validates the column header."""
    metadata: dict[str, str] = {}
    rows: list[tuple[list[str], int]] = []
    header = None
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            for line_no, line in enumerate(fh, start=1):
                stripped = line.strip()
                if not stripped:
                    continue
                if stripped.startswith("#"):
                    body = stripped[1:].strip()
                    if "=" in body:
                        key, value = (part.strip() for part in body.split("=", 1))
                        metadata[key] = value
                    continue
                cells = next(csv.reader([line]))
                if header is None:
                    header = [c.strip() for c in cells]
                    if header != list(expected_columns):
                        raise ReplayError(
                            f"{path}:{line_no}: expected columns "
                            f"{','.join(expected_columns)}, got {','.join(header)}"
                        )
                    continue
                rows.append((cells, line_no))
    except OSError as err:
        raise ReplayError(f"cannot read {path}: {err}") from None
    if header is None:
        raise ReplayError(f"{path}: no column header found")
    return metadata, rows


def write_records(path: str, records: Iterable[LogRecord],
                  metadata: dict[str, str] | None = None) -> None:
    rows = [
        (
            r.group_id,
            r.msg_index,
            r.role,
            r.station_id,
            r.timestamp_ticks,
            r.measured_power_dbm,
            r.tx_gain_db,
        )
        for r in records
    ]
    write_table(path, RECORD_COLUMNS, rows, metadata)


def read_records(path: str) -> tuple[list[LogRecord], dict[str, str]]:
    metadata, rows = _read_table(path, RECORD_COLUMNS)
    records = []
    for cells, line_no in rows:
        if len(cells) != len(RECORD_COLUMNS):
            raise ReplayError(
                f"{path}:{line_no}: expected {len(RECORD_COLUMNS)} fields, got {len(cells)}"
            )
        group_s, msg_s, role, station, ticks_s, power_s, gain_s = (c.strip() for c in cells)
        try:
            record = LogRecord(
                group_id=int(group_s),
                msg_index=int(msg_s),
                role=role,
                station_id=station,
                timestamp_ticks=int(ticks_s),
                measured_power_dbm=float(power_s) if power_s else None,
                tx_gain_db=float(gain_s) if gain_s else None,
            )
        except ValueError as err:
            raise ReplayError(f"{path}:{line_no}: {err}") from None
        records.append(record)
    return records, metadata


def burst_to_records(burst: BurstRecord, tx_station: str, rx_station: str) -> list[LogRecord]:
    gains = (0.0, burst.tx_gain_p2_db, 0.0)
    records = []
    for i in range(3):
        records.append(LogRecord(burst.burst_index, i + 1, "tx", tx_station,
                                 burst.tx_times[i].ticks, None, gains[i]))
        records.append(LogRecord(burst.burst_index, i + 1, "rx", rx_station,
                                 burst.rx_times[i].ticks, burst.measured_power_dbm[i].value, None))
    return records


def twr_to_records(x: TwrExchange, ref_station: str, tag_station: str,
                   tx_gain_db: float = 0.0) -> list[LogRecord]:
    records = [
        LogRecord(x.exchange_index, 1, "tx", ref_station, x.t1r_tx.ticks, None, tx_gain_db),
        LogRecord(x.exchange_index, 1, "rx", tag_station, x.t1t_rx.ticks,
                  x.measured_power_tag.value, None),
        LogRecord(x.exchange_index, 2, "tx", tag_station, x.t2t_tx.ticks, None, tx_gain_db),
        LogRecord(x.exchange_index, 2, "rx", ref_station, x.t2r_rx.ticks,
                  x.measured_power_ref_2.value, None),
    ]
    if x.has_third_message:
        records.append(LogRecord(x.exchange_index, 3, "tx", tag_station,
                                 x.t3t_tx.ticks, None, tx_gain_db))
        records.append(LogRecord(x.exchange_index, 3, "rx", ref_station,
                                 x.t3r_rx.ticks, x.measured_power_ref_3.value, None))
    return records


@dataclass(frozen=True)
class RecordGroup:
    """All rows that share one group id, split by message and role."""

    group_id: int
    tx: dict[int, LogRecord]
    rx: dict[int, LogRecord]

    @property
    def message_count(self) -> int:
        return len(self.tx)

    def complete_for(self, kind: str) -> bool:
        """One-way groups need all three messages; ranging groups may omit the third."""
        if set(self.tx) != set(self.rx):
            return False
        if kind == "burst":
            return set(self.tx) == {1, 2, 3}
        return set(self.tx) in ({1, 2}, {1, 2, 3})


def group_records(records: Iterable[LogRecord]) -> list[RecordGroup]:
    """Group rows by group id, preserving first-appearance order.

    Duplicate (group, message, role) rows are rejected; incomplete groups
    are kept and left to the caller to count and skip.
    """
    by_group: dict[int, tuple[dict[int, LogRecord], dict[int, LogRecord]]] = {}
    order: list[int] = []
    for record in records:
        if record.group_id not in by_group:
            by_group[record.group_id] = ({}, {})
            order.append(record.group_id)
        tx, rx = by_group[record.group_id]
        side = tx if record.role == "tx" else rx
        if record.msg_index in side:
            raise ReplayError(
                f"duplicate {record.role} row for message {record.msg_index} "
                f"in group {record.group_id}"
            )
        side[record.msg_index] = record
    return [RecordGroup(gid, by_group[gid][0], by_group[gid][1]) for gid in order]


def _same_station(records: Iterable[LogRecord]) -> str:
    ids = {r.station_id for r in records}
    if len(ids) != 1:
        raise ReplayError(f"mixed station ids in one role: {sorted(ids)}")
    return ids.pop()


def group_to_burst(group: RecordGroup) -> BurstRecord:
    """Interpret a complete one-way group (same transmitter throughout)."""
    if set(group.tx) != {1, 2, 3}:
        raise ReplayError(f"group {group.group_id}: burst groups need messages 1..3")
    _same_station(group.tx.values())
    _same_station(group.rx.values())
    tx_times = tuple(TickTime(group.tx[i].timestamp_ticks) for i in (1, 2, 3))
    rx_times = tuple(TickTime(group.rx[i].timestamp_ticks) for i in (1, 2, 3))
    powers = tuple(PowerDbm(group.rx[i].measured_power_dbm) for i in (1, 2, 3))
    try:
        return BurstRecord(group.group_id, tx_times, rx_times, powers,
                           group.tx[2].tx_gain_db)
    except ValueError as err:
        raise ReplayError(f"group {group.group_id}: {err}") from None


def group_to_twr(group: RecordGroup) -> TwrExchange:
    """Interpret a group whose transmitter flips after message 1."""
    third = 3 in group.tx
    ref = group.tx[1].station_id
    tag = group.rx[1].station_id
    if ref == tag:
        raise ReplayError(f"group {group.group_id}: message 1 loops back to its transmitter")
    replies = [group.tx[2]] + ([group.tx[3]] if third else [])
    if _same_station(replies) != tag:
        raise ReplayError(f"group {group.group_id}: replies not sent by {tag!r}")
    echoes = [group.rx[2]] + ([group.rx[3]] if third else [])
    if _same_station(echoes) != ref:
        raise ReplayError(f"group {group.group_id}: replies not received by {ref!r}")
    try:
        return TwrExchange(
            exchange_index=group.group_id,
            t1r_tx=TickTime(group.tx[1].timestamp_ticks),
            t1t_rx=TickTime(group.rx[1].timestamp_ticks),
            t2t_tx=TickTime(group.tx[2].timestamp_ticks),
            t2r_rx=TickTime(group.rx[2].timestamp_ticks),
            t3t_tx=TickTime(group.tx[3].timestamp_ticks) if third else None,
            t3r_rx=TickTime(group.rx[3].timestamp_ticks) if third else None,
            measured_power_tag=PowerDbm(group.rx[1].measured_power_dbm),
            measured_power_ref_2=PowerDbm(group.rx[2].measured_power_dbm),
            measured_power_ref_3=PowerDbm(group.rx[3].measured_power_dbm) if third else None,
        )
    except ValueError as err:
        raise ReplayError(f"group {group.group_id}: {err}") from None


def group_kind(group: RecordGroup) -> str:
    """'burst' when one station transmits every message, else 'twr'."""
    stations = {r.station_id for r in group.tx.values()}
    return "burst" if len(stations) == 1 else "twr"


def write_curve(path: str, curve: PowerCorrectionCurve, station_id: str,
                metadata: dict[str, str] | None = None) -> None:
    meta = {"station_id": station_id,
            "reference_power_dbm": format_float(curve.reference_power_dbm)}
    meta.update(metadata or {})
    write_table(path, CURVE_COLUMNS, curve.knots, meta)


def read_curve(path: str) -> tuple[PowerCorrectionCurve, str]:
    metadata, rows = _read_table(path, CURVE_COLUMNS)
    if "station_id" not in metadata or "reference_power_dbm" not in metadata:
        raise ReplayError(f"{path}: missing station_id or reference_power_dbm metadata")
    knots = []
    for cells, line_no in rows:
        if len(cells) != 2:
            raise ReplayError(f"{path}:{line_no}: expected 2 fields, got {len(cells)}")
        try:
            knots.append((float(cells[0]), float(cells[1])))
        except ValueError as err:
            raise ReplayError(f"{path}:{line_no}: {err}") from None
    try:
        curve = PowerCorrectionCurve(tuple(knots), float(metadata["reference_power_dbm"]))
    except ValueError as err:
        raise ReplayError(f"{path}: {err}") from None
    return curve, metadata["station_id"]
