"""End-to-end command line runs over small configs."""

import pytest

from uwbtwr import cli
from uwbtwr.exchange import run_burst, run_twr
from uwbtwr.logio import burst_to_records, twr_to_records, write_records

from test_exchange import make_scenario

DRIFT_CFG = """\
[experiment]
kind = drift-demo
seed = 11
[burst]
drift_bursts = 40
"""

CALIB_CFG = """\
[experiment]
kind = power-calib
seed = 7
[burst]
repetitions = 6
gain_start_db = 10
gain_step_db = -4
gain_steps = 10
"""

TWR_CFG = """\
[experiment]
kind = twr-run
seed = 5
[twr]
distances_m = 2.0, 1.2
exchanges_per_point = 40
z_known_distance_m = 2.0
z_estimate_count = 40
calib_gain_start_db = 10
calib_gain_step_db = -1.0
calib_gain_steps = 25
calib_repetitions = 30
"""


def write_cfg(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def data_lines(path):
    return [ln for ln in path.read_text(encoding="utf-8").splitlines()
            if not ln.startswith("#")]


def test_drift_demo_outputs(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "run.cfg", DRIFT_CFG)
    out = tmp_path / "out"
    assert cli.main(["drift-demo", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "records.csv").exists()
    assert (out / "drift_series.csv").exists()
    assert (out / "summary.csv").exists()
    stdout = capsys.readouterr().out
    assert "drift-demo: 40 bursts (0 skipped)" in stdout
    assert len(data_lines(out / "drift_series.csv")) == 41


def test_fixed_seed_reruns_are_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, "run.cfg", DRIFT_CFG)
    first = tmp_path / "one"
    second = tmp_path / "two"
    assert cli.main(["drift-demo", "--config", cfg, "--out", str(first)]) == 0
    assert cli.main(["drift-demo", "--config", cfg, "--out", str(second)]) == 0
    for name in ("records.csv", "drift_series.csv", "summary.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_seed_override_changes_records(tmp_path):
    cfg = write_cfg(tmp_path, "run.cfg", DRIFT_CFG)
    first = tmp_path / "one"
    second = tmp_path / "two"
    assert cli.main(["drift-demo", "--config", cfg, "--out", str(first)]) == 0
    assert cli.main(["drift-demo", "--config", cfg, "--seed", "12",
                     "--out", str(second)]) == 0
    assert (first / "records.csv").read_bytes() != (second / "records.csv").read_bytes()


def test_power_calib_then_replay_matches(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "run.cfg", CALIB_CFG)
    out = tmp_path / "out"
    assert cli.main(["power-calib", "--config", cfg, "--out", str(out)]) == 0
    assert "power-calib: 10 steps, 60 bursts" in capsys.readouterr().out

    replay_cfg = write_cfg(tmp_path, "replay.cfg", (
        "[experiment]\nkind = replay\n[replay]\n"
        f"log_path = {out / 'records.csv'}\n"
    ))
    redo = tmp_path / "redo"
    assert cli.main(["replay", "--config", replay_cfg, "--out", str(redo)]) == 0
    for name in ("correction_curve_tag.csv", "calib_series.csv",
                 "power_remap_tag.csv", "summary.csv"):
        assert data_lines(out / name) == data_lines(redo / name), name


def test_twr_run_then_replay_matches(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "run.cfg", TWR_CFG)
    out = tmp_path / "out"
    assert cli.main(["twr-run", "--config", cfg, "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "twr-run: 2 points, 80 exchanges" in stdout

    replay_cfg = write_cfg(tmp_path, "replay.cfg", (
        "[experiment]\nkind = replay\n[replay]\n"
        f"log_path = {out / 'twr_records.csv'}\n"
        f"curve_tag_path = {out / 'correction_curve_tag.csv'}\n"
        f"curve_ref_path = {out / 'correction_curve_ref.csv'}\n"
        "z_known_distance_m = 2.0\n"
        "z_estimate_count = 40\n"
    ))
    redo = tmp_path / "redo"
    assert cli.main(["replay", "--config", replay_cfg, "--out", str(redo)]) == 0
    assert data_lines(out / "ranges.csv") == data_lines(redo / "ranges.csv")


def test_replay_counts_skipped_groups(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "run.cfg", DRIFT_CFG)
    out = tmp_path / "out"
    assert cli.main(["drift-demo", "--config", cfg, "--out", str(out)]) == 0
    capsys.readouterr()

    log = out / "records.csv"
    lines = log.read_text(encoding="utf-8").splitlines(keepends=True)
    victim = next(i for i, ln in enumerate(lines) if ln.startswith("5,2,rx,"))
    log.write_text("".join(lines[:victim] + lines[victim + 1:]), encoding="utf-8")

    replay_cfg = write_cfg(tmp_path, "replay.cfg", (
        f"[experiment]\nkind = replay\n[replay]\nlog_path = {log}\n"
    ))
    redo = tmp_path / "redo"
    assert cli.main(["replay", "--config", replay_cfg, "--out", str(redo)]) == 0
    assert "39 bursts (1 skipped)" in capsys.readouterr().out
    assert len(data_lines(redo / "drift_series.csv")) == 40


def expect_error(capsys, argv, needle):
    assert cli.main(argv) == 1
    err = capsys.readouterr().err
    assert err.startswith("error:") and needle in err, err


def test_error_missing_config(tmp_path, capsys):
    expect_error(capsys, ["drift-demo", "--config", str(tmp_path / "absent.cfg")],
                 "cannot read")


def test_error_kind_mismatch(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "run.cfg", DRIFT_CFG)
    expect_error(capsys, ["power-calib", "--config", cfg, "--out", str(tmp_path / "o")],
                 "config is for experiment kind 'drift-demo'")


def test_error_replay_needs_log(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "run.cfg", "[experiment]\nkind = replay\n")
    expect_error(capsys, ["replay", "--config", cfg, "--out", str(tmp_path / "o")],
                 "replay.log_path")


def test_error_ranging_replay_needs_curves(tmp_path, capsys):
    records = []
    for k in range(3):
        records.extend(twr_to_records(run_twr(make_scenario(), k), "ref", "tag"))
    log = tmp_path / "twr.csv"
    write_records(str(log), records, {})
    cfg = write_cfg(tmp_path, "run.cfg",
                    f"[experiment]\nkind = replay\n[replay]\nlog_path = {log}\n")
    expect_error(capsys, ["replay", "--config", cfg, "--out", str(tmp_path / "o")],
                 "curve_tag_path")


def test_error_header_only_log(tmp_path, capsys):
    log = tmp_path / "empty.csv"
    log.write_text(
        "group_id,msg_index,role,station_id,timestamp_ticks,"
        "measured_power_dbm,tx_gain_db\n",
        encoding="utf-8",
    )
    cfg = write_cfg(tmp_path, "run.cfg",
                    f"[experiment]\nkind = replay\n[replay]\nlog_path = {log}\n")
    expect_error(capsys, ["replay", "--config", cfg, "--out", str(tmp_path / "o")],
                 "no usable record groups")


def test_error_mixed_log(tmp_path, capsys):
    scenario = make_scenario()
    records = burst_to_records(run_burst(scenario, 0), "a", "b")
    exchange = run_twr(scenario, 1)
    records.extend(twr_to_records(exchange, "a", "b"))
    log = tmp_path / "mixed.csv"
    write_records(str(log), records, {})
    cfg = write_cfg(tmp_path, "run.cfg",
                    f"[experiment]\nkind = replay\n[replay]\nlog_path = {log}\n")
    expect_error(capsys, ["replay", "--config", cfg, "--out", str(tmp_path / "o")],
                 "mixes one-way bursts and ranging exchanges")


def test_error_bad_config_content(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "run.cfg", "[experiment]\nseed = x\n")
    expect_error(capsys, ["drift-demo", "--config", cfg], "expected an integer")


def test_missing_subcommand_exits():
    with pytest.raises(SystemExit):
        cli.main([])
