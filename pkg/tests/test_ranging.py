"""Time-of-flight estimators, component bookkeeping, Z offset estimation."""

import math

import pytest

from uwbtwr.calib import PowerCorrectionCurve
from uwbtwr.core import SPEED_OF_LIGHT, TICK_METERS, Meters
from uwbtwr.exchange import DistanceProfile, TwrExchange, run_twr
from uwbtwr.ranging import (
    Z_CONFIGURED,
    Z_ESTIMATED,
    ZERO_Z,
    RangeComponents,
    ZOffset,
    estimate_z,
    power_mismatch_ticks,
    toa_basic,
    toa_corrected,
)

from test_exchange import make_scenario, make_station

ZERO_CURVE = PowerCorrectionCurve(((-120.0, 0.0), (-40.0, 0.0)), -80.0)


def test_components_resum_exactly():
    x = run_twr(make_scenario(station_b=make_station("b", rate=5e-6)), 0)
    est = toa_corrected(x, ZERO_CURVE, ZERO_CURVE, ZOffset(1.25e-9))
    c = est.components
    assert est.toa_s == c.total_s()
    assert est.range_m == est.toa_s * SPEED_OF_LIGHT
    assert c.z_s == 1.25e-9


def test_basic_e_terms_shift_result():
    x = run_twr(make_scenario(), 0)
    plain = toa_basic(x)
    shifted = toa_basic(x, e1_ticks=4.0, e2_ticks=-2.0)
    assert plain.components.drift_s == 0.0
    expected = plain.toa_s - 0.5 * (4.0 - 2.0) * 1.5650040064102565e-11
    assert math.isclose(shifted.toa_s, expected, rel_tol=1e-12)


def test_ideal_three_meter_time_of_flight():
    scenario = make_scenario(profile=DistanceProfile(3.0))
    x = run_twr(scenario, 0)
    truth = 3.0 / SPEED_OF_LIGHT
    tick = 1.5650040064102565e-11
    assert abs(toa_basic(x).toa_s - truth) <= 2 * tick
    assert abs(toa_corrected(x, ZERO_CURVE, ZERO_CURVE).toa_s - truth) <= 2 * tick


def test_uncorrected_drift_error_at_two_ms():
    # 5 ppm over a 2 ms reply delay shows up as half of c * r * delay
    scenario = make_scenario(station_b=make_station("b", offset=0.37, rate=5e-6))
    errors = [toa_basic(run_twr(scenario, k)).range_m - 1.5 for k in range(10)]
    mean = math.fsum(errors) / len(errors)
    assert abs(mean - (-1.49896229)) < 0.02


def test_corrected_removes_drift_error():
    scenario = make_scenario(station_b=make_station("b", offset=0.37, rate=5e-6))
    errors = [
        toa_corrected(run_twr(scenario, k), ZERO_CURVE, ZERO_CURVE).range_m - 1.5
        for k in range(10)
    ]
    assert abs(math.fsum(errors) / len(errors)) < 2 * TICK_METERS


def test_corrected_invariant_to_reply_delay():
    def mean_range(delay):
        scenario = make_scenario(
            station_b=make_station("b", offset=0.37, rate=5e-6),
            delay_12_s=delay, delay_23_s=delay, interval_s=20e-3,
        )
        values = [
            toa_corrected(run_twr(scenario, k), ZERO_CURVE, ZERO_CURVE).range_m
            for k in range(20)
        ]
        return math.fsum(values) / len(values)

    assert abs(mean_range(100e-6) - mean_range(10e-3)) < 5e-3


def test_corrected_requires_third_message():
    x = run_twr(make_scenario(), 0)
    short = TwrExchange(0, x.t1r_tx, x.t1t_rx, x.t2t_tx, x.t2r_rx, None, None,
                        x.measured_power_tag, x.measured_power_ref_2, None)
    toa_basic(short)
    with pytest.raises(ValueError, match="third message"):
        toa_corrected(short, ZERO_CURVE, ZERO_CURVE)


def test_power_mismatch_diagnostic():
    curve = PowerCorrectionCurve(((-90.0, 10.0), (-60.0, -20.0)), -80.0)
    scenario = make_scenario(profile=DistanceProfile(2.0, velocity_mps=30.0))
    x = run_twr(scenario, 5)
    expected = curve.correction(x.measured_power_ref_3.value) \
        - curve.correction(x.measured_power_ref_2.value)
    assert power_mismatch_ticks(x, curve) == expected
    assert expected != 0.0
    short = TwrExchange(0, x.t1r_tx, x.t1t_rx, x.t2t_tx, x.t2r_rx, None, None,
                        x.measured_power_tag, x.measured_power_ref_2, None)
    with pytest.raises(ValueError):
        power_mismatch_ticks(short, curve)


def exact_estimate(toa_s, z_s=0.0):
    comp = RangeComponents(toa_s, 0.0, 0.0, 0.0, z_s)
    total = comp.total_s()
    from uwbtwr.ranging import RangeEstimate

    return RangeEstimate(0, total, total * SPEED_OF_LIGHT, comp)


def test_estimate_z_exact_inputs():
    truth = Meters(3.0)
    estimates = [exact_estimate(3.0 / SPEED_OF_LIGHT) for _ in range(5)]
    assert abs(estimate_z(truth, estimates).seconds) < 1e-18
    assert estimate_z(truth, estimates).provenance == Z_ESTIMATED


def test_estimate_z_constant_offset():
    # estimates sit 0.3 m long, so z comes out at -0.3 m worth of time
    truth = Meters(3.0)
    estimates = [exact_estimate(3.3 / SPEED_OF_LIGHT) for _ in range(8)]
    z = estimate_z(truth, estimates)
    assert math.isclose(z.seconds, -0.3 / SPEED_OF_LIGHT, rel_tol=1e-9)


def test_estimate_z_single_sample_and_backout():
    truth = Meters(2.0)
    single = [exact_estimate(2.5 / SPEED_OF_LIGHT)]
    z = estimate_z(truth, single)
    assert math.isclose(z.seconds, -0.5 / SPEED_OF_LIGHT, rel_tol=1e-9)
    # a stale Z on the inputs must not leak into the new estimate
    stale = [exact_estimate(2.5 / SPEED_OF_LIGHT, z_s=7e-10)]
    z2 = estimate_z(truth, stale)
    assert math.isclose(z2.seconds, z.seconds, rel_tol=1e-12)


def test_estimate_z_empty_rejected():
    with pytest.raises(ValueError):
        estimate_z(Meters(1.0), [])


def test_z_offset_provenance():
    assert ZERO_Z.seconds == 0.0
    assert ZERO_Z.provenance == Z_CONFIGURED
    with pytest.raises(ValueError):
        ZOffset(0.0, "guessed")
