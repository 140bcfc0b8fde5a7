import math

import pytest
from hypothesis import given, strategies as st

from manetsim.radio import (EnergyState, RadioParams, RadioState, account_energy, can_receive,
                            dbm_to_watts, received_power, watts_to_dbm)

LAMBDA = 0.328


def friis_linear_w(p_tx_w, d, lam=LAMBDA, gt=1.0, gr=1.0):
    # independent linear-domain oracle
    return p_tx_w * (lam / (4 * math.pi * d)) ** 2 * gt * gr


def test_reference_link_250m():
    params = RadioParams(wavelength=LAMBDA)
    p = received_power(watts_to_dbm(0.2818), 250.0, params)
    oracle = 10 * math.log10(friis_linear_w(0.2818, 250.0) * 1000)
    assert p == pytest.approx(oracle, abs=1e-9)
    assert p == pytest.approx(-55.13, abs=0.01)


def test_default_threshold_is_power_at_250m():
    params = RadioParams()
    assert received_power(params.max_power_dbm, 250.0, params) == pytest.approx(
        params.rx_threshold_dbm, abs=1e-12)
    assert params.rx_threshold_dbm == pytest.approx(-55.13, abs=0.02)
    assert params.cs_threshold_dbm < params.rx_threshold_dbm


def test_doubling_distance_quarters_power():
    params = RadioParams()
    p1 = dbm_to_watts(received_power(20.0, 100.0, params))
    p2 = dbm_to_watts(received_power(20.0, 200.0, params))
    assert p1 / p2 == pytest.approx(4.0, rel=1e-12)


def test_unit_gain_distance_is_identity():
    params = RadioParams(wavelength=LAMBDA)
    d = LAMBDA / (4 * math.pi)
    assert received_power(13.0, d, params) == pytest.approx(13.0, abs=1e-12)


def test_zero_distance_rejected():
    with pytest.raises(ValueError):
        received_power(10.0, 0.0, RadioParams())


def test_can_receive_examples():
    params = RadioParams(rx_threshold_dbm=-64.37, cs_threshold_dbm=-80.0)
    assert can_receive(-55.13, params)
    assert can_receive(-64.37, params)
    assert not can_receive(-90.0, params)


def test_cs_above_rx_threshold_rejected():
    with pytest.raises(ValueError):
        RadioParams(rx_threshold_dbm=-70.0, cs_threshold_dbm=-60.0)


@given(st.floats(-10, 30), st.floats(0.01, 5000.0), st.floats(0.05, 2.0))
def test_db_matches_linear(p_tx, d, lam):
    params = RadioParams(wavelength=lam, rx_threshold_dbm=-200, cs_threshold_dbm=-210)
    linear = friis_linear_w(dbm_to_watts(p_tx), d, lam)
    assert received_power(p_tx, d, params) == pytest.approx(watts_to_dbm(linear), abs=1e-9)


@given(st.floats(1.0, 2000.0), st.floats(1.0, 2000.0))
def test_reception_monotone_in_distance(d1, d2):
    params = RadioParams()
    near, far = sorted((d1, d2))
    if can_receive(received_power(params.max_power_dbm, far, params), params):
        assert can_receive(received_power(params.max_power_dbm, near, params), params)


def test_idle_one_second():
    e = EnergyState()
    account_energy(e, RadioState.IDLE, 1.0)
    assert e.consumed == pytest.approx(0.035, rel=1e-12)


def test_tx_at_max_power():
    e = EnergyState()
    account_energy(e, RadioState.TX, 0.0, tx_dbm=watts_to_dbm(0.2818))
    account_energy(e, RadioState.IDLE, 0.1)
    assert e.consumed == pytest.approx(0.066, rel=1e-12)


def test_tx_draw_scales_with_radiated_power():
    e = EnergyState()
    low = e.draw(RadioState.TX, 0.0)
    high = e.draw(RadioState.TX, watts_to_dbm(0.2818))
    assert e.draw_idle < low < high
    assert high == pytest.approx(0.660)


def test_zero_elapsed_costs_nothing():
    e = EnergyState()
    account_energy(e, RadioState.RX, 0.0)
    account_energy(e, RadioState.IDLE, 0.0)
    assert e.consumed == 0.0


def test_node_dies_at_zero():
    e = EnergyState(initial=0.1)
    account_energy(e, RadioState.RX, 0.0)
    account_energy(e, RadioState.IDLE, 10.0)
    assert e.state == RadioState.DEAD
    assert e.residual == 0.0
    assert e.died_at == pytest.approx(0.1 / 0.395)
    assert not e.settle(20.0)


def test_accounting_cannot_go_backwards():
    e = EnergyState()
    account_energy(e, RadioState.IDLE, 2.0)
    with pytest.raises(ValueError):
        account_energy(e, RadioState.RX, 1.0)


@given(st.lists(st.tuples(st.sampled_from([RadioState.IDLE, RadioState.RX, RadioState.TX]),
                          st.floats(0.0, 0.5), st.floats(0.0, 24.5)), max_size=40))
def test_energy_ledger_balances(steps):
    e = EnergyState()
    t = 0.0
    last = e.residual
    for state, dt, dbm in steps:
        t += dt
        account_energy(e, state, t, tx_dbm=dbm)
        assert e.residual <= last
        assert e.residual >= 0
        last = e.residual
    assert e.ledger_error() <= 1e-9
