import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wbandelay.analytic import (
    CsmaDelayBreakdown,
    CsmaParams,
    DegenerateParameters,
    DelayEventDistribution,
    UmtsDelayComponents,
    delay_event_distribution,
    expected_time_delay,
    p_backoff_slot,
    p_tss,
    path_delay,
    simulate_slot_success,
    t_ack,
    t_backoff,
    t_data,
    total_csma_delay,
    umts_delay,
)

from oracles import expected_delay_oracle, slot_success_exact, staged_terms_enumerated

SMALL = CsmaParams(payload=100)


def test_t_data_802154_lengths():
    # 6 + 9 + 100 + 2 = 117 bytes
    assert t_data(SMALL) == pytest.approx(3.744e-3, rel=1e-15)


def test_t_data_zero_payload_equals_ack():
    p = CsmaParams(payload=0)
    assert t_data(p) == t_ack(p)


def test_t_data_halves_with_double_rate():
    p2 = CsmaParams(payload=100, r_data=500_000.0)
    assert t_data(p2) == pytest.approx(t_data(SMALL) / 2, rel=1e-15)


@pytest.mark.parametrize("slots,slot,expected", [(0, 0.32e-3, 0.0), (7, 0.32e-3, 2.24e-3), (3, 1.0, 3.0)])
def test_t_backoff(slots, slot, expected):
    assert t_backoff(slots, slot) == pytest.approx(expected, abs=1e-15)


def test_t_backoff_rejects_negative():
    with pytest.raises(ValueError):
        t_backoff(-1, 1.0)


def test_t_ack():
    assert t_ack(SMALL) == pytest.approx(0.544e-3, rel=1e-15)
    assert t_ack(CsmaParams(l_phy=0, l_mac_hdr=0, l_mac_ftr=0)) == 0.0


@given(st.integers(0, 2000))
def test_t_ack_le_t_data(payload):
    p = CsmaParams(payload=payload)
    assert t_ack(p) <= t_data(p)
    assert (t_ack(p) == t_data(p)) == (payload == 0)


def test_total_csma_delay_reference_point():
    b = total_csma_delay(SMALL, 3)
    assert b.t_bo == pytest.approx(0.96e-3)
    assert b.total == pytest.approx(6.08e-3, rel=1e-12)
    assert b.total == b.t_bo + b.t_data + b.t_ta + b.t_ack + b.t_ifs


def test_total_csma_delay_zero():
    p = CsmaParams(l_phy=0, l_mac_hdr=0, l_mac_ftr=0, payload=0, t_ta=0.0, t_ifs=0.0)
    assert total_csma_delay(p, 0) == CsmaDelayBreakdown(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@given(
    payload=st.integers(0, 5000),
    rate=st.floats(1e3, 1e9),
    slot=st.floats(0, 1e-2),
    ta=st.floats(0, 1e-2),
    ifs=st.floats(0, 1e-2),
    slots=st.integers(0, 1023),
)
def test_rate_homogeneity(payload, rate, slot, ta, ifs, slots):
    p1 = CsmaParams(payload=payload, r_data=rate, t_bo_slot=slot, t_ta=ta, t_ifs=ifs)
    p2 = CsmaParams(payload=payload, r_data=2 * rate, t_bo_slot=slot, t_ta=ta, t_ifs=ifs)
    b1, b2 = total_csma_delay(p1, slots), total_csma_delay(p2, slots)
    assert b2.t_data == pytest.approx(b1.t_data / 2, rel=1e-12)
    assert b2.t_ack == pytest.approx(b1.t_ack / 2, rel=1e-12)
    assert (b2.t_bo, b2.t_ta, b2.t_ifs) == (b1.t_bo, b1.t_ta, b1.t_ifs)
    for b in (b1, b2):
        assert b.total == b.t_bo + b.t_data + b.t_ta + b.t_ack + b.t_ifs
        assert min(b.t_bo, b.t_data, b.t_ta, b.t_ack, b.t_ifs) >= 0


def test_params_validation():
    with pytest.raises(ValueError):
        CsmaParams(n_devices=0)
    with pytest.raises(ValueError):
        CsmaParams(be_min=4, be_max=2)
    with pytest.raises(ValueError):
        CsmaParams(r_data=0)


def test_p_backoff_slot():
    assert p_backoff_slot(0) == 1.0
    assert p_backoff_slot(3) == 0.125
    for be in range(0, 9):
        assert sum(p_backoff_slot(be) for _ in range(2 ** be)) == 1.0


def test_p_tss_values():
    assert p_tss(1, 2) == 1.0
    assert p_tss(4, 3) == 0.1875
    for n in range(1, 8):
        for be in range(2, 6):
            assert p_tss(n, be) == pytest.approx(float(slot_success_exact(n, be)), rel=1e-14)


def test_p_tss_rejects_small_be():
    with pytest.raises(ValueError):
        p_tss(3, 1)


def test_p_tss_decreasing_in_devices_be3():
    vals = [p_tss(n, 3) for n in range(2, 30)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("be", [4, 5, 6])
def test_p_tss_decreasing_past_peak(be):
    # p(1-p)**(be-2) peaks at p = 1/(be-1)
    start = max(2, be - 1)
    vals = [p_tss(n, be) for n in range(start, 40)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert p_tss(2, be) < p_tss(be - 1, be)


def test_p_tss_monte_carlo_small():
    rng = np.random.default_rng(7)
    n = 200_000
    for d in (2, 4, 7):
        for be in (2, 3, 4):
            p = p_tss(d, be)
            freq = simulate_slot_success(d, be, n, rng)
            assert abs(freq - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_distribution_single_device_be2():
    dist = delay_event_distribution(1, 2, 2)
    assert dist.terms == (0.0, 0.25, 0.5, 0.75)


def test_distribution_term_count():
    dist = delay_event_distribution(4, 2, 3)
    assert dist.slot_index == tuple(range(12))
    assert dist.stage_exponents == (2,) * 4 + (3,) * 8


def test_distribution_matches_enumeration():
    dist = delay_event_distribution(2, 2, 3)
    expected = staged_terms_enumerated(2, 2, 3)
    assert len(dist.terms) == len(expected)
    for got, exp in zip(dist.terms, expected):
        assert got == pytest.approx(float(exp), rel=1e-15, abs=0)


@given(st.integers(1, 10), st.integers(2, 6), st.integers(0, 3))
def test_distribution_probabilities_bounded(n, be_min, extra):
    dist = delay_event_distribution(n, be_min, be_min + extra)
    assert all(0.0 <= p <= 1.0 for p in dist.p_tss.values())
    assert len(dist.terms) == sum(2 ** be for be in range(be_min, be_min + extra + 1))


def test_distribution_rejects_bad_order():
    with pytest.raises(ValueError):
        delay_event_distribution(2, 3, 2)
    with pytest.raises(ValueError):
        delay_event_distribution(2, 1, 3)


def test_expected_delay_zero_numerator():
    dist = DelayEventDistribution(1, 2, 2, (0,), (2,), (0.0,), (0.5,))
    assert expected_time_delay(dist) == 0.0


def test_expected_delay_degenerate():
    # single device, only stage BE=3: every success probability is zero
    with pytest.raises(DegenerateParameters):
        expected_time_delay(delay_event_distribution(1, 3, 3))


def test_expected_delay_reference_n4():
    # frozen from the exact rational oracle
    exact = expected_delay_oracle(4, 2, 3)
    assert exact == Fraction(38, 9)
    assert expected_time_delay(delay_event_distribution(4, 2, 3)) == pytest.approx(float(exact), rel=1e-12)


@given(st.floats(1e-6, 1e6))
@settings(max_examples=50)
def test_expected_delay_scale_invariant(c):
    dist = delay_event_distribution(5, 2, 3)
    assert expected_time_delay(dist.scaled(c)) == pytest.approx(expected_time_delay(dist), rel=1e-12)


def test_path_delay():
    assert path_delay(0, 0, 0).d_total == 0
    b = path_delay(1e-3, 2e-3, 3e-3)
    assert b.d_total == pytest.approx(6e-3)
    assert b.d_total == b.d1 + b.d2 + b.d3
    with pytest.raises(ValueError):
        path_delay(-1, 0, 0)


def test_umts_delay():
    assert umts_delay(UmtsDelayComponents()) == 0
    c = UmtsDelayComponents(0.002, 0.001, 0.001, 0.0005, 0.0005)
    assert umts_delay(c) == pytest.approx(0.005)
    assert c.d == umts_delay(c)


@given(st.permutations([0.002, 0.001, 0.001, 0.0005, 0.0005]))
def test_umts_delay_permutation(vals):
    assert umts_delay(UmtsDelayComponents(*vals)) == pytest.approx(0.005, rel=1e-15)
