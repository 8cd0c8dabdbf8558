import math
import random

import pytest

from wbandelay.analytic import p_tss, standard_error, total_csma_delay
from wbandelay.kernel import Kernel, to_ticks
from wbandelay.mac_zigbee import (
    Channel,
    Transmission,
    ZigbeeConfig,
    ZigbeeMac,
    ZigbeeNodeConfig,
    ZigbeeRouter,
    check_roles,
    lone_node_hop_delay,
    slot_allocation_frequency,
)
from wbandelay.stats import StatsCollector
from wbandelay.traffic import Packet

CFG = ZigbeeConfig()


class FixedSlots(random.Random):
    """Backoff draws always return the same slot count."""

    def __init__(self, slots=0):
        super().__init__(0)
        self.slots = slots

    def getrandbits(self, k):
        return min(self.slots, (1 << k) - 1)


def _mac(kernel, name, channel, out, config=CFG, rng=None, stats=None):
    return ZigbeeMac(kernel, name, "sensor", config, channel, out.append, stats=stats, rng=rng)


def _pkt(i, t=0, size=100):
    return Packet(i, "s", i, t, size)


def test_config_defaults_valid_and_errors_named():
    assert CFG.errors() == []
    bad = ZigbeeConfig(min_backoff_exponent=4, max_backoff_exponent=3)
    fields = [f for f, _ in bad.errors()]
    assert "min_backoff_exponent" in fields and "max_backoff_exponent" in fields
    assert ZigbeeConfig(queue_capacity=0).errors()[0][0] == "queue_capacity"
    assert ZigbeeConfig(beacon_enabled_network=True).errors()[0][0] == "beacon_enabled_network"


def test_csma_params_mirror_config():
    p = CFG.csma_params(100, n_devices=4)
    assert (p.l_phy, p.l_mac_hdr, p.l_mac_ftr, p.payload, p.n_devices) == (6, 9, 2, 100, 4)
    assert (p.be_min, p.be_max, p.max_backoffs) == (2, 3, 3)


def test_roles():
    nodes = [ZigbeeNodeConfig("zed", "end-device", CFG), ZigbeeNodeConfig("zc", "coordinator", CFG)]
    check_roles(nodes)
    with pytest.raises(ValueError):
        check_roles(nodes[:1])
    with pytest.raises(ValueError):
        check_roles(nodes + [ZigbeeNodeConfig("zc2", "coordinator", CFG)])
    with pytest.raises(ValueError):
        ZigbeeNodeConfig("x", "gateway", CFG)
    with pytest.raises(ValueError):
        ZigbeeMac(Kernel(), "x", "gateway", CFG, Channel(), print)


@pytest.mark.parametrize("slots", [0, 1, 3])
def test_uncontended_service_matches_closed_form(slots):
    k = Kernel()
    out = []
    mac = _mac(k, "s0", Channel(), out, rng=FixedSlots(slots))
    mac.keep_service_log = True
    k.schedule_at(0, "s0", "packet-arrival", mac.enqueue, _pkt(0))
    k.run_until(10.0)
    (frame, done), = mac.service_log
    assert frame.slots == [slots]
    expected = total_csma_delay(CFG.csma_params(100), slots).total + 0.1
    assert done / 1e9 == pytest.approx(expected, abs=4e-9)  # one tick of rounding per term
    assert mac.closed_form_service(frame) == pytest.approx(expected, rel=1e-15)
    assert out[0].hops[-1].departure == done


def test_medium_access_delay_is_queue_to_first_send():
    k = Kernel()
    stats = StatsCollector()
    mac = _mac(k, "s0", Channel(), [], rng=FixedSlots(2), stats=stats)
    k.schedule_at(0, "s0", "packet-arrival", mac.enqueue, _pkt(0))
    k.run_until(1.0)
    (t, v), = stats.node_series("zigbee.medium-access-delay", "s0").samples
    assert v == pytest.approx(2 * 0.32e-3 + 0.1, abs=1e-9)


def test_queue_is_fifo_and_serves_back_to_back():
    k = Kernel()
    out = []
    mac = _mac(k, "s0", Channel(), out)
    for i in range(4):
        k.schedule_at(0, "s0", "packet-arrival", mac.enqueue, _pkt(i))
    k.run_until(10.0)
    assert [p.id for p in out] == [0, 1, 2, 3]
    assert mac.delivered == 4 and not mac.busy and mac.resident == 0


def test_full_queue_drops_with_cause():
    k = Kernel()
    stats = StatsCollector()
    mac = _mac(k, "s0", Channel(), [], config=ZigbeeConfig(queue_capacity=1), stats=stats)
    k.schedule_at(0, "s0", "packet-arrival", mac.enqueue, _pkt(0))
    k.schedule_at(0, "s0", "packet-arrival", mac.enqueue, _pkt(1))
    k.run_until(1.0)
    assert mac.dropped == 1 and stats.drops == {"zigbee-queue-full": 1}


def test_same_tick_transmissions_collide_and_back_off():
    k = Kernel()
    ch = Channel()
    out = []
    a = _mac(k, "a", ch, out, rng=FixedSlots(0))
    b = _mac(k, "b", ch, out, rng=FixedSlots(0))
    k.schedule_at(0, "a", "packet-arrival", a.enqueue, _pkt(0))
    k.schedule_at(0, "b", "packet-arrival", b.enqueue, _pkt(1))
    k.run_until(0.2)
    assert a.collided_attempts == 1 and b.collided_attempts == 1
    assert ch.collisions == 2
    assert a.queue[0].be == 3 and a.queue[0].nb == 1


def test_busy_channel_at_assessment_defers():
    k = Kernel()
    ch = Channel()
    out = []
    a = _mac(k, "a", ch, out, rng=FixedSlots(0))
    b = _mac(k, "b", ch, out, rng=FixedSlots(1))
    k.schedule_at(0, "a", "packet-arrival", a.enqueue, _pkt(0))
    k.schedule_at(0, "b", "packet-arrival", b.enqueue, _pkt(1))
    k.run_until(10.0)
    # b finished sensing one slot after a started transmitting
    assert b.busy_detections >= 1 and a.busy_detections == 0
    assert ch.collisions == 0 and sorted(p.id for p in out) == [0, 1]


def test_channel_access_failure_after_max_backoffs():
    k = Kernel()
    ch = Channel()
    ch.begin(Transmission("jammer", 0, to_ticks(1000.0)))
    stats = StatsCollector()
    mac = _mac(k, "s0", ch, [], stats=stats)
    k.schedule_at(1, "s0", "packet-arrival", mac.enqueue, _pkt(0))
    k.run_until(100.0)
    assert mac.busy_detections == CFG.max_number_of_backoffs + 1
    assert mac.failed == 1 and stats.failures == {"zigbee-channel-access-failure": 1}
    assert not mac.busy


def test_backoff_exponent_is_capped():
    k = Kernel()
    ch = Channel()
    ch.begin(Transmission("jammer", 0, to_ticks(1000.0)))
    cfg = ZigbeeConfig(min_backoff_exponent=2, max_backoff_exponent=3, max_number_of_backoffs=5)
    mac = _mac(k, "s0", ch, [], config=cfg)
    seen = []
    orig = mac.csma_attempt

    def spy():
        seen.append(mac.queue[0].be)
        orig()

    mac.csma_attempt = spy
    k.schedule_at(1, "s0", "packet-arrival", mac.enqueue, _pkt(0))
    k.run_until(100.0)
    assert seen == [2, 3, 3, 3, 3, 3]


def test_channel_busy_semantics():
    ch = Channel()
    ch.begin(Transmission("a", 10, 20))
    assert not ch.busy_at(10)  # not yet audible on its first tick
    assert ch.busy_at(11) and ch.busy_at(19)
    assert not ch.busy_at(20)
    assert ch.active_transmitters(15) == 1 and ch.busy_until() == 20


def test_router_is_instant():
    k = Kernel()
    out = []
    r = ZigbeeRouter(k, "zr", out.append)
    p = _pkt(0)
    r.enqueue(p)
    assert out == [p] and p.hops[0].arrival == p.hops[0].departure == 0 and r.resident == 0


def test_lone_node_hop_delay_agrees_with_closed_form():
    res = lone_node_hop_delay(CFG, 1024, 4000, seed=11)
    window = [total_csma_delay(CFG.csma_params(1024), s).total for s in range(4)]
    assert res.expected == pytest.approx(math.fsum(window) / 4 + 0.1, rel=1e-15)
    assert abs(res.z) < 3
    with pytest.raises(ValueError):
        lone_node_hop_delay(CFG, 1024, 0)


@pytest.mark.parametrize("n,be", [(1, 2), (2, 3), (4, 3), (7, 2)])
def test_slot_allocation_frequency_matches_p_tss(n, be):
    trials = 40_000
    p = p_tss(n, be)
    f = slot_allocation_frequency(n, be, trials, seed=3)
    se = standard_error(p, trials)
    assert abs(f - p) <= 3 * se + (1e-12 if se == 0 else 0)


def test_slot_allocation_frequency_validates():
    for args in [(0, 2, 10), (2, 1, 10), (2, 2, 0)]:
        with pytest.raises(ValueError):
            slot_allocation_frequency(*args)
