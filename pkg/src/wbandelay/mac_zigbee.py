"""Unslotted IEEE 802.15.4 CSMA/CA for the sensor-to-ZigBee-router hop.

Every transmitting node (sensors, end device, coordinator) owns a
:class:`ZigbeeMac` and shares one :class:`Channel`. A frame at the head of
the queue goes through: random backoff, a fixed carrier-sense dwell, then a
clear-channel assessment at the end of the dwell: transmission if idle,
another backoff with a larger exponent if busy.
After the data airtime the receiver's acknowledgement follows one turnaround
later, then the inter-frame space, and only then is the next frame served.

A transmission is audible to carrier sense from the tick after it starts, so
two nodes that finish sensing on the same tick both transmit and collide.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass
from typing import Callable

from .analytic import CsmaParams, total_csma_delay
from .kernel import Kernel, RngStream, draw_uniform_slots, to_ticks
from .stats import StatsCollector
from .traffic import Packet

ROLES = ("sensor", "end-device", "coordinator", "router")


@dataclass(frozen=True)
class ZigbeeConfig:
    """ZigBee network and MAC parameters shared by every node of the PAN."""

    beacon_order: int = 6
    superframe_order: int = 0
    maximum_routers: int = 5
    maximum_depth: int = 5
    beacon_enabled_network: bool = False
    mesh_routing: bool = False
    route_discovery_timeout: float = 0.010
    min_backoff_exponent: int = 2
    max_backoff_exponent: int = 3
    max_number_of_backoffs: int = 3
    channel_sensing_duration: float = 0.1
    data_rate: float = 250_000.0
    queue_capacity: int = 50
    phy_header_bytes: int = 6
    mac_header_bytes: int = 9
    mac_footer_bytes: int = 2
    backoff_slot: float = 0.32e-3
    turnaround_time: float = 0.192e-3
    inter_frame_space: float = 0.64e-3

    def errors(self) -> list[tuple[str, str]]:
        errs = []
        if self.min_backoff_exponent < 0:
            errs.append(("min_backoff_exponent", "must be >= 0"))
        if self.min_backoff_exponent > self.max_backoff_exponent:
            msg = (f"min_backoff_exponent ({self.min_backoff_exponent}) must be <= "
                   f"max_backoff_exponent ({self.max_backoff_exponent})")
            errs.append(("min_backoff_exponent", msg))
            errs.append(("max_backoff_exponent", msg))
        if self.max_number_of_backoffs < 0:
            errs.append(("max_number_of_backoffs", "must be >= 0"))
        if not self.data_rate > 0:
            errs.append(("data_rate", "must be > 0"))
        if self.queue_capacity < 1:
            errs.append(("queue_capacity", "must be >= 1"))
        for name in ("channel_sensing_duration", "backoff_slot", "turnaround_time",
                     "inter_frame_space", "route_discovery_timeout"):
            if getattr(self, name) < 0:
                errs.append((name, "must be >= 0"))
        for name in ("phy_header_bytes", "mac_header_bytes", "mac_footer_bytes",
                     "maximum_routers", "maximum_depth", "beacon_order", "superframe_order"):
            if getattr(self, name) < 0:
                errs.append((name, "must be >= 0"))
        if self.beacon_enabled_network:
            errs.append(("beacon_enabled_network", "beacon-enabled (slotted) mode is not modelled"))
        if self.mesh_routing:
            errs.append(("mesh_routing", "mesh routing is not modelled"))
        return errs

    def csma_params(self, payload: int, n_devices: int = 1) -> CsmaParams:
        return CsmaParams(
            l_phy=self.phy_header_bytes, l_mac_hdr=self.mac_header_bytes,
            l_mac_ftr=self.mac_footer_bytes, payload=payload, r_data=self.data_rate,
            t_bo_slot=self.backoff_slot, t_ta=self.turnaround_time, t_ifs=self.inter_frame_space,
            be_min=self.min_backoff_exponent, be_max=self.max_backoff_exponent,
            max_backoffs=self.max_number_of_backoffs, n_devices=n_devices)


@dataclass(frozen=True)
class ZigbeeNodeConfig:
    name: str
    role: str
    config: ZigbeeConfig

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown ZigBee role {self.role!r}")


def check_roles(nodes: list[ZigbeeNodeConfig]) -> None:
    coordinators = [n.name for n in nodes if n.role == "coordinator"]
    if len(coordinators) != 1:
        raise ValueError(f"a ZigBee network needs exactly one coordinator, found {coordinators}")


class Transmission:
    __slots__ = ("owner", "start", "end", "collided", "is_ack")

    def __init__(self, owner: str, start: int, end: int, is_ack: bool = False):
        self.owner = owner
        self.start = start
        self.end = end
        self.collided = False
        self.is_ack = is_ack


class Channel:
    """The single shared 802.15.4 channel (no hidden terminals)."""

    def __init__(self, horizon: int = 0):
        self.horizon = horizon
        self._tx: list[Transmission] = []
        self.collisions = 0

    def _prune(self, now: int) -> None:
        cutoff = now - self.horizon
        if self._tx and self._tx[0].end < cutoff:
            self._tx = [tx for tx in self._tx if tx.end >= cutoff]

    def busy_at(self, now: int) -> bool:
        """Clear-channel assessment: is a frame or ack that started before ``now`` still on air?"""
        for tx in self._tx:
            if tx.start < now < tx.end:
                return True
        return False

    def begin(self, tx: Transmission) -> None:
        self._prune(tx.start)
        for other in self._tx:
            if not other.is_ack and other.end > tx.start:
                if not other.collided:
                    self.collisions += 1
                other.collided = True
                tx.collided = True
        if tx.collided:
            self.collisions += 1
        self._tx.append(tx)

    def add_ack(self, owner: str, start: int, end: int) -> None:
        self._tx.append(Transmission(owner, start, end, is_ack=True))

    def active_transmitters(self, now: int) -> int:
        return sum(1 for tx in self._tx if not tx.is_ack and tx.start <= now < tx.end)

    def busy_until(self) -> int:
        return max((tx.end for tx in self._tx), default=0)


class Frame:
    __slots__ = ("packet", "queued_at", "nb", "be", "first_send", "slots", "csma_start",
                 "sense_start", "collisions")

    def __init__(self, packet: Packet, queued_at: int):
        self.packet = packet
        self.queued_at = queued_at
        self.nb = 0
        self.be = 0
        self.first_send: int | None = None
        self.slots: list[int] = []
        self.csma_start = queued_at
        self.sense_start = queued_at
        self.collisions = 0


class ZigbeeMac:
    """CSMA/CA transmitter of one ZigBee node.

    ``forward`` receives each packet whose frame was acknowledged.
    Channel-access failures (more than ``max_number_of_backoffs`` busy or
    collided attempts) discard the frame.
    """

    def __init__(self, kernel: Kernel, name: str, role: str, config: ZigbeeConfig,
                 channel: Channel, forward: Callable[[Packet], None],
                 stats: StatsCollector | None = None, rng: random.Random | None = None):
        if role not in ROLES:
            raise ValueError(f"unknown ZigBee role {role!r}")
        self.kernel = kernel
        self.name = name
        self.role = role
        self.config = config
        self.channel = channel
        self.forward = forward
        self.stats = stats if stats is not None else StatsCollector()
        self.rng = rng if rng is not None else kernel.stream(f"{name}/mac")
        self.queue: deque[Frame] = deque()
        self.busy = False
        self.slot = to_ticks(config.backoff_slot)
        self.sense = to_ticks(config.channel_sensing_duration)
        self.ta = to_ticks(config.turnaround_time)
        self.ifs = to_ticks(config.inter_frame_space)
        overhead = config.phy_header_bytes + config.mac_header_bytes + config.mac_footer_bytes
        self.overhead_bits = overhead * 8
        self.ack = to_ticks(self.overhead_bits / config.data_rate)
        channel.horizon = max(channel.horizon, self.sense)
        self.offered = 0
        self.accepted = 0
        self.delivered = 0
        self.dropped = 0
        self.failed = 0
        self.busy_detections = 0
        self.collided_attempts = 0
        self.service_log: list[tuple[Frame, int]] = []
        self.keep_service_log = False

    @property
    def resident(self) -> int:
        return len(self.queue)

    def airtime(self, packet: Packet) -> int:
        return to_ticks((self.overhead_bits + packet.bits) / self.config.data_rate)

    def enqueue(self, packet: Packet) -> bool:
        """FIFO insert; returns False (and counts a drop) if the queue is full."""
        self.offered += 1
        if len(self.queue) >= self.config.queue_capacity:
            self.dropped += 1
            self.stats.packet_dropped(packet, "zigbee-queue-full")
            return False
        now = self.kernel.now_ticks
        packet.arrive(self.name, now)
        self.queue.append(Frame(packet, now))
        self.accepted += 1
        if not self.busy:
            self.busy = True
            self._start_csma()
        return True

    def _start_csma(self) -> None:
        frame = self.queue[0]
        frame.nb = 0
        frame.be = self.config.min_backoff_exponent
        frame.csma_start = self.kernel.now_ticks
        self.csma_attempt()

    def csma_attempt(self) -> None:
        """Draw a backoff for the head-of-line frame and schedule its expiry."""
        frame = self.queue[0]
        slots = draw_uniform_slots(self.rng, frame.be)
        frame.slots.append(slots)
        self.kernel.schedule_in(slots * self.slot, self.name, "backoff-expiry", self._backoff_expired)

    def _backoff_expired(self) -> None:
        self.queue[0].sense_start = self.kernel.now_ticks
        self.kernel.schedule_in(self.sense, self.name, "channel-sense", self._sensed)

    def _sensed(self) -> None:
        frame = self.queue[0]
        now = self.kernel.now_ticks
        if self.channel.busy_at(now):
            self.busy_detections += 1
            self._retry_or_fail(frame)
            return
        if frame.first_send is None:
            frame.first_send = now
            self.stats.record_mad("zigbee", self.name, frame.queued_at, now)
        tx = Transmission(self.name, now, now + self.airtime(frame.packet))
        self.channel.begin(tx)
        self.kernel.schedule_at(tx.end, self.name, "tx-end", self.complete_transmission, tx)

    def _retry_or_fail(self, frame: Frame) -> None:
        frame.nb += 1
        frame.be = min(frame.be + 1, self.config.max_backoff_exponent)
        if frame.nb > self.config.max_number_of_backoffs:
            self.queue.popleft()
            self.failed += 1
            self.stats.packet_failed(frame.packet, "zigbee-channel-access-failure")
            self._next()
        else:
            self.csma_attempt()

    def complete_transmission(self, tx: Transmission) -> None:
        frame = self.queue[0]
        now = self.kernel.now_ticks
        if tx.collided:
            frame.collisions += 1
            self.collided_attempts += 1
            # no acknowledgement arrives; retry once the ack wait expires
            self.kernel.schedule_in(self.ta + self.ack, self.name, "ack-timeout",
                                    self._retry_or_fail, frame)
            return
        self.channel.add_ack(self.name, now + self.ta, now + self.ta + self.ack)
        self.kernel.schedule_in(self.ta + self.ack + self.ifs, self.name, "service-complete",
                                self._delivered)

    def _delivered(self) -> None:
        frame = self.queue.popleft()
        now = self.kernel.now_ticks
        pkt = frame.packet
        pkt.depart(now)
        self.delivered += 1
        if self.keep_service_log:
            self.service_log.append((frame, now))
        self.stats.record_hop("zigbee", self.name, frame.queued_at, now)
        self.forward(pkt)
        self._next()

    def _next(self) -> None:
        if self.queue:
            self._start_csma()
        else:
            self.busy = False

    def closed_form_service(self, frame: Frame) -> float:
        """Service time predicted for an uncontended frame, in seconds.

        The per-hop CSMA/CA delay at the frame's first backoff draw plus the
        carrier-sense dwell that precedes the transmit decision.
        """
        params = self.config.csma_params(frame.packet.size)
        return total_csma_delay(params, frame.slots[0]).total + self.config.channel_sensing_duration


class ZigbeeRouter:
    """Gateway role: hands packets from the PAN to the attached access segment."""

    def __init__(self, kernel: Kernel, name: str, forward: Callable[[Packet], None]):
        self.kernel = kernel
        self.name = name
        self.role = "router"
        self.forward = forward
        self.received = 0

    @property
    def resident(self) -> int:
        return 0

    def enqueue(self, packet: Packet) -> bool:
        now = self.kernel.now_ticks
        packet.arrive(self.name, now)
        packet.depart(now)
        self.received += 1
        self.forward(packet)
        return True


# -- validation experiments ---------------------------------------------------

@dataclass
class LoneNodeResult:
    trials: int
    mean: float
    stderr: float
    expected: float

    @property
    def z(self) -> float:
        if self.stderr == 0:
            return 0.0 if math.isclose(self.mean, self.expected, rel_tol=0, abs_tol=1e-9) else math.inf
        return (self.mean - self.expected) / self.stderr


def lone_node_hop_delay(config: ZigbeeConfig, payload: int, trials: int, seed: int = 0) -> LoneNodeResult:
    """Simulate ``trials`` frames from one node on an otherwise silent channel.

    Each frame is enqueued only after the previous one completed, so every
    hop delay is a single backoff draw plus fixed airtimes. The expected value
    averages the per-hop closed form over the first-stage backoff window.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    kernel = Kernel(seed=seed)
    delays: list[float] = []
    ids = iter(range(trials))

    def feed(_pkt: Packet | None = None) -> None:
        if _pkt is not None:
            h = _pkt.hops[-1]
            delays.append((h.departure - h.arrival) / 1e9)
        i = next(ids, None)
        if i is not None:
            mac.enqueue(Packet(i, "probe", i, kernel.now_ticks, payload))

    mac = ZigbeeMac(kernel, "probe", "end-device", config, Channel(), forward=feed)
    kernel.schedule_at(0, "probe", "packet-arrival", feed)
    while kernel.step() is not None:
        pass
    n = len(delays)
    mean = math.fsum(delays) / n
    var = math.fsum((d - mean) ** 2 for d in delays) / (n - 1) if n > 1 else 0.0
    params = config.csma_params(payload)
    window = 1 << config.min_backoff_exponent
    expected = math.fsum(total_csma_delay(params, s).total for s in range(window)) / window
    expected += config.channel_sensing_duration
    return LoneNodeResult(n, mean, math.sqrt(var / n), expected)


def slot_allocation_frequency(n_devices: int, be: int, trials: int, seed: int = 0) -> float:
    """Empirical frequency of the slot-success event from explicit allocation rounds.

    In every one of the ``be - 1`` rounds the coordinator grants the channel
    to one of ``n_devices`` devices chosen uniformly from its own stream.
    Success is the tagged device (device 0) winning round one and no later
    round.
    """
    if n_devices < 1:
        raise ValueError("n_devices must be >= 1")
    if be < 2:
        raise ValueError("be must be >= 2")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    coordinator = RngStream(seed, "coordinator/allocation")
    hits = 0
    for _ in range(trials):
        if coordinator.randrange(n_devices) != 0:
            continue
        if all(coordinator.randrange(n_devices) != 0 for _ in range(be - 2)):
            hits += 1
    return hits / trials
