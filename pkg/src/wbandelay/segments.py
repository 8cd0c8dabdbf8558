"""Hop models behind the ZigBee router: WLAN, WiMAX, UMTS, IP cloud and server.

Every component exposes ``accept(packet)`` and a ``resident`` count of the
packets it currently holds. Radio power, antenna and cell fields are carried
in the configs for reporting only; no propagation model consumes them.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from .analytic import UmtsDelayComponents, umts_delay
from .kernel import Kernel, to_ticks
from .stats import ACCESS_DELAY, END_TO_END, PACKET_DELAY, StatsCollector
from .traffic import Packet

UMTS_STAGES = ("umts_ue", "umts_nodeb", "umts_rnc", "umts_sgsn", "umts_hlr", "umts_server")


@dataclass(frozen=True)
class WlanConfig:
    bss_identifier: str = "auto"
    physical_technique: str = "direct-sequence"
    data_rate: float = 11e6
    transmit_power: float = 0.005
    packet_reception_threshold: float = -95.0
    buffer_size: int = 25_600
    large_packet_processing: str = "drop"
    cw_min: int = 31
    cw_max: int = 1023
    difs: float = 50e-6
    sifs: float = 10e-6
    slot: float = 20e-6
    retry_limit: int = 7
    collision_probability: float = 0.0

    def errors(self) -> list[tuple[str, str]]:
        errs = []
        if not self.data_rate > 0:
            errs.append(("data_rate", "must be > 0"))
        if self.buffer_size <= 0:
            errs.append(("buffer_size", "must be > 0"))
        if self.large_packet_processing != "drop":
            errs.append(("large_packet_processing", "only 'drop' is supported"))
        if self.physical_technique != "direct-sequence":
            errs.append(("physical_technique", "only 'direct-sequence' is supported"))
        if not 0 < self.cw_min <= self.cw_max:
            errs.append(("cw_min", f"need 0 < cw_min <= cw_max ({self.cw_max})"))
        for name in ("difs", "sifs", "slot", "transmit_power"):
            if getattr(self, name) < 0:
                errs.append((name, "must be >= 0"))
        if self.retry_limit < 0:
            errs.append(("retry_limit", "must be >= 0"))
        if not 0 <= self.collision_probability <= 1:
            errs.append(("collision_probability", "must be within [0, 1]"))
        return errs


@dataclass(frozen=True)
class WimaxConfig:
    serving_rate: float = 120e6
    ranging_codes: int = 8
    request_grant_rtt: float = 1e-3
    frame_duration: float = 5e-3
    active_subscribers: int = 1
    max_ss_nodes: int = 100
    antenna_gain: float = 15.0
    number_of_transmitters: str = "SISO"
    maximum_transmission_power: float = 0.5
    physical_profile: str = "OFDM 20MHz"
    minimum_power_density: float = -110.0
    maximum_power_density: float = -60.0

    def errors(self) -> list[tuple[str, str]]:
        errs = []
        if not self.serving_rate > 0:
            errs.append(("serving_rate", "must be > 0"))
        if self.ranging_codes < 1:
            errs.append(("ranging_codes", "must be >= 1"))
        for name in ("request_grant_rtt", "frame_duration"):
            if getattr(self, name) < 0:
                errs.append((name, "must be >= 0"))
        if self.max_ss_nodes < 1:
            errs.append(("max_ss_nodes", "must be >= 1"))
        if not 1 <= self.active_subscribers <= self.max_ss_nodes:
            errs.append(("active_subscribers", f"must be within [1, max_ss_nodes={self.max_ss_nodes}]"))
        if self.minimum_power_density > self.maximum_power_density:
            errs.append(("minimum_power_density", "must be <= maximum_power_density"))
        return errs


@dataclass(frozen=True)
class UmtsConfig:
    stage_list: tuple[str, ...] = UMTS_STAGES
    processing_time: float = 0.002
    stage_rate: float = 42e6
    max_retry_on_time_expiry: int = 4
    timeout_probability: float = 0.0
    retry_timeout: float = 0.01
    codec_components: UmtsDelayComponents = field(default_factory=UmtsDelayComponents)
    cell_path_loss_parameters: str = "default"
    umts_cell_id: str = "default"
    umts_sgsn_id: int = 0

    def errors(self) -> list[tuple[str, str]]:
        errs = []
        if not self.stage_list:
            errs.append(("stage_list", "must not be empty"))
        elif len(set(self.stage_list)) != len(self.stage_list):
            errs.append(("stage_list", "stages must be distinct (the pipeline is acyclic)"))
        if self.processing_time < 0:
            errs.append(("processing_time", "must be >= 0"))
        if not self.stage_rate > 0:
            errs.append(("stage_rate", "must be > 0"))
        if self.max_retry_on_time_expiry < 0:
            errs.append(("max_retry_on_time_expiry", "must be >= 0"))
        if not 0 <= self.timeout_probability <= 1:
            errs.append(("timeout_probability", "must be within [0, 1]"))
        if self.retry_timeout < 0:
            errs.append(("retry_timeout", "must be >= 0"))
        return errs


@dataclass(frozen=True)
class CloudLinkConfig:
    latency: float = 0.010
    rate: float = 100e6

    def errors(self) -> list[tuple[str, str]]:
        errs = []
        if self.latency < 0:
            errs.append(("latency", "must be >= 0"))
        if not self.rate > 0:
            errs.append(("rate", "must be > 0"))
        return errs


class _Queued:
    __slots__ = ("packet", "queued_at", "first_send", "attempts")

    def __init__(self, packet: Packet, queued_at: int):
        self.packet = packet
        self.queued_at = queued_at
        self.first_send: int | None = None
        self.attempts = 0


class WlanSegment:
    """802.11b DCF relay station forwarding PAN traffic towards the cloud.

    The station waits DIFS plus a uniform backoff of ``[0, CW]`` slots on an
    idle medium, then serialises the frame. A failed attempt doubles the
    window (``CW <- 2 CW + 1`` up to ``cw_max``). The transmit buffer holds
    at most ``buffer_size`` bits, counting frames waiting and in service;
    a frame that does not fit is dropped.
    """

    def __init__(self, kernel: Kernel, config: WlanConfig, forward: Callable[[Packet], None],
                 stats: StatsCollector | None = None, name: str = "wlan",
                 rng: random.Random | None = None):
        self.kernel = kernel
        self.config = config
        self.forward = forward
        self.stats = stats if stats is not None else StatsCollector()
        self.name = name
        self.rng = rng if rng is not None else kernel.stream(f"{name}/dcf")
        self.queue: deque[_Queued] = deque()
        self.occupancy = 0
        self.max_occupancy = 0
        self.busy = False
        self.cw = config.cw_min
        self.difs = to_ticks(config.difs)
        self.slot = to_ticks(config.slot)
        self.dropped = 0
        self.failed = 0
        self.delivered = 0
        self.backoffs: list[int] = []

    @property
    def resident(self) -> int:
        return len(self.queue)

    def serialization(self, packet: Packet) -> int:
        return to_ticks(packet.bits / self.config.data_rate)

    def accept(self, packet: Packet) -> bool:
        bits = packet.bits
        if self.occupancy + bits > self.config.buffer_size:
            self.dropped += 1
            self.stats.packet_dropped(packet, "wlan-buffer-overflow")
            return False
        now = self.kernel.now_ticks
        packet.arrive(self.name, now)
        self.queue.append(_Queued(packet, now))
        self.occupancy += bits
        self.max_occupancy = max(self.max_occupancy, self.occupancy)
        assert self.occupancy <= self.config.buffer_size
        if not self.busy:
            self.busy = True
            self.cw = self.config.cw_min
            self._contend()
        return True

    def _contend(self) -> None:
        slots = self.rng.randint(0, self.cw)
        self.backoffs.append(slots)
        self.kernel.schedule_in(self.difs + slots * self.slot, self.name, "backoff-expiry",
                                self._transmit)

    def _transmit(self) -> None:
        head = self.queue[0]
        now = self.kernel.now_ticks
        head.attempts += 1
        if head.first_send is None:
            head.first_send = now
            self.stats.record_mad("wlan", self.name, head.queued_at, now)
        self.kernel.schedule_in(self.serialization(head.packet), self.name, "tx-end", self._tx_end)

    def _tx_end(self) -> None:
        head = self.queue[0]
        p = self.config.collision_probability
        if p > 0 and self.rng.random() < p:
            if head.attempts > self.config.retry_limit:
                self._release()
                self.failed += 1
                self.stats.packet_failed(head.packet, "wlan-retry-limit")
                self._next()
                return
            self.cw = min(2 * self.cw + 1, self.config.cw_max)
            self._contend()
            return
        now = self.kernel.now_ticks
        self._release()
        head.packet.depart(now)
        self.delivered += 1
        self.stats.record_hop("wlan", self.name, head.queued_at, now)
        self.forward(head.packet)
        self._next()

    def _release(self) -> None:
        head = self.queue.popleft()
        self.occupancy -= head.packet.bits

    def _next(self) -> None:
        if self.queue:
            self.cw = self.config.cw_min
            self._contend()
        else:
            self.busy = False


class WimaxSegment:
    """Subscriber station using request/grant access to the base station.

    Each packet first wins a ranging-code contention round (all active
    subscribers pick one of ``ranging_codes`` codes; a code picked twice is
    lost and retried next round, each round costing ``request_grant_rtt``),
    then waits one ``frame_duration`` for the grant and is serialised at
    ``serving_rate``.
    """

    def __init__(self, kernel: Kernel, config: WimaxConfig, forward: Callable[[Packet], None],
                 stats: StatsCollector | None = None, name: str = "wimax",
                 rng: random.Random | None = None):
        self.kernel = kernel
        self.config = config
        self.forward = forward
        self.stats = stats if stats is not None else StatsCollector()
        self.name = name
        self.rng = rng if rng is not None else kernel.stream(f"{name}/ranging")
        self.queue: deque[_Queued] = deque()
        self.busy = False
        self.rtt = to_ticks(config.request_grant_rtt)
        self.frame = to_ticks(config.frame_duration)
        self.delivered = 0
        self.rounds: list[int] = []

    @property
    def resident(self) -> int:
        return len(self.queue)

    def contention_rounds(self) -> int:
        codes = self.config.ranging_codes
        rounds = 1
        while True:
            mine = self.rng.randrange(codes)
            others = (self.rng.randrange(codes) for _ in range(self.config.active_subscribers - 1))
            if all(c != mine for c in others):
                return rounds
            rounds += 1

    def accept(self, packet: Packet) -> bool:
        now = self.kernel.now_ticks
        packet.arrive(self.name, now)
        self.queue.append(_Queued(packet, now))
        if not self.busy:
            self.busy = True
            self._serve()
        return True

    def service_time(self, packet: Packet, rounds: int = 1) -> int:
        return rounds * self.rtt + self.frame + to_ticks(packet.bits / self.config.serving_rate)

    def _serve(self) -> None:
        head = self.queue[0]
        rounds = self.contention_rounds()
        self.rounds.append(rounds)
        self.kernel.schedule_in(self.service_time(head.packet, rounds), self.name,
                                "service-complete", self._done)

    def _done(self) -> None:
        head = self.queue.popleft()
        now = self.kernel.now_ticks
        head.packet.depart(now)
        self.delivered += 1
        self.stats.record_hop("wimax", self.name, head.queued_at, now)
        self.forward(head.packet)
        if self.queue:
            self._serve()
        else:
            self.busy = False


class _UmtsStage:
    def __init__(self, segment: "UmtsSegment", name: str, index: int):
        self.segment = segment
        self.name = name
        self.index = index
        self.queue: deque[_Queued] = deque()
        self.busy = False


class UmtsSegment:
    """Staged UMTS pipeline from user equipment to the UMTS server.

    Each stage is a FIFO server adding ``processing_time`` plus serialisation
    at ``stage_rate``. An attempt may expire (``timeout_probability``) and is
    retried after ``retry_timeout``, at most ``max_retry_on_time_expiry``
    times. The codec components are added once, after the last stage.
    AAA authentication is part of the stage processing time.
    """

    def __init__(self, kernel: Kernel, config: UmtsConfig, forward: Callable[[Packet], None],
                 stats: StatsCollector | None = None, rng: random.Random | None = None):
        self.kernel = kernel
        self.config = config
        self.forward = forward
        self.stats = stats if stats is not None else StatsCollector()
        self.rng = rng if rng is not None else kernel.stream("umts/timeouts")
        self.stages = [_UmtsStage(self, n, i) for i, n in enumerate(config.stage_list)]
        self.processing = to_ticks(config.processing_time)
        self.retry_wait = to_ticks(config.retry_timeout)
        self.codec = to_ticks(umts_delay(config.codec_components))
        self.in_codec = 0
        self.entered: dict[int, int] = {}
        self.delivered = 0
        self.failed = 0

    @property
    def name(self) -> str:
        return self.stages[0].name

    @property
    def resident(self) -> int:
        return sum(len(s.queue) for s in self.stages) + self.in_codec

    def stage_time(self, packet: Packet) -> int:
        return self.processing + to_ticks(packet.bits / self.config.stage_rate)

    def accept(self, packet: Packet) -> bool:
        self.entered[packet.id] = self.kernel.now_ticks
        self._enter(self.stages[0], packet)
        return True

    def _enter(self, stage: _UmtsStage, packet: Packet) -> None:
        now = self.kernel.now_ticks
        packet.arrive(stage.name, now)
        stage.queue.append(_Queued(packet, now))
        if not stage.busy:
            stage.busy = True
            self._attempt(stage)

    def _attempt(self, stage: _UmtsStage) -> None:
        head = stage.queue[0]
        p = self.config.timeout_probability
        if p > 0 and self.rng.random() < p:
            head.attempts += 1
            if head.attempts > self.config.max_retry_on_time_expiry:
                stage.queue.popleft()
                self.entered.pop(head.packet.id, None)
                self.failed += 1
                self.stats.packet_failed(head.packet, "umts-retries-exhausted")
                self._next(stage)
                return
            self.kernel.schedule_in(self.retry_wait, stage.name, "ack-timeout", self._attempt, stage)
            return
        now = self.kernel.now_ticks
        if stage.index == 0:
            self.stats.record(f"umts.{ACCESS_DELAY}", stage.name, now,
                              (now - head.queued_at) / 1e9)
        self.kernel.schedule_in(self.stage_time(head.packet), stage.name, "service-complete",
                                self._stage_done, stage)

    def _stage_done(self, stage: _UmtsStage) -> None:
        head = stage.queue.popleft()
        now = self.kernel.now_ticks
        head.packet.depart(now)
        if stage.index + 1 < len(self.stages):
            self._enter(self.stages[stage.index + 1], head.packet)
        else:
            self.in_codec += 1
            self.kernel.schedule_in(self.codec, "umts_codec", "service-complete",
                                    self._exit, head.packet)
        self._next(stage)

    def _next(self, stage: _UmtsStage) -> None:
        if stage.queue:
            self._attempt(stage)
        else:
            stage.busy = False

    def _exit(self, packet: Packet) -> None:
        self.in_codec -= 1
        now = self.kernel.now_ticks
        entered = self.entered.pop(packet.id)
        self.delivered += 1
        d = (now - entered) / 1e9
        node = self.stages[0].name
        self.stats.record(f"umts.{END_TO_END}", node, now, d)
        self.stats.record(f"umts.{PACKET_DELAY}", node, now, d)
        self.forward(packet)


class CloudLink:
    """IP cloud between the access network and the health-centre server."""

    def __init__(self, kernel: Kernel, config: CloudLinkConfig, forward: Callable[[Packet], None],
                 name: str = "cloud"):
        self.kernel = kernel
        self.config = config
        self.forward = forward
        self.name = name
        self.latency = to_ticks(config.latency)
        self.line_free_at = 0
        self.in_transit = 0

    @property
    def resident(self) -> int:
        return self.in_transit

    def accept(self, packet: Packet) -> bool:
        now = self.kernel.now_ticks
        packet.arrive(self.name, now)
        start = max(now, self.line_free_at)
        self.line_free_at = start + to_ticks(packet.bits / self.config.rate)
        self.in_transit += 1
        self.kernel.schedule_at(self.line_free_at + self.latency, self.name, "service-complete",
                                self._arrived, packet)
        return True

    def _arrived(self, packet: Packet) -> None:
        self.in_transit -= 1
        packet.depart(self.kernel.now_ticks)
        self.forward(packet)


class Server:
    """Health-centre sink; archives the link-delay breakdown of every packet."""

    def __init__(self, kernel: Kernel, stats: StatsCollector, name: str = "server"):
        self.kernel = kernel
        self.stats = stats
        self.name = name
        self.received: list[Packet] = []
        self.keep_packets = False

    @property
    def resident(self) -> int:
        return 0

    def accept(self, packet: Packet) -> bool:
        now = self.kernel.now_ticks
        packet.arrive(self.name, now)
        packet.depart(now)
        packet.delivered_at = now
        self.stats.record_e2e(packet)
        if self.keep_packets:
            self.received.append(packet)
        return True
