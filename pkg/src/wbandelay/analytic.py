"""Closed-form CSMA/CA delay model, path delay decomposition and UMTS delay sum.

All byte lengths are converted to bits before dividing by the channel rate.
Default frame geometry and timing follow IEEE 802.15.4 at 2.4 GHz
(250 kbit/s, 62.5 ksymbol/s).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DegenerateParameters(ValueError):
    """The requested quantity is undefined for these parameters."""


@dataclass(frozen=True)
class CsmaParams:
    l_phy: int = 6
    l_mac_hdr: int = 9
    l_mac_ftr: int = 2
    payload: int = 1024
    r_data: float = 250_000.0
    t_bo_slot: float = 0.32e-3
    t_ta: float = 0.192e-3
    t_ifs: float = 0.64e-3
    be_min: int = 2
    be_max: int = 3
    max_backoffs: int = 3
    n_devices: int = 1

    def __post_init__(self):
        for name in ("l_phy", "l_mac_hdr", "l_mac_ftr", "payload"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.r_data > 0:
            raise ValueError("r_data must be > 0")
        for name in ("t_bo_slot", "t_ta", "t_ifs"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0 <= self.be_min <= self.be_max:
            raise ValueError(f"need 0 <= be_min <= be_max, got be_min={self.be_min}, be_max={self.be_max}")
        if self.max_backoffs < 0:
            raise ValueError("max_backoffs must be >= 0")
        if self.n_devices < 1:
            raise ValueError("n_devices must be >= 1")


@dataclass(frozen=True)
class CsmaDelayBreakdown:
    t_bo: float
    t_data: float
    t_ta: float
    t_ack: float
    t_ifs: float
    total: float


@dataclass(frozen=True)
class DelayEventDistribution:
    """Staged slot-index terms and the normalising sum they are divided by.

    ``terms[n]`` is the weighted term for global slot index ``n``;
    ``stage_exponents[n]`` the backoff exponent of the stage that index
    belongs to. ``normalizer_terms`` are the general-formula terms forming
    the denominator of :func:`expected_time_delay`.
    """

    n_devices: int
    be_min: int
    be_max: int
    slot_index: tuple[int, ...]
    stage_exponents: tuple[int, ...]
    terms: tuple[float, ...]
    normalizer_terms: tuple[float, ...]
    p_tss: dict[int, float] = field(default_factory=dict)

    def scaled(self, factor: float) -> "DelayEventDistribution":
        if not factor > 0:
            raise ValueError("factor must be positive")
        return DelayEventDistribution(
            self.n_devices, self.be_min, self.be_max, self.slot_index, self.stage_exponents,
            tuple(t * factor for t in self.terms),
            tuple(t * factor for t in self.normalizer_terms),
            dict(self.p_tss))


@dataclass(frozen=True)
class PathDelayBreakdown:
    d1: float
    d2: float
    d3: float
    d_total: float


@dataclass(frozen=True)
class UmtsDelayComponents:
    network_delay: float = 0.0
    encoding_delay: float = 0.0
    decoding_delay: float = 0.0
    compression_delay: float = 0.0
    decompression_delay: float = 0.0

    def __post_init__(self):
        for name in ("network_delay", "encoding_delay", "decoding_delay",
                     "compression_delay", "decompression_delay"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def d(self) -> float:
        return umts_delay(self)


def t_data(params: CsmaParams) -> float:
    """Frame airtime: PHY header, MAC header, payload and MAC footer."""
    return (params.l_phy + params.l_mac_hdr + params.payload + params.l_mac_ftr) * 8 / params.r_data


def t_ack(params: CsmaParams) -> float:
    """Acknowledgement airtime (a frame with no payload)."""
    return (params.l_phy + params.l_mac_hdr + params.l_mac_ftr) * 8 / params.r_data


def t_backoff(bo_slots: int, t_bo_slot: float) -> float:
    if bo_slots < 0:
        raise ValueError("bo_slots must be >= 0")
    return bo_slots * t_bo_slot


def total_csma_delay(params: CsmaParams, bo_slots: int) -> CsmaDelayBreakdown:
    t_bo = t_backoff(bo_slots, params.t_bo_slot)
    td = t_data(params)
    ta = t_ack(params)
    total = t_bo + td + params.t_ta + ta + params.t_ifs
    return CsmaDelayBreakdown(t_bo, td, params.t_ta, ta, params.t_ifs, total)


def p_backoff_slot(be: int) -> float:
    """Probability of any one slot in a window of ``2**be`` slots."""
    if be < 0:
        raise ValueError("be must be >= 0")
    return 1.0 / (1 << be)


def p_tss(n_devices: int, be: int) -> float:
    """Slot transmission-success probability ``p (1-p)**(be-2)`` with ``p = 1/n_devices``."""
    if n_devices < 1:
        raise ValueError("n_devices must be >= 1")
    if be < 2:
        raise ValueError(f"backoff exponent must be >= 2 for the slot-success model, got {be}")
    p = 1.0 / n_devices
    return p * (1.0 - p) ** (be - 2)


def delay_event_distribution(n_devices: int, be_min: int, be_max: int) -> DelayEventDistribution:
    """Stage-by-stage weighted slot terms ``n / 2**BE * p_tss(BE)``.

    Stage one covers indices ``0 .. 2**be_min - 1`` at ``be_min``; each later
    stage continues the index count over ``2**BE`` more slots at the next
    exponent. For ``be_min=2, be_max=3`` that is 0..3 then 4..11.
    """
    if n_devices < 1:
        raise ValueError("n_devices must be >= 1")
    if not 2 <= be_min <= be_max:
        raise ValueError(f"need 2 <= be_min <= be_max, got be_min={be_min}, be_max={be_max}")
    probs = {be: p_tss(n_devices, be) for be in range(be_min, be_max + 1)}
    index, stage, terms = [], [], []
    n = 0
    for be in range(be_min, be_max + 1):
        w = p_backoff_slot(be) * probs[be]
        for _ in range(1 << be):
            index.append(n)
            stage.append(be)
            terms.append(n * w)
            n += 1
    normalizer = []
    for be in range(be_min, be_max + 1):
        w = p_backoff_slot(be) * probs[be]
        normalizer.extend(k * w for k in range((1 << (be - 1)) + 1))
    return DelayEventDistribution(n_devices, be_min, be_max, tuple(index), tuple(stage),
                                  tuple(terms), tuple(normalizer), probs)


def expected_time_delay(dist: DelayEventDistribution) -> float:
    """Expected delay in backoff slots: staged sum over the general-formula sum."""
    den = sum(dist.normalizer_terms)
    if den == 0:
        raise DegenerateParameters(
            f"normalising sum is zero for n_devices={dist.n_devices}, "
            f"be_min={dist.be_min}, be_max={dist.be_max}")
    return sum(dist.terms) / den


def path_delay(d1: float, d2: float, d3: float) -> PathDelayBreakdown:
    for name, v in (("d1", d1), ("d2", d2), ("d3", d3)):
        if v < 0:
            raise ValueError(f"{name} must be >= 0")
    return PathDelayBreakdown(d1, d2, d3, d1 + d2 + d3)


def umts_delay(components: UmtsDelayComponents) -> float:
    return (components.network_delay + components.encoding_delay + components.decoding_delay
            + components.compression_delay + components.decompression_delay)


def simulate_slot_success(n_devices: int, be: int, trials: int,
                          rng: np.random.Generator) -> float:
    """Monte Carlo frequency of the slot-success event.

    Each trial runs ``be - 1`` allocation rounds; in every round the channel
    goes to one of ``n_devices`` devices uniformly. Success means the tagged
    device (index 0) wins the first round and none of the others.
    """
    if be < 2:
        raise ValueError("be must be >= 2")
    if trials <= 0:
        raise ValueError("trials must be positive")
    winners = rng.integers(0, n_devices, size=(trials, be - 1))
    ok = winners[:, 0] == 0
    if be > 2:
        ok &= (winners[:, 1:] != 0).all(axis=1)
    return float(ok.mean())


def standard_error(p: float, trials: int) -> float:
    return float(np.sqrt(p * (1.0 - p) / trials))
