"""Unicast and broadcast timing with binary exponential backoff."""
from __future__ import annotations

import random
from dataclasses import dataclass

from .. import phy


@dataclass(frozen=True)
class MacTiming:
    sifs_us: float = 10.0
    difs_us: float = 50.0
    slot_us: float = 20.0
    cw_min: int = 31
    cw_max: int = 1023
    max_retries: int = 11
    ack_bytes: int = 40
    ack_rate: int = phy.BEACON_RATE

    def __post_init__(self):
        if min(self.sifs_us, self.difs_us, self.slot_us) < 0:
            raise ValueError("inter-frame times must be >= 0")
        if not 0 < self.cw_min <= self.cw_max:
            raise ValueError("need 0 < cw_min <= cw_max")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    @property
    def ack_us(self) -> float:
        return phy.packet_airtime(self.ack_rate, self.ack_bytes)

    def mean_first_attempt_us(self, rate_index: int, size_bytes: float) -> float:
        """Expected duration of a first, successful attempt."""
        return (self.difs_us + self.cw_min / 2.0 * self.slot_us + phy.packet_airtime(rate_index, size_bytes)
                + self.sifs_us + self.ack_us)


@dataclass(frozen=True)
class TxOutcome:
    delivered: bool
    retransmissions: int
    elapsed_us: float

    @property
    def attempts(self) -> int:
        return self.retransmissions + 1


def transmit_unicast(success_prob: float, rate_index: int, size_bytes: float,
                     rng: random.Random, mac: MacTiming = MacTiming()) -> TxOutcome:
    """Send one frame with up to ``mac.max_retries`` retransmissions.

    Every attempt costs DIFS, a uniform backoff draw from the current window,
    the frame airtime, SIFS and the ack airtime; the window doubles per retry.
    """
    if not 0.0 <= success_prob <= 1.0:
        raise ValueError("success_prob must lie in [0, 1]")
    air = phy.packet_airtime(rate_index, size_bytes)
    fixed = mac.difs_us + air + mac.sifs_us + mac.ack_us
    cw = mac.cw_min
    elapsed = 0.0
    for attempt in range(mac.max_retries + 1):
        elapsed += fixed + rng.randint(0, cw) * mac.slot_us
        if rng.random() < success_prob:
            return TxOutcome(True, attempt, elapsed)
        cw = min(2 * cw + 1, mac.cw_max)
    return TxOutcome(False, mac.max_retries, elapsed)


def broadcast_time(rate_index: int, size_bytes: float, rng: random.Random,
                   mac: MacTiming = MacTiming()) -> float:
    """One unacknowledged broadcast: DIFS, one backoff draw and the airtime."""
    return mac.difs_us + rng.randint(0, mac.cw_min) * mac.slot_us + phy.packet_airtime(rate_index, size_bytes)
