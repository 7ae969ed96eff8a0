"""Rate selection: the SNR-profile G-metric selector and the SampleRate baseline."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable, Mapping

from . import phy
from .profile import SnrProfile, lookup_pdr, quantize

CW_MIN_RATE = 31          # contention window used by the G metric
SLOT_US = 20.0
MAX_RETRIES = 11
PDR_FLOOR = 1e-4
ADJACENT_PROBE = 0.005    # per side
SAMPLERATE_PROBE = 0.10
FALLBACK_RATE = 1


@dataclass
class RateDecision:
    rate: int
    metric: dict[int, float]

    @property
    def value(self) -> float:
        return self.metric[self.rate]


def backoff_time(pdr: float, cw_min: float = CW_MIN_RATE) -> float:
    """Expected backoff in slots for a link with per-attempt success ``pdr``.

    Returns ``inf`` for a dead link.
    """
    if not 0.0 <= pdr <= 1.0:
        raise ValueError("pdr must lie in [0, 1]")
    if pdr == 0.0:
        return math.inf
    loss = 1.0 - pdr
    t = 0.0
    for i in range(MAX_RETRIES):
        t += 2 ** i * loss ** (i + 1)
    return cw_min / 2.0 * (t + 1.0) / pdr


def g_metric(rate_index: int, pdr: float, size_bytes: float, slot_us: float = SLOT_US,
             cw_min: float = CW_MIN_RATE) -> float:
    """Expected per-packet cost in microseconds: airtime/PDR plus backoff."""
    if pdr < PDR_FLOOR:
        return math.inf
    return phy.packet_airtime(rate_index, size_bytes) / pdr + backoff_time(pdr, cw_min) * slot_us


def _argmin(metric: Mapping[int, float]) -> int:
    best, best_v = FALLBACK_RATE, math.inf
    for k in sorted(metric):
        if metric[k] < best_v:
            best, best_v = k, metric[k]
    return best


LivePdr = Callable[[int, int], "float | None"]


def select_rate(profile: SnrProfile, snr: float, alpha_s: float = 0.0,
                live_pdr: LivePdr | None = None, size_bytes: float | None = None,
                write_back: bool = True, slot_us: float = SLOT_US) -> RateDecision:
    """Pick the rate minimising G at the current SNR.

    ``live_pdr(rate_index, snr_bin)`` returns the driver's ack/tx ratio for
    that bin or ``None``. Where a live value exists it is blended with the
    profile by ``alpha_s`` and, if ``write_back``, stored as the bin's PDR.
    Rates with no usable PDR cost ``inf``; if every rate does, rate 1 wins.
    """
    if not 0.0 <= alpha_s <= 1.0:
        raise ValueError("alpha_s must lie in [0, 1]")
    size = size_bytes if size_bytes is not None else profile.packet_size
    b = quantize(snr)
    metric = {}
    for k in range(1, phy.N_RATES + 1):
        stored = lookup_pdr(profile, k, b)
        live = live_pdr(k, b) if live_pdr is not None else None
        if live is None:
            pdr = stored
        elif stored is None:
            pdr = live
        else:
            pdr = alpha_s * live + (1.0 - alpha_s) * stored
        if live is not None and write_back and alpha_s > 0:
            profile.record(k, b).pdr = pdr
        metric[k] = math.inf if pdr is None else g_metric(k, pdr, size, slot_us)
    return RateDecision(_argmin(metric), metric)


def probe_rate(decision: RateDecision | int, rng: random.Random, fraction: float = ADJACENT_PROBE) -> int:
    """Occasionally step to an adjacent rate; edge rates probe their only neighbour."""
    k = decision.rate if isinstance(decision, RateDecision) else decision
    u = rng.random()
    if k == 1:
        return 2 if u < fraction else 1
    if k == phy.N_RATES:
        return k - 1 if u < fraction else k
    if u < fraction:
        return k - 1
    if u < 2 * fraction:
        return k + 1
    return k


@dataclass
class SampleRateState:
    """Per-rate smoothed success indicator of the SampleRate baseline.

    Probing sends ``probe_fraction`` of packets at a rate whose lossless
    airtime beats the current expected airtime, skipping rates that failed
    ``max_failures`` packets in a row within the last ``failure_hold_s``.
    """
    alpha_r: float = 0.1
    probe_fraction: float = SAMPLERATE_PROBE
    pdr: dict[int, float] = field(default_factory=lambda: {k: 1.0 for k in range(1, phy.N_RATES + 1)})
    failures: dict[int, int] = field(default_factory=dict)
    failed_at: dict[int, float] = field(default_factory=dict)
    max_failures: int = 4
    failure_hold_s: float = 10.0

    def __post_init__(self):
        if not 0.0 <= self.alpha_r <= 1.0:
            raise ValueError("alpha_r must lie in [0, 1]")


def samplerate_update(state: SampleRateState, rate_index: int, retransmissions: int,
                      delivered: bool = True, now_s: float = 0.0) -> SampleRateState:
    if retransmissions < 0:
        raise ValueError("retransmissions must be >= 0")
    k = phy.check_rate(rate_index)
    old = state.pdr.get(k, 1.0)
    state.pdr[k] = state.alpha_r / (1.0 + retransmissions) + (1.0 - state.alpha_r) * old
    if delivered:
        state.failures[k] = 0
    else:
        state.failures[k] = state.failures.get(k, 0) + 1
        if state.failures[k] >= state.max_failures:
            state.failed_at[k] = now_s
    return state


def samplerate_select(state: SampleRateState, size_bytes: float) -> RateDecision:
    metric = {}
    for k in range(1, phy.N_RATES + 1):
        p = state.pdr.get(k, 0.0)
        metric[k] = math.inf if p <= 0.0 else phy.packet_airtime(k, size_bytes) / p
    return RateDecision(_argmin(metric), metric)


def samplerate_pick(state: SampleRateState, size_bytes: float, rng: random.Random,
                    now_s: float = 0.0) -> tuple[int, int]:
    """Return ``(selected, used)`` for the next packet."""
    decision = samplerate_select(state, size_bytes)
    k = decision.rate
    if rng.random() >= state.probe_fraction:
        return k, k
    current = decision.value
    candidates = [
        j for j in range(1, phy.N_RATES + 1)
        if j != k
        and phy.packet_airtime(j, size_bytes) < current
        and not (state.failures.get(j, 0) >= state.max_failures
                 and now_s - state.failed_at.get(j, -math.inf) < state.failure_hold_s)
    ]
    if not candidates:
        return k, k
    return k, candidates[rng.randrange(len(candidates))]
