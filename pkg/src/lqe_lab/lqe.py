"""Packet-counting PDR estimators and the accuracy metric.

Estimators return ``None`` when they have nothing to report yet (empty
beacon window, no data transmitted in the interval).
"""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

DEFAULT_ALPHA_P = 0.2
DEFAULT_WINDOW = 10


class Method(str, enum.Enum):
    SNR_PROFILE = "snr_profile"
    BROADCAST_EWMA = "broadcast"
    BEACON = "beacon"
    DATA = "data"


@dataclass
class EwmaState:
    value: float = 0.0
    alpha_p: float = DEFAULT_ALPHA_P

    def __post_init__(self):
        if not 0.0 <= self.alpha_p <= 1.0:
            raise ValueError("alpha_p must lie in [0, 1]")
        if not 0.0 <= self.value <= 1.0:
            raise ValueError("value must lie in [0, 1]")


def ewma_update(state: EwmaState, received: bool) -> EwmaState:
    x = 1.0 if received else 0.0
    if state.alpha_p == 1.0:
        value = x
    else:
        value = state.alpha_p * x + (1.0 - state.alpha_p) * state.value
    return EwmaState(min(1.0, max(0.0, value)), state.alpha_p)


class BeaconWindow:
    """Ring of the last ``size`` beacon reception flags (ETX-style counting)."""

    def __init__(self, size: int = DEFAULT_WINDOW):
        if size < 1:
            raise ValueError("window size must be >= 1")
        self.size = size
        self.flags: deque[bool] = deque(maxlen=size)

    def push(self, received: bool) -> None:
        self.flags.append(bool(received))

    def __len__(self):
        return len(self.flags)


def beacon_estimate(window: BeaconWindow) -> float | None:
    if not window.flags:
        return None
    return sum(window.flags) / len(window.flags)


@dataclass
class DataPacketCounter:
    tx: int = 0
    ack: int = 0

    def record(self, delivered: bool) -> None:
        self.tx += 1
        self.ack += bool(delivered)

    def reset(self) -> None:
        self.tx = self.ack = 0


def data_packet_estimate(counter: DataPacketCounter) -> float | None:
    if counter.ack > counter.tx or counter.ack < 0:
        raise ValueError("ack count exceeds tx count")
    if counter.tx == 0:
        return None
    return counter.ack / counter.tx


def accuracy_mae(estimates: Sequence[float], benchmark: Sequence[float]) -> float:
    """Mean absolute error between an estimate series and the benchmark."""
    if len(estimates) != len(benchmark):
        raise ValueError(f"series lengths differ: {len(estimates)} vs {len(benchmark)}")
    if not estimates:
        raise ValueError("need at least one sample")
    return sum(abs(e - b) for e, b in zip(estimates, benchmark)) / len(estimates)


@dataclass
class LqeContext:
    indoor: bool = True
    mobile: bool = False
    accuracy: str = "normal"  # "normal" or "highest"
    samples: int = 0          # broadcast samples seen on the link
    window: int = DEFAULT_WINDOW

    def __post_init__(self):
        if self.accuracy not in ("normal", "highest"):
            raise ValueError("accuracy must be 'normal' or 'highest'")


def select_method(context: LqeContext, deltas: Mapping[Method, float] | None = None) -> Method:
    """Pick the estimator for a link.

    The SNR profile is the default. Packet counting is only considered when
    the highest accuracy is requested and the link has a full window of
    broadcast samples; if measured errors are supplied the lower one wins,
    ties going to the profile.
    """
    if context.accuracy != "highest" or context.samples < context.window:
        return Method.SNR_PROFILE
    if deltas is None:
        return Method.BROADCAST_EWMA
    profile = deltas.get(Method.SNR_PROFILE)
    broadcast = deltas.get(Method.BROADCAST_EWMA)
    if broadcast is None:
        return Method.SNR_PROFILE
    if profile is None or broadcast < profile:
        return Method.BROADCAST_EWMA
    return Method.SNR_PROFILE


def ewma_series(flags: Iterable[bool], alpha_p: float, initial: float = 0.0) -> list[float]:
    state = EwmaState(initial, alpha_p)
    out = []
    for flag in flags:
        state = ewma_update(state, flag)
        out.append(state.value)
    return out


def optimize_alpha_p(flags: Sequence[bool], benchmark: Sequence[float],
                     grid: Sequence[float] | None = None, initial: float = 0.0) -> tuple[float, float]:
    """Offline grid search for the alpha_p minimising MAE against a benchmark.

    Only meaningful after the fact: it needs the benchmark series.
    Returns ``(alpha_p, mae)``; ties go to the smaller alpha_p.
    """
    if grid is None:
        grid = [round(0.05 * i, 2) for i in range(21)]
    best = None
    for a in grid:
        err = accuracy_mae(ewma_series(flags, a, initial), benchmark)
        if best is None or err < best[1]:
            best = (a, err)
    return best

