"""Closed-form comparison of five LQE methods on a tandem network.

Each method gets a time cost per estimation interval and a PDR-mapping
error summed over the rates in scope; both are normalised and added into an
overall efficiency in [0, 2].

Sizes are in bytes, times in microseconds, SNR in dB. Packet airtimes use
the same bit-count convention as :mod:`lqe_lab.phy`.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, fields, replace

from . import phy


class MethodId(str, enum.Enum):
    UNICAST = "unicast"
    BEACON = "beacon"
    BROADCAST = "broadcast"
    DATA = "data"
    SNR_PROFILE = "snr_profile"


METHOD_ORDER = tuple(MethodId)


@dataclass(frozen=True)
class LqeModelParams:
    data_bytes: float = 1500.0
    beacon_bytes: float = 40.0
    nodes: int = 40
    probes: int = 100             # w: probes per estimation interval
    data_packets: int = 10        # w_d: data packets per interval per neighbour
    sifs_us: float = 10.0
    difs_us: float = 50.0
    cw_min: int = 32
    slot_us: float = 20.0
    p_connect: float = 0.3
    mean_snr: float = 10.0
    sigma: float = 1.0
    # cumulative sample count behind the data-packet SNR estimate; None -> probes
    data_samples: float | None = None
    rates: tuple[int, ...] = (1, 2)

    def __post_init__(self):
        if min(self.sifs_us, self.difs_us, self.slot_us, self.cw_min) < 0:
            raise ValueError("times and contention window must be >= 0")
        if not 0.0 <= self.p_connect <= 1.0:
            raise ValueError("p_connect must lie in [0, 1]")
        if self.probes < 1 or self.data_packets < 1:
            raise ValueError("probes and data_packets must be >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.data_samples is not None and self.data_samples <= 0:
            raise ValueError("data_samples must be > 0")
        for k in self.rates:
            phy.check_rate(k)

    @property
    def backoff_us(self) -> float:
        return self.cw_min / 2.0 * self.slot_us

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))


FIG1_SETS = ((100, 10), (10, 100))


def tandem_neighbors(nodes: int, p_connect: float | None = None) -> float:
    """Mean neighbour count of an ``nodes``-long line, optionally thinned."""
    if nodes < 2:
        raise ValueError("a tandem network needs at least 2 nodes")
    n = 2.0 * (nodes - 1) / nodes
    return n if p_connect is None else n * p_connect


def _airtimes(p: LqeModelParams) -> list[float]:
    return [phy.packet_airtime(k, p.data_bytes) for k in p.rates]


def estimation_time(method: MethodId | str, p: LqeModelParams) -> float:
    """Channel time spent on one estimation interval, in microseconds."""
    method = MethodId(method)
    if not p.rates:
        raise ValueError("empty rate scope")
    n_bar = tandem_neighbors(p.nodes)
    beacon_air = phy.packet_airtime(phy.BEACON_RATE, p.beacon_bytes)
    data_air = _airtimes(p)
    n_rates = len(p.rates)
    t_bt = p.backoff_us
    if method is MethodId.UNICAST:
        per = sum(data_air) + (p.difs_us + p.sifs_us + t_bt + beacon_air) * n_rates
        return per * p.probes * n_bar
    if method is MethodId.BEACON:
        return (beacon_air + p.sifs_us + t_bt) * p.probes * n_bar
    if method is MethodId.BROADCAST:
        return (sum(data_air) + (p.sifs_us + t_bt) * n_rates) * p.probes * n_bar
    mean_air = sum(data_air) / n_rates
    return (mean_air + p.difs_us + p.sifs_us + t_bt + beacon_air) * p.data_packets * n_bar * p.p_connect


def time_efficiency(method: MethodId | str, p: LqeModelParams) -> float:
    method = MethodId(method)
    tau_d = estimation_time(MethodId.DATA, p)
    if tau_d <= 0:
        raise ValueError("data-packet estimation time must be positive")
    if method in (MethodId.DATA, MethodId.SNR_PROFILE):
        return 1.0
    return tau_d / (estimation_time(method, p) + tau_d)


def snr_error(method: MethodId | str, p: LqeModelParams, rate_index: int | None = None) -> float:
    """Error of the mean SNR each method works from.

    The data-packet method averages over ``data_samples * R`` samples, R being
    the rate in Mbps (1 when no rate is given); the SNR profile never discards
    samples and has zero error.
    """
    method = MethodId(method)
    if method is MethodId.SNR_PROFILE:
        return 0.0
    if method is MethodId.DATA:
        w_bar = p.data_samples if p.data_samples is not None else p.probes
        r = phy.rate_mbps(rate_index) if rate_index is not None else 1.0
        return p.sigma / (w_bar * r)
    return p.sigma / p.probes


def _mapping(method: MethodId, k: int, p: LqeModelParams) -> float:
    est = p.mean_snr - snr_error(method, p, k)
    if method is MethodId.BEACON:
        return phy.packet_success_prob(phy.BEACON_RATE, est, p.beacon_bytes)
    return phy.packet_success_prob(k, est, p.data_bytes)


def mapping_error(method: MethodId | str, p: LqeModelParams) -> float:
    """Summed |estimated - actual| delivery probability over the rates in scope."""
    method = MethodId(method)
    if not p.rates:
        raise ValueError("empty rate scope")
    total = 0.0
    for k in p.rates:
        actual = phy.packet_success_prob(k, p.mean_snr, p.data_bytes)
        total += abs(_mapping(method, k, p) - actual)
    return total


def estimation_efficiency(method: MethodId | str, p: LqeModelParams) -> tuple[float, float]:
    """``(delta, normalised efficiency)`` for one method.

    When every method maps perfectly the normalisation is undefined and all
    methods score 1.
    """
    method = MethodId(method)
    deltas = {m: mapping_error(m, p) for m in METHOD_ORDER}
    total = sum(deltas.values())
    if total == 0.0:
        return deltas[method], 1.0
    return deltas[method], 1.0 - deltas[method] / total


def overall_efficiency(method: MethodId | str, p: LqeModelParams) -> float:
    return estimation_efficiency(method, p)[1] + time_efficiency(method, p)


def rank_all(p: LqeModelParams) -> list[MethodId]:
    scores = {m: overall_efficiency(m, p) for m in METHOD_ORDER}
    return sorted(METHOD_ORDER, key=lambda m: (-scores[m], METHOD_ORDER.index(m)))


@dataclass(frozen=True)
class MethodReport:
    method: MethodId
    tau_us: float
    eps_t: float
    delta: float
    eps_e: float
    eps: float
    rank: int


def evaluate(p: LqeModelParams) -> list[MethodReport]:
    """All metrics for every method, in ranking order."""
    ranking = rank_all(p)
    rows = []
    for m in METHOD_ORDER:
        delta, eps_e = estimation_efficiency(m, p)
        eps_t = time_efficiency(m, p)
        tau = estimation_time(m, p)
        rows.append(MethodReport(m, tau, eps_t, delta, eps_e, eps_e + eps_t, ranking.index(m) + 1))
    return sorted(rows, key=lambda r: r.rank)


def fig1_params(probes: int, data_packets: int, **overrides) -> LqeModelParams:
    return replace(LqeModelParams(), probes=probes, data_packets=data_packets, **overrides)
