"""Physical layer model for IEEE 802.11b/g links.

Rates are addressed by a 1-based index into ``RATES`` (index 2 is the
2 Mbps beacon rate). BER curves are Q functions applied to the numeric SNR
value in dB; only the 1 and 2 Mbps curves have closed forms, the others use
per-modulation argument scalings that can be replaced by a measured table.
"""
from __future__ import annotations

import bisect
import csv
import math
import operator
import random
from dataclasses import dataclass
from pathlib import Path

RATES: tuple[float, ...] = (1.0, 2.0, 5.5, 6.0, 9.0, 11.0, 12.0, 18.0, 24.0, 36.0, 48.0, 54.0)

MODULATION: tuple[str, ...] = (
    "DBPSK",   # 1 Mbps DSSS
    "DQPSK",   # 2 Mbps DSSS
    "CCK",     # 5.5
    "BPSK",    # 6 OFDM
    "BPSK",    # 9 OFDM
    "CCK",     # 11
    "QPSK",    # 12 OFDM
    "QPSK",    # 18 OFDM
    "16-QAM",  # 24
    "16-QAM",  # 36
    "64-QAM",  # 48
    "64-QAM",  # 54
)

# Q-argument divisor per rate: ber_k(snr) = Q(snr / divisor_k).
# Index 1 and 2 are the BPSK/QPSK closed forms; the rest are placeholder
# curves ordered so every 802.11b rate is more robust than every 802.11g
# rate and 54 Mbps needs roughly 40 dB for PDR >= 0.9 at 1500 B.
DEFAULT_Q_DIVISOR: tuple[float, ...] = (1.0, 2.0, 2.5, 3.5, 4.0, 3.0, 4.5, 5.5, 6.5, 7.5, 8.5, 9.5)

N_RATES = len(RATES)
BEACON_RATE = 2
BEACON_BYTES = 40
DEFAULT_NOISE_FLOOR_DBM = -95.0


def check_rate(rate_index: int) -> int:
    try:
        k = operator.index(rate_index)
    except TypeError:
        raise ValueError(f"rate index must be an integer, got {rate_index!r}") from None
    if isinstance(rate_index, bool) or not 1 <= k <= N_RATES:
        raise ValueError(f"rate index must be in 1..{N_RATES}, got {rate_index!r}")
    return k


def rate_mbps(rate_index: int) -> float:
    return RATES[check_rate(rate_index) - 1]


def rate_index_of(mbps: float) -> int:
    """Inverse of :func:`rate_mbps`."""
    for i, r in enumerate(RATES, start=1):
        if math.isclose(r, float(mbps)):
            return i
    raise ValueError(f"{mbps} Mbps is not an 802.11b/g rate")


def is_ofdm(rate_index: int) -> bool:
    return MODULATION[check_rate(rate_index) - 1] not in ("DBPSK", "DQPSK", "CCK")


def q_function(x: float) -> float:
    """Gaussian tail probability Q(x) = 1 - Phi(x)."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


class BerModel:
    """Per-rate BER curves.

    Rates without a tabulated curve fall back to the scaled Q function.
    Tables are linearly interpolated in SNR and clamped at their edges.
    """

    def __init__(self, tables: dict[int, tuple[list[float], list[float]]] | None = None,
                 divisors: tuple[float, ...] = DEFAULT_Q_DIVISOR):
        if len(divisors) != N_RATES:
            raise ValueError("need one Q divisor per rate")
        self.divisors = tuple(float(d) for d in divisors)
        self.tables = dict(tables or {})

    @classmethod
    def from_csv(cls, path: str | Path) -> "BerModel":
        """Load a ``rate_mbps,snr_db,ber`` table."""
        points: dict[int, list[tuple[float, float]]] = {}
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = {"rate_mbps", "snr_db", "ber"} - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"{path}: missing columns {sorted(missing)}")
            for row in reader:
                k = rate_index_of(float(row["rate_mbps"]))
                ber = float(row["ber"])
                if not 0.0 <= ber <= 1.0:
                    raise ValueError(f"{path}: ber {ber} outside [0, 1]")
                points.setdefault(k, []).append((float(row["snr_db"]), ber))
        tables = {}
        for k, pts in points.items():
            pts.sort()
            xs = [p[0] for p in pts]
            if len(set(xs)) != len(xs):
                raise ValueError(f"{path}: duplicate SNR points for rate {RATES[k - 1]}")
            tables[k] = (xs, [p[1] for p in pts])
        return cls(tables)

    def ber(self, rate_index: int, snr: float) -> float:
        k = check_rate(rate_index)
        if not math.isfinite(snr):
            raise ValueError("snr must be finite")
        table = self.tables.get(k)
        if table is None:
            return q_function(snr / self.divisors[k - 1])
        xs, ys = table
        if snr <= xs[0]:
            return ys[0]
        if snr >= xs[-1]:
            return ys[-1]
        j = bisect.bisect_right(xs, snr)
        x0, x1, y0, y1 = xs[j - 1], xs[j], ys[j - 1], ys[j]
        return y0 + (y1 - y0) * (snr - x0) / (x1 - x0)


DEFAULT_BER = BerModel()


def ber(rate_index: int, snr: float, model: BerModel | None = None) -> float:
    return (model or DEFAULT_BER).ber(rate_index, snr)


def packet_success_prob(rate_index: int, snr: float, size_bytes: float,
                        model: BerModel | None = None) -> float:
    """Probability that all ``8 * size_bytes`` bits arrive intact."""
    if size_bytes < 1:
        raise ValueError("size_bytes must be >= 1")
    b = ber(rate_index, snr, model)
    if b >= 1.0:
        return 0.0
    # log1p keeps (1 - b)**n accurate when b is ~1e-7 and n ~ 1e4
    return math.exp(8.0 * size_bytes * math.log1p(-b))


def packet_airtime(rate_index: int, size_bytes: float) -> float:
    """Lossless transmission time in microseconds."""
    if size_bytes < 1:
        raise ValueError("size_bytes must be >= 1")
    return 8.0 * size_bytes / rate_mbps(rate_index)


@dataclass(frozen=True)
class ChannelParams:
    mean_snr: float
    sigma: float = 0.0
    noise_floor: float = DEFAULT_NOISE_FLOOR_DBM

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not -100.0 <= self.noise_floor <= -90.0:
            raise ValueError("noise floor must lie in [-100, -90] dBm")


def sample_snr(params: ChannelParams, rng: random.Random) -> float:
    """One draw of the stationary Gaussian SNR process."""
    if params.sigma == 0:
        return float(params.mean_snr)
    return rng.gauss(params.mean_snr, params.sigma)
