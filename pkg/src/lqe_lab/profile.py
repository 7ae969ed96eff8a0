"""SNR-to-PDR profiles: per neighbor, per rate, per integer-dB SNR bin.

Binary layout (little-endian)::

    header  16 B   magic "SNRP" | version u16 | rate count u8 | reserved u8
                   | packet size u32 | bin count u32
    record  19 B   rate_index u8 | snr_bin i16 | tx u32 | ack u32 | pdr f64

Records are written sorted by (rate_index, snr_bin); the reader rejects any
other order so that a decode/encode round trip reproduces the input bytes.
"""
from __future__ import annotations

import bisect
import csv
import io
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .phy import N_RATES, RATES, check_rate

MAGIC = b"SNRP"
VERSION = 1
HEADER = struct.Struct("<4sHBBII")
RECORD = struct.Struct("<BhIId")
HEADER_SIZE = HEADER.size  # 16
RECORD_SIZE = RECORD.size  # 19

SNR_MIN = -10
SNR_MAX = 60
DEFAULT_PACKET_SIZE = 1500
PROFILE_BUDGET_BYTES = 8 * 1024 * N_RATES


class ProfileFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


def quantize(snr: float) -> int:
    """Integer dB bin, clamped to the profiled range."""
    if not math.isfinite(snr):
        raise ValueError("snr must be finite")
    return int(min(SNR_MAX, max(SNR_MIN, math.floor(snr + 0.5))))


@dataclass
class BinRecord:
    tx: int = 0
    ack: int = 0
    pdr: float = 0.0


@dataclass
class SnrProfile:
    neighbor_id: str = ""
    packet_size: int = DEFAULT_PACKET_SIZE
    bins: dict[tuple[int, int], BinRecord] = field(default_factory=dict)
    _sorted: dict[int, list[int]] = field(default_factory=dict, repr=False, compare=False)

    def record(self, rate_index: int, snr_bin: int) -> BinRecord:
        key = (rate_index, snr_bin)
        rec = self.bins.get(key)
        if rec is None:
            rec = self.bins[key] = BinRecord()
            bisect.insort(self._sorted.setdefault(rate_index, []), snr_bin)
        return rec

    def populated(self, rate_index: int) -> list[int]:
        return self._sorted.get(rate_index, [])

    def __len__(self):
        return len(self.bins)

    def copy(self) -> "SnrProfile":
        out = SnrProfile(self.neighbor_id, self.packet_size)
        for (k, b), rec in self.bins.items():
            r = out.record(k, b)
            r.tx, r.ack, r.pdr = rec.tx, rec.ack, rec.pdr
        return out


def bootstrap_record(profile: SnrProfile, rate_index: int, snr: float, success: bool) -> SnrProfile:
    rec = profile.record(check_rate(rate_index), quantize(snr))
    rec.tx += 1
    rec.ack += bool(success)
    rec.pdr = rec.ack / rec.tx
    return profile


def bootstrap_counts(profile: SnrProfile, rate_index: int, snr_bins: Iterable[int],
                     tx: Iterable[int], ack: Iterable[int]) -> SnrProfile:
    """Aggregate form of :func:`bootstrap_record` for pre-counted batches."""
    k = check_rate(rate_index)
    snr_bins = np.asarray(list(snr_bins), dtype=np.int64)
    tx = np.asarray(list(tx), dtype=np.int64)
    ack = np.asarray(list(ack), dtype=np.int64)
    if np.any(ack > tx) or np.any(ack < 0):
        raise ValueError("ack counts must lie in [0, tx]")
    if snr_bins.size == 0:
        return profile
    bins = np.clip(snr_bins, SNR_MIN, SNR_MAX)
    uniq, inv = np.unique(bins, return_inverse=True)
    tx_sum = np.bincount(inv, weights=tx, minlength=len(uniq)).astype(np.int64)
    ack_sum = np.bincount(inv, weights=ack, minlength=len(uniq)).astype(np.int64)
    for b, t, a in zip(uniq.tolist(), tx_sum.tolist(), ack_sum.tolist()):
        if t == 0:
            continue
        rec = profile.record(k, b)
        rec.tx += t
        rec.ack += a
        rec.pdr = rec.ack / rec.tx
    return profile


def online_update(profile: SnrProfile, rate_index: int, snr: float, tx: int, ack: int,
                  alpha_s: float) -> SnrProfile:
    """Blend one interval's data-traffic ack ratio into the stored bin PDR.

    The raw counters keep accumulating; the smoothed ``pdr`` moves by
    ``alpha_s`` towards the batch ratio. A bin seen for the first time starts
    from the interpolated lookup value (or the batch ratio on an empty rate).
    With ``alpha_s == 0`` the profile is static and no bins are created.
    """
    if tx < 1:
        raise ValueError("batch must contain at least one transmission")
    if not 0 <= ack <= tx:
        raise ValueError("ack must lie in [0, tx]")
    if not 0.0 <= alpha_s <= 1.0:
        raise ValueError("alpha_s must lie in [0, 1]")
    key = (check_rate(rate_index), quantize(snr))
    ratio = ack / tx
    rec = profile.bins.get(key)
    if rec is None:
        if alpha_s == 0.0:
            return profile
        prior = lookup_pdr(profile, *key)
        rec = profile.record(*key)
        rec.pdr = ratio if prior is None else prior
    rec.pdr = min(1.0, max(0.0, alpha_s * ratio + (1.0 - alpha_s) * rec.pdr))
    rec.tx += tx
    rec.ack += ack
    return profile


def lookup_pdr(profile: SnrProfile, rate_index: int, snr: float) -> float | None:
    """PDR at ``snr``; interpolates between populated bins, clamps outside them."""
    k = check_rate(rate_index)
    populated = profile.populated(k)
    if not populated:
        return None
    b = quantize(snr)
    rec = profile.bins.get((k, b))
    if rec is not None:
        return rec.pdr
    j = bisect.bisect_left(populated, b)
    if j == 0:
        return profile.bins[(k, populated[0])].pdr
    if j == len(populated):
        return profile.bins[(k, populated[-1])].pdr
    lo, hi = populated[j - 1], populated[j]
    y0, y1 = profile.bins[(k, lo)].pdr, profile.bins[(k, hi)].pdr
    return y0 + (y1 - y0) * (b - lo) / (hi - lo)


def serialize(profile: SnrProfile) -> bytes:
    keys = sorted(profile.bins)
    out = [HEADER.pack(MAGIC, VERSION, N_RATES, 0, profile.packet_size, len(keys))]
    for k, b in keys:
        rec = profile.bins[(k, b)]
        out.append(RECORD.pack(k, b, rec.tx, rec.ack, rec.pdr))
    return b"".join(out)


def deserialize(data: bytes, neighbor_id: str = "") -> SnrProfile:
    if len(data) < HEADER_SIZE:
        raise ProfileFormatError("truncated header", len(data))
    magic, version, n_rates, reserved, size, count = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ProfileFormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise ProfileFormatError(f"unsupported version {version}", 4)
    if n_rates != N_RATES:
        raise ProfileFormatError(f"rate count {n_rates} != {N_RATES}", 6)
    if reserved != 0:
        raise ProfileFormatError("reserved byte must be zero", 7)
    if size < 1:
        raise ProfileFormatError("packet size must be >= 1", 8)
    expected = HEADER_SIZE + count * RECORD_SIZE
    if len(data) < expected:
        done = (len(data) - HEADER_SIZE) // RECORD_SIZE
        raise ProfileFormatError(f"truncated record {done} of {count}", HEADER_SIZE + done * RECORD_SIZE)
    if len(data) > expected:
        raise ProfileFormatError("trailing bytes after last record", expected)
    profile = SnrProfile(neighbor_id, size)
    prev = None
    for i in range(count):
        off = HEADER_SIZE + i * RECORD_SIZE
        k, b, tx, ack, pdr = RECORD.unpack_from(data, off)
        if not 1 <= k <= N_RATES:
            raise ProfileFormatError(f"rate index {k} out of range", off)
        if not SNR_MIN <= b <= SNR_MAX:
            raise ProfileFormatError(f"snr bin {b} out of range", off + 1)
        if ack > tx:
            raise ProfileFormatError("ack exceeds tx", off + 7)
        if not 0.0 <= pdr <= 1.0:  # also rejects NaN
            raise ProfileFormatError(f"pdr {pdr!r} outside [0, 1]", off + 11)
        if prev is not None and (k, b) <= prev:
            raise ProfileFormatError("records not in strictly increasing (rate, bin) order", off)
        prev = (k, b)
        rec = profile.record(k, b)
        rec.tx, rec.ack, rec.pdr = tx, ack, pdr
    return profile


def save(profile: SnrProfile, path: str | Path) -> None:
    Path(path).write_bytes(serialize(profile))


def load(path: str | Path, neighbor_id: str = "") -> SnrProfile:
    return deserialize(Path(path).read_bytes(), neighbor_id)


CSV_HEADER = ("rate_mbps", "snr_db", "tx", "ack", "pdr")


def to_csv(profile: SnrProfile) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for k, b in sorted(profile.bins):
        rec = profile.bins[(k, b)]
        w.writerow((RATES[k - 1], b, rec.tx, rec.ack, repr(rec.pdr)))
    return buf.getvalue()


def bootstrap_link(profile: SnrProfile, snr_per_second: Iterable[float],
                   success_prob: Callable[[int, int], float], rng: np.random.Generator,
                   packets_per_second: int = 10, rates: Iterable[int] | None = None) -> SnrProfile:
    """Unicast bootstrap: ``packets_per_second`` probes per rate each second.

    ``success_prob(rate_index, snr_bin)`` gives the per-attempt delivery
    probability at the registered (integer) SNR of that second.
    """
    bins = np.array([quantize(s) for s in snr_per_second], dtype=np.int64)
    for k in (rates or range(1, N_RATES + 1)):
        if bins.size == 0:
            break
        uniq = np.unique(bins)
        p = {int(b): success_prob(k, int(b)) for b in uniq}
        probs = np.array([p[int(b)] for b in bins])
        acks = rng.binomial(packets_per_second, probs)
        bootstrap_counts(profile, k, bins, np.full(bins.size, packets_per_second), acks)
    return profile
