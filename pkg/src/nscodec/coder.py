"""Static-model range coder and the ``NSC1`` bitstream container.

The coder is the carry-less 32-bit design with byte renormalisation: the
interval is narrowed by integer frequency counts whose total never exceeds
``2**16``, and a byte is shifted out whenever the top byte of the interval
is settled (or the range is forced down to stay above ``2**16``).

Container layout (little-endian)::

    magic "NSC1" | version u8 | sample_rate u32 | window_len u16 | overlap u16
    | num_windows u32 | original_len u64 | counts u32 * N | range-coded payload
    | crc32 u32 over every preceding byte

Version 1 fixes N = 32 bins and ``window_len // 2`` symbols per window.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .errors import BadMagic, CorruptPayload, ModelMismatch, SymbolOutOfRange, UnsupportedVersion

PRECISION_BITS = 16
TOTAL_MAX = 1 << PRECISION_BITS
TOP = 1 << 24
BOT = 1 << 16
MASK32 = 0xFFFFFFFF

MAGIC = b"NSC1"
VERSION = 1
NUM_BINS_V1 = 32
_HEADER = struct.Struct("<4sBIHHIQ")
_CRC = struct.Struct("<I")


class FrequencyTable:
    def __init__(self, counts):
        counts = np.asarray(counts, dtype=np.int64).ravel()
        if counts.size < 1 or np.any(counts < 1):
            raise ValueError("every symbol needs a count >= 1")
        if counts.sum() > TOTAL_MAX:
            raise ValueError(f"count total {counts.sum()} exceeds {TOTAL_MAX}")
        self.counts = counts
        self.cumulative = np.concatenate([[0], np.cumsum(counts)])
        self.total = int(self.cumulative[-1])

    @property
    def n(self) -> int:
        return self.counts.size

    @property
    def probabilities(self) -> np.ndarray:
        return self.counts / self.total

    def entropy(self) -> float:
        p = self.probabilities
        return float(-(p * np.log2(p)).sum())

    def cross_entropy(self, symbols) -> float:
        """Ideal bits per symbol for coding ``symbols`` with this table."""
        s = np.asarray(symbols).ravel()
        return float(-np.log2(self.probabilities[s]).mean()) if s.size else 0.0

    def to_bytes(self) -> bytes:
        return self.counts.astype("<u4").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "FrequencyTable":
        return cls(np.frombuffer(data, dtype="<u4"))

    def __eq__(self, other):
        return isinstance(other, FrequencyTable) and np.array_equal(self.counts, other.counts)

    def __repr__(self):
        return f"FrequencyTable(n={self.n}, total={self.total})"


def build_frequency_table(h) -> FrequencyTable:
    """Scale a probability histogram to integer counts at 16-bit precision.

    Every count is at least 1. If the floor pushes the total above
    ``2**16`` the largest counts give the excess back one at a time.
    """
    h = np.asarray(h, dtype=np.float64).ravel()
    counts = np.maximum(1, np.round(h * TOTAL_MAX)).astype(np.int64)
    excess = int(counts.sum()) - TOTAL_MAX
    for _ in range(max(excess, 0)):
        counts[int(np.argmax(counts))] -= 1
    return FrequencyTable(counts)


def range_encode(symbols, table: FrequencyTable) -> bytes:
    s = np.asarray(symbols).ravel()
    if s.size and (s.min() < 0 or s.max() >= table.n):
        raise SymbolOutOfRange(f"symbols must lie in [0, {table.n})")
    freqs = table.counts.tolist()
    cums = table.cumulative.tolist()
    total = table.total
    out = bytearray()
    low, rng = 0, MASK32
    for sym in s.tolist():
        rng //= total
        low = (low + cums[sym] * rng) & MASK32
        rng *= freqs[sym]
        while True:
            if (low ^ (low + rng)) >= TOP:
                if rng >= BOT:
                    break
                rng = -low & (BOT - 1)
            out.append(low >> 24)
            low = (low << 8) & MASK32
            rng = (rng << 8) & MASK32
    for _ in range(4):
        out.append(low >> 24)
        low = (low << 8) & MASK32
    return bytes(out)


def range_decode(data: bytes, count: int, table: FrequencyTable) -> np.ndarray:
    freqs = table.counts.tolist()
    cums = table.cumulative.tolist()
    total = table.total
    lookup = np.repeat(np.arange(table.n), table.counts).tolist()
    buf = bytes(data)
    if len(buf) < 4:
        raise CorruptPayload("payload shorter than the coder's flush")
    code = int.from_bytes(buf[:4], "big")
    pos = 4
    low, rng = 0, MASK32
    out = [0] * count
    for i in range(count):
        rng //= total
        value = ((code - low) & MASK32) // rng
        if value >= total:
            raise CorruptPayload(f"impossible code value at symbol {i}")
        sym = lookup[value]
        out[i] = sym
        low = (low + cums[sym] * rng) & MASK32
        rng *= freqs[sym]
        while True:
            if (low ^ (low + rng)) >= TOP:
                if rng >= BOT:
                    break
                rng = -low & (BOT - 1)
            if pos >= len(buf):
                raise CorruptPayload("payload ended early")
            code = ((code << 8) | buf[pos]) & MASK32
            pos += 1
            low = (low << 8) & MASK32
            rng = (rng << 8) & MASK32
    if pos != len(buf):
        raise CorruptPayload("payload length does not match the symbol count")
    return np.asarray(out, dtype=np.int64)


@dataclass(frozen=True)
class StreamMeta:
    sample_rate: int
    window_len: int
    overlap: int
    num_windows: int
    original_len: int

    @property
    def symbols_per_window(self) -> int:
        return self.window_len // 2


def header_size(num_bins: int = NUM_BINS_V1) -> int:
    return _HEADER.size + 4 * num_bins


def pack_bitstream(symbols, meta: StreamMeta, table: FrequencyTable) -> bytes:
    s = np.asarray(symbols)
    expected = meta.num_windows * meta.symbols_per_window
    if s.size != expected:
        raise ValueError(f"{s.size} symbols given, header implies {expected}")
    if table.n != NUM_BINS_V1:
        raise ModelMismatch(f"version {VERSION} streams carry {NUM_BINS_V1} bins, table has {table.n}")
    head = _HEADER.pack(MAGIC, VERSION, meta.sample_rate, meta.window_len, meta.overlap,
                        meta.num_windows, meta.original_len)
    body = head + table.to_bytes() + range_encode(s, table)
    return body + _CRC.pack(zlib.crc32(body))


def unpack_header(data: bytes) -> Tuple[StreamMeta, FrequencyTable]:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic("not an NSC1 bitstream")
    if len(data) < _HEADER.size:
        raise CorruptPayload("truncated header")
    magic, version, rate, wlen, overlap, nwin, olen = _HEADER.unpack_from(data)
    if version != VERSION:
        raise UnsupportedVersion(f"bitstream version {version} (supported: {VERSION})")
    end = header_size()
    if len(data) < end:
        raise CorruptPayload("truncated frequency table")
    try:
        table = FrequencyTable.from_bytes(data[_HEADER.size:end])
    except ValueError as exc:
        raise CorruptPayload(f"invalid frequency table: {exc}") from exc
    return StreamMeta(rate, wlen, overlap, nwin, olen), table


def unpack_bitstream(data: bytes):
    """Parse and verify a stream; returns ``(symbols, meta, table)``.

    ``symbols`` has shape (num_windows, window_len // 2).
    """
    meta, table = unpack_header(data)
    end = header_size()
    if len(data) < end + 4 + _CRC.size:
        raise CorruptPayload("truncated payload")
    (crc,) = _CRC.unpack_from(data, len(data) - _CRC.size)
    if zlib.crc32(data[:-_CRC.size]) != crc:
        raise CorruptPayload("checksum mismatch")
    symbols = range_decode(data[end:-_CRC.size], meta.num_windows * meta.symbols_per_window, table)
    return symbols.reshape(meta.num_windows, meta.symbols_per_window), meta, table


def payload_size(data: bytes) -> int:
    """Bytes spent on range-coded symbols (no header, no checksum)."""
    return len(data) - header_size() - _CRC.size


def encoded_length_bound(count: int, table: FrequencyTable) -> float:
    return count * table.entropy() / 8 + 32
