"""Chunk-wise lossless compression and compression-rate streams.

Samples are quantized to fixed-point (default 0.01 m resolution, signed
16-bit little-endian) and the byte stream is compressed with a fixed
LZ77-family sliding-window coder so that compressed sizes are reproducible
across platforms.  The rate stream (1 - compressed/original, floored at 0)
feeds the anomaly detector; absolute ratios are not the point.

Coder format (all little-endian):
  * tokens are grouped 8 per flag byte; flag bit ``1`` marks a match;
  * literal token: 1 raw byte;
  * match token: 3 bytes packing a 12-bit backward offset (1..4096, stored
    as offset-1) and a 12-bit length (3..4098, stored as length-3):
    ``b0 = off & 0xFF; b1 = (off >> 8) | ((ln >> 8) << 4); b2 = ln & 0xFF``.
  * greedy longest match, nearest candidate on ties, at most
    ``MAX_CANDIDATES`` chain probes per position.

Compressed-chunk container: ``[u16 format_version][u32 original_size]
[u32 compressed_size][payload]``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError
from .traces import PressureChunk

FORMAT_VERSION = 1
WINDOW_SIZE = 4096
MIN_MATCH = 3
MAX_MATCH = MIN_MATCH + 0xFFF  # 4098
MAX_CANDIDATES = 64
DEFAULT_RESOLUTION_M = 0.01

_HEADER = struct.Struct("<HII")


def quantize(samples: np.ndarray, resolution: float = DEFAULT_RESOLUTION_M) -> bytes:
    """Fixed-point encode samples as signed 16-bit little-endian."""
    if resolution <= 0:
        raise InputError("quantization resolution must be positive")
    q = np.clip(np.rint(np.asarray(samples, dtype=float) / resolution), -32768, 32767)
    return q.astype("<i2").tobytes()


def dequantize(payload: bytes, resolution: float = DEFAULT_RESOLUTION_M) -> np.ndarray:
    return np.frombuffer(payload, dtype="<i2").astype(float) * resolution


def compress_bytes(data: bytes) -> bytes:
    """LZ77-family compression of a byte string (fixed parameters above)."""
    n = len(data)
    if n == 0:
        raise InputError("cannot compress empty input")
    out = bytearray()
    tokens: list[bytes | tuple[int, int]] = []
    table: dict[bytes, list[int]] = {}
    i = 0
    while i < n:
        best_len = 0
        best_off = 0
        if i + MIN_MATCH <= n:
            key = data[i:i + MIN_MATCH]
            candidates = table.get(key)
            if candidates:
                limit = min(MAX_MATCH, n - i)
                lo = i - WINDOW_SIZE
                probes = 0
                for j in reversed(candidates):
                    if j < lo:
                        break
                    probes += 1
                    if probes > MAX_CANDIDATES:
                        break
                    # extend the match
                    ln = MIN_MATCH
                    while ln < limit and data[j + ln] == data[i + ln]:
                        ln += 1
                    if ln > best_len:
                        best_len = ln
                        best_off = i - j
                        if ln == limit:
                            break
        if best_len >= MIN_MATCH:
            tokens.append((best_off, best_len))
            end = i + best_len
        else:
            tokens.append(data[i:i + 1])
            end = i + 1
        # index every position we are about to skip over
        while i < end:
            if i + MIN_MATCH <= n:
                table.setdefault(data[i:i + MIN_MATCH], []).append(i)
            i += 1
    # serialize: flag byte per 8 tokens, bit set for matches
    for g in range(0, len(tokens), 8):
        group = tokens[g:g + 8]
        flags = 0
        body = bytearray()
        for bit, tok in enumerate(group):
            if isinstance(tok, tuple):
                flags |= 1 << bit
                off = tok[0] - 1
                ln = tok[1] - MIN_MATCH
                body.append(off & 0xFF)
                body.append(((off >> 8) & 0x0F) | (((ln >> 8) & 0x0F) << 4))
                body.append(ln & 0xFF)
            else:
                body += tok
        out.append(flags)
        out += body
    return bytes(out)


def decompress_bytes(payload: bytes, original_size: int) -> bytes:
    """Inverse of :func:`compress_bytes`."""
    out = bytearray()
    i = 0
    n = len(payload)
    while i < n and len(out) < original_size:
        flags = payload[i]
        i += 1
        for bit in range(8):
            if len(out) >= original_size or i >= n:
                break
            if flags & (1 << bit):
                b0, b1, b2 = payload[i], payload[i + 1], payload[i + 2]
                i += 3
                off = (b0 | ((b1 & 0x0F) << 8)) + 1
                ln = (b2 | ((b1 >> 4) << 8)) + MIN_MATCH
                start = len(out) - off
                if start < 0:
                    raise InputError("corrupt stream: offset before start")
                for k in range(ln):
                    out.append(out[start + k])
            else:
                out.append(payload[i])
                i += 1
    if len(out) != original_size:
        raise InputError("corrupt stream: size mismatch")
    return bytes(out)


@dataclass(frozen=True)
class CompressedChunk:
    node_id: int
    timestamp_us: int
    payload_bytes: bytes
    original_size: int
    compressed_size: int

    def to_container(self) -> bytes:
        return _HEADER.pack(FORMAT_VERSION, self.original_size,
                            self.compressed_size) + self.payload_bytes

    @classmethod
    def from_container(cls, node_id: int, timestamp_us: int, blob: bytes
                       ) -> "CompressedChunk":
        version, orig, comp = _HEADER.unpack_from(blob)
        if version != FORMAT_VERSION:
            raise InputError(f"unsupported container version {version}")
        payload = blob[_HEADER.size:]
        if len(payload) != comp:
            raise InputError("container payload length mismatch")
        return cls(node_id, timestamp_us, payload, orig, comp)

    @property
    def rate(self) -> float:
        return max(0.0, 1.0 - self.compressed_size / self.original_size)


@dataclass(frozen=True)
class CompressionRatePoint:
    timestamp_us: int
    rate: float


def compress_chunk(chunk: PressureChunk,
                   resolution: float = DEFAULT_RESOLUTION_M) -> CompressedChunk:
    """Quantize and compress one chunk; round-trips exactly over the quantized bytes."""
    if len(chunk.samples) == 0:
        raise InputError("cannot compress an empty chunk")
    raw = quantize(chunk.samples, resolution)
    payload = compress_bytes(raw)
    return CompressedChunk(chunk.node_id, chunk.timestamp_us, payload,
                           len(raw), len(payload))


def decompress_chunk(cc: CompressedChunk,
                     resolution: float = DEFAULT_RESOLUTION_M) -> PressureChunk:
    """Recover the quantized samples of a compressed chunk."""
    raw = decompress_bytes(cc.payload_bytes, cc.original_size)
    return PressureChunk(cc.node_id, cc.timestamp_us, dequantize(raw, resolution))


def rate_stream(chunks: Sequence[CompressedChunk]) -> list[CompressionRatePoint]:
    """One rate point per chunk: ``max(0, 1 - compressed/original)``."""
    return [CompressionRatePoint(c.timestamp_us, c.rate) for c in chunks]


def block_rates(block: np.ndarray, chunk_size: int,
                resolution: float = DEFAULT_RESOLUTION_M) -> np.ndarray:
    """Compression rates of the fixed-size chunks of a raw interval block.

    Fast path used by the simulation loop (no chunk objects allocated).
    """
    raw = quantize(block, resolution)
    bpc = 2 * chunk_size
    n = len(raw) // bpc
    out = np.empty(n)
    for c in range(n):
        comp = compress_bytes(raw[c * bpc:(c + 1) * bpc])
        out[c] = max(0.0, 1.0 - len(comp) / bpc)
    return out
