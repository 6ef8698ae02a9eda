"""Update transfer pipeline: sparsify, quantize, compress, fragment, FEC.

Wire layout of an encoded update::

    <I  original (uncompressed) code-stream length in bytes
    <f  quantization scale
    B   bit width (1, 2, 4 or 32)
    B   flags (bit 0: differential)
    ... zlib (RFC 1950) stream of the packed codes

Each transmitted fragment carries a 2-byte little-endian index in front of
``mtu - 2`` payload bytes.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import numpy as np

HEADER = struct.Struct("<IfBB")
FRAGMENT_HEADER_BYTES = 2
VALID_BITS = (1, 2, 4, 32)
FLAG_DIFFERENTIAL = 0x01


class CodecError(ValueError):
    pass


class UndecodableError(CodecError):
    """Fewer than k coded fragments arrived."""


@dataclass(frozen=True)
class CodecConfig:
    threshold: float = 0.001
    bits: int = 4
    differential: bool = True
    level: int = zlib.Z_DEFAULT_COMPRESSION

    def __post_init__(self) -> None:
        if not self.threshold >= 0:
            raise ValueError("sparsification threshold must be >= 0")
        if self.bits not in VALID_BITS:
            raise ValueError(f"bits must be one of {VALID_BITS}")


def as_rate(r: float | str | Fraction) -> Fraction:
    rate = Fraction(r).limit_denominator(1000) if not isinstance(r, Fraction) else r
    if not 0 < rate <= 1:
        raise ValueError(f"FEC rate must lie in (0, 1], got {r}")
    return rate


# -- sparsification -------------------------------------------------------


def sparsify(v: np.ndarray, threshold: float) -> np.ndarray:
    """Zero every entry with magnitude strictly below ``threshold``."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    v = np.asarray(v)
    return np.where(np.abs(v) < threshold, np.zeros((), dtype=v.dtype), v)


# -- quantization ---------------------------------------------------------


def quantizer_levels(bits: int, scale: float) -> np.ndarray:
    """Reconstruction levels of the quantizer, ordered by code."""
    if bits == 1:
        return np.array([-scale, scale], dtype=np.float64)
    half = 2 ** (bits - 1) - 1
    step = 2.0 * scale / (2**bits - 1)
    return np.arange(-half, half + 1, dtype=np.float64) * step


def quantize(v: np.ndarray, bits: int) -> tuple[np.ndarray, float]:
    """Symmetric uniform quantizer with a per-vector max-abs scale.

    Multi-bit widths use a mid-tread grid of spacing ``2*scale/(2**bits - 1)``
    so zero is reproduced exactly; the top code is unused.  One bit is a sign
    quantizer.  32 bits passes float32 values through.
    """
    if bits not in VALID_BITS:
        raise ValueError(f"bits must be one of {VALID_BITS}")
    v = np.asarray(v, dtype=np.float32)
    if bits == 32:
        return v.copy(), 1.0
    if v.size == 0:
        return np.zeros(0, dtype=np.uint8), 0.0
    scale = float(np.float32(np.max(np.abs(v))))
    if bits == 1:
        return (v >= 0).astype(np.uint8), scale
    half = 2 ** (bits - 1) - 1
    if scale == 0.0:
        return np.full(v.shape, half, dtype=np.uint8), 0.0
    step = 2.0 * scale / (2**bits - 1)
    q = np.clip(np.rint(v.astype(np.float64) / step), -half, half)
    return (q + half).astype(np.uint8), scale


def dequantize(codes: np.ndarray, scale: float, bits: int) -> np.ndarray:
    if bits == 32:
        return np.asarray(codes, dtype=np.float32).copy()
    levels = quantizer_levels(bits, float(np.float32(scale)))
    return levels[np.asarray(codes, dtype=np.intp)].astype(np.float32)


def quantization_bound(bits: int, scale: float) -> float:
    """Worst-case per-element round-trip error for values within ``[-scale, scale]``."""
    if bits == 32:
        return 0.0
    if bits == 1:
        return 2.0 * scale
    return scale / (2**bits - 1)


def pack_codes(codes: np.ndarray, bits: int) -> bytes:
    """Pack codes MSB-first; float32 codes are written little-endian."""
    if bits == 32:
        return np.asarray(codes, dtype="<f4").tobytes()
    codes = np.asarray(codes, dtype=np.uint8)
    per_byte = 8 // bits
    pad = (-codes.size) % per_byte
    c = np.concatenate([codes, np.zeros(pad, dtype=np.uint8)]).reshape(-1, per_byte)
    shifts = (8 - bits * (np.arange(per_byte) + 1)).astype(np.uint8)
    return np.bitwise_or.reduce(c << shifts, axis=1).astype(np.uint8).tobytes()


def unpack_codes(data: bytes, bits: int, count: int) -> np.ndarray:
    if bits == 32:
        out = np.frombuffer(data, dtype="<f4").astype(np.float32)
    else:
        raw = np.frombuffer(data, dtype=np.uint8)
        per_byte = 8 // bits
        shifts = (8 - bits * (np.arange(per_byte) + 1)).astype(np.uint8)
        mask = np.uint8(2**bits - 1)
        out = ((raw[:, None] >> shifts) & mask).reshape(-1)
    if out.size < count:
        raise CodecError(f"code stream holds {out.size} values, expected {count}")
    return out[:count]


# -- compression ----------------------------------------------------------


def compress(data: bytes, level: int = zlib.Z_DEFAULT_COMPRESSION) -> bytes:
    return zlib.compress(bytes(data), level)


def decompress(data: bytes) -> bytes:
    try:
        d = zlib.decompressobj()
        out = d.decompress(bytes(data))
        if not d.eof:
            raise CodecError("truncated zlib stream")
        return out
    except zlib.error as exc:
        raise CodecError(f"corrupt zlib stream: {exc}") from exc


# -- differential encoding ------------------------------------------------


def diff_encode(local: np.ndarray, global_: np.ndarray) -> np.ndarray:
    local = np.asarray(local)
    global_ = np.asarray(global_)
    if local.shape != global_.shape:
        raise ValueError(f"shape mismatch: {local.shape} vs {global_.shape}")
    return local - global_


def diff_apply(global_: np.ndarray, diff: np.ndarray) -> np.ndarray:
    global_ = np.asarray(global_)
    diff = np.asarray(diff)
    if diff.shape != global_.shape:
        raise ValueError(f"shape mismatch: {global_.shape} vs {diff.shape}")
    return global_ + diff


# -- fragmentation and FEC ------------------------------------------------


def source_fragment_count(size: int, b: int) -> int:
    return math.ceil(size / b)


def fragment(payload: bytes, b: int) -> list[bytes]:
    """Split into ``ceil(len/b)`` fragments of ``b`` bytes, zero-padding the last."""
    if b <= 0:
        raise ValueError("fragment size must be positive")
    if not payload:
        raise CodecError("cannot fragment an empty payload")
    k = source_fragment_count(len(payload), b)
    padded = bytes(payload) + bytes(k * b - len(payload))
    return [padded[i * b : (i + 1) * b] for i in range(k)]


def fec_encode(k: int, r: float | Fraction) -> int:
    """Number of coded fragments for ``k`` source fragments at rate ``r``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rate = as_rate(r)
    return math.ceil(Fraction(k) / rate)


def fec_decodable(received: Iterable[int], k: int) -> bool:
    return len(set(received)) >= k


@dataclass(frozen=True)
class FecBlock:
    """An MDS-coded fragment set: any ``k`` of the ``n`` coded fragments decode.

    Parity payloads are not materialized; decoding returns the stored source
    fragments once enough distinct coded indices have arrived.
    """

    sources: tuple[bytes, ...]
    n: int

    @property
    def k(self) -> int:
        return len(self.sources)


def reassemble(block: FecBlock, received: Iterable[int], original_len: int) -> bytes:
    ids = set(received)
    if any(not 0 <= i < block.n for i in ids):
        raise CodecError("fragment index out of range")
    if not fec_decodable(ids, block.k):
        raise UndecodableError(f"{len(ids)} of {block.n} fragments received, need {block.k}")
    return b"".join(block.sources)[:original_len]


# -- full pipeline --------------------------------------------------------


@dataclass(frozen=True)
class EncodedUpdate:
    payload: bytes
    quant_scale: float
    bits: int
    is_differential: bool
    fragment_size: int
    rate: Fraction
    k: int
    n: int

    @property
    def byte_size(self) -> int:
        return len(self.payload)

    def fec_block(self) -> FecBlock:
        return FecBlock(tuple(fragment(self.payload, self.fragment_size)), self.n)


def encode_update(
    v: np.ndarray,
    cfg: CodecConfig,
    mtu: int,
    rate: float | Fraction,
    reference: np.ndarray | None = None,
) -> EncodedUpdate:
    """Run sparsify, quantize, compress, fragment and FEC on a parameter vector.

    With ``reference`` the difference ``v - reference`` is sent instead.
    """
    vec = np.asarray(v, dtype=np.float32)
    if reference is not None:
        vec = diff_encode(vec, np.asarray(reference, dtype=np.float32))
    vec = sparsify(vec, cfg.threshold)
    codes, scale = quantize(vec, cfg.bits)
    packed = pack_codes(codes, cfg.bits)
    flags = FLAG_DIFFERENTIAL if reference is not None else 0
    payload = HEADER.pack(len(packed), scale, cfg.bits, flags) + compress(packed, cfg.level)
    b = mtu - FRAGMENT_HEADER_BYTES
    if b <= 0:
        raise ValueError("MTU too small for the fragment header")
    k = source_fragment_count(len(payload), b)
    rate = as_rate(rate)
    return EncodedUpdate(payload, scale, cfg.bits, reference is not None, b, rate, k, fec_encode(k, rate))


def decode_payload(payload: bytes, count: int, reference: np.ndarray | None = None) -> np.ndarray:
    """Invert the byte payload back into a float32 parameter vector of ``count`` entries."""
    if len(payload) < HEADER.size:
        raise CodecError("payload shorter than header")
    length, scale, bits, flags = HEADER.unpack_from(payload)
    if bits not in VALID_BITS:
        raise CodecError(f"invalid bit width {bits}")
    packed = decompress(payload[HEADER.size :])
    if len(packed) != length:
        raise CodecError(f"code stream length {len(packed)} != header {length}")
    vec = dequantize(unpack_codes(packed, bits, count), scale, bits)
    if flags & FLAG_DIFFERENTIAL:
        if reference is None:
            raise CodecError("differential update needs the reference model")
        vec = diff_apply(np.asarray(reference, dtype=np.float32), vec)
    return vec


def decode_update(
    update: EncodedUpdate,
    count: int,
    received: Iterable[int] | None = None,
    reference: np.ndarray | None = None,
) -> np.ndarray:
    """Reassemble from the received coded fragments and decode."""
    if received is None:
        payload = update.payload
    else:
        payload = reassemble(update.fec_block(), received, update.byte_size)
    return decode_payload(payload, count, reference)


def frame_payload(index: int, fragment_bytes: bytes) -> bytes:
    return struct.pack("<H", index) + fragment_bytes

