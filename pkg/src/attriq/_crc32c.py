"""CRC-32C (Castagnoli, reflected polynomial 0x82F63B78).

Stdlib zlib only offers the IEEE polynomial, so the index file checksum is
computed here. Matches the RFC 3720 reference ("123456789" -> 0xE3069283).

Large buffers take a vectorized path: the buffer is split into K interleaved
chunks whose CRC registers advance in lockstep as numpy uint32 lanes, and the
per-chunk registers are then folded together with the GF(2) byte-shift
operator (the same algebra as zlib's crc32_combine). The byte-at-a-time loop
remains the reference implementation and handles small inputs and tails.
"""

from __future__ import annotations

import numpy as np

_POLY = 0x82F63B78
_MASK = 0xFFFFFFFF


def _build_table() -> list[int]:
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = (crc >> 1) ^ _POLY if crc & 1 else crc >> 1
        table.append(crc)
    return table


_TABLE = _build_table()
_TABLE_NP = np.array(_TABLE, dtype=np.uint32)

# Registers below are raw (pre/post inversion handled by the public entry).


def _update(register: int, data: bytes) -> int:
    for byte in data:
        register = _TABLE[(register ^ byte) & 0xFF] ^ (register >> 8)
    return register


def _compose(a: list[int], b: list[int]) -> list[int]:
    """Compose two linear register operators given by their bit-basis images."""
    out = []
    for image in b:
        acc = 0
        bit = 0
        while image:
            if image & 1:
                acc ^= a[bit]
            image >>= 1
            bit += 1
        out.append(acc)
    return out


def _apply(op: list[int], register: int) -> int:
    acc = 0
    bit = 0
    while register:
        if register & 1:
            acc ^= op[bit]
        register >>= 1
        bit += 1
    return acc


def _shift_operator(length: int) -> list[int]:
    """Operator advancing a register past ``length`` zero bytes."""
    # one-byte shift: s -> table[s & 0xFF] ^ (s >> 8)
    op = [_TABLE[(1 << i) & 0xFF] ^ ((1 << i) >> 8) for i in range(32)]
    result = [1 << i for i in range(32)]  # identity
    while length:
        if length & 1:
            result = _compose(op, result)
        op = _compose(op, op)
        length >>= 1
    return result


def _update_vectorized(register: int, data: bytes, lanes: int = 4096) -> int:
    arr = np.frombuffer(data, dtype=np.uint8)
    chunk_len = len(arr) // lanes
    body = arr[: lanes * chunk_len].reshape(lanes, chunk_len)
    tail = arr[lanes * chunk_len :].tobytes()

    states = np.zeros(lanes, dtype=np.uint32)
    eight = np.uint32(8)
    for col in range(chunk_len):
        idx = (states ^ body[:, col]) & np.uint32(0xFF)
        states = _TABLE_NP[idx] ^ (states >> eight)

    shift = _shift_operator(chunk_len)
    acc = 0
    for lane_register in states.tolist():
        acc = _apply(shift, acc) ^ lane_register
    # prepend the incoming register, advanced past the whole vectorized body
    acc ^= _apply(_shift_operator(lanes * chunk_len), register)
    return _update(acc, tail)


def crc32c(data: bytes, crc: int = 0) -> int:
    """Return the CRC-32C of ``data``, optionally continuing from ``crc``."""
    register = (crc & _MASK) ^ _MASK
    if len(data) >= 1 << 16:
        register = _update_vectorized(register, data)
    else:
        register = _update(register, data)
    return register ^ _MASK
