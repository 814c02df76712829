"""Fixed-width fields packed most-significant-bit first into B-bit blocks."""
from __future__ import annotations

import numpy as np


def fields_per_block(block_bits: int, width: int) -> int:
    if width <= 0 or width > block_bits:
        raise ValueError(f"cannot pack {width}-bit fields into {block_bits}-bit blocks")
    return block_bits // width


def get_field(payload: bytes, index: int, width: int) -> int:
    nbits = len(payload) * 8
    shift = nbits - (index + 1) * width
    if shift < 0:
        raise IndexError(f"field {index} outside the block")
    return (int.from_bytes(payload, "big") >> shift) & ((1 << width) - 1)


def set_field(payload: bytes, index: int, width: int, value: int) -> bytes:
    nbits = len(payload) * 8
    shift = nbits - (index + 1) * width
    if shift < 0:
        raise IndexError(f"field {index} outside the block")
    if not 0 <= value < (1 << width):
        raise ValueError(f"value {value} does not fit in {width} bits")
    v = int.from_bytes(payload, "big")
    v = (v & ~(((1 << width) - 1) << shift)) | (value << shift)
    return v.to_bytes(len(payload), "big")


def pack_table(values, width: int, block_bits: int) -> np.ndarray:
    """Pack a flat table into rows of ``block_bits // width`` fields each."""
    per = fields_per_block(block_bits, width)
    values = [int(v) for v in values]
    if values and (min(values) < 0 or max(values) >= (1 << width)):
        raise ValueError(f"table value does not fit in {width} bits")
    n_blocks = max(1, -(-len(values) // per))
    nbytes = block_bits // 8
    out = np.zeros((n_blocks, nbytes), dtype=np.uint8)
    for b in range(n_blocks):
        acc = 0
        chunk = values[b * per:(b + 1) * per]
        for v in chunk:
            acc = (acc << width) | v
        acc <<= block_bits - len(chunk) * width
        out[b] = np.frombuffer(acc.to_bytes(nbytes, "big"), dtype=np.uint8)
    return out


def unpack_table(blocks, width: int, block_bits: int, n: int) -> list[int]:
    per = fields_per_block(block_bits, width)
    out: list[int] = []
    for row in blocks:
        v = int.from_bytes(bytes(row), "big")
        for k in range(per):
            out.append((v >> (block_bits - (k + 1) * width)) & ((1 << width) - 1))
    return out[:n]
