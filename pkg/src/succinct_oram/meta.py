"""Bit-exact block metadata and the packed metadata-tree layout.

A metadata word is ``type | addr | pos`` written most-significant bit
first: one type bit (1 = real), ``addr_width`` address bits and ``L``
label bits. The metadata tree is the concatenation of the words of all
data-tree slots in breadth-first order, cut into B-bit blocks with no
per-bucket padding.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .params import TreeParams


def bit_reversal(x: int, L: int) -> int:
    """Reverse the L-bit big-endian representation of ``x``."""
    if L < 0 or not 0 <= x < (1 << L):
        raise ValueError(f"x={x} is not an {L}-bit integer")
    r = 0
    for _ in range(L):
        r = (r << 1) | (x & 1)
        x >>= 1
    return r


def eviction_leaf(g: int, L: int) -> int:
    """Leaf evicted by the g-th EvictPath call (g counted from zero)."""
    return bit_reversal(g % (1 << L), L)


def path_buckets(label: int, L: int) -> list[int]:
    """Breadth-first bucket indices on the root-to-``label`` path.

    The depth-i bucket is the node named by the top i bits of the label.
    """
    return [(1 << i) - 1 + (label >> (L - i)) for i in range(L + 1)]


def bucket_depth(bucket: int) -> int:
    return (bucket + 1).bit_length() - 1


def is_ancestor(bucket: int, label: int, L: int) -> bool:
    """True if ``bucket`` lies on the path to leaf ``label`` (brute force)."""
    node = (1 << L) - 1 + label
    while True:
        if node == bucket:
            return True
        if node == 0:
            return False
        node = (node - 1) // 2


class BlockType(enum.IntEnum):
    DUMMY = 0
    REAL = 1


@dataclass(frozen=True)
class BlockMeta:
    block_type: BlockType
    addr: int = 0
    pos: int = 0

    @property
    def real(self) -> bool:
        return self.block_type is BlockType.REAL


DUMMY = BlockMeta(BlockType.DUMMY, 0, 0)


def encode_meta(meta: BlockMeta, params: TreeParams) -> int:
    """Pack ``meta`` into a ``params.meta_width``-bit integer."""
    aw, lw = params.addr_width, params.label_width
    if not 0 <= meta.addr < (1 << aw):
        raise ValueError(f"addr {meta.addr} does not fit in {aw} bits")
    if meta.block_type is BlockType.REAL and meta.addr >= params.N:
        raise ValueError(f"addr {meta.addr} out of range [0, {params.N})")
    if not 0 <= meta.pos < (1 << lw):
        raise ValueError(f"pos {meta.pos} does not fit in {lw} bits")
    return (int(meta.block_type) << (aw + lw)) | (meta.addr << lw) | meta.pos


def decode_meta(code: int, params: TreeParams) -> BlockMeta:
    aw, lw = params.addr_width, params.label_width
    if not 0 <= code < (1 << params.meta_width):
        raise ValueError("metadata word wider than meta_width")
    if not code >> (aw + lw):
        return DUMMY
    return BlockMeta(BlockType.REAL, (code >> lw) & ((1 << aw) - 1),
                     code & ((1 << lw) - 1))


def meta_bits(code: int, params: TreeParams) -> str:
    return format(code, f"0{params.meta_width}b")


class MetaLayout:
    """Slot and metadata addressing for one data tree.

    Internal buckets come first in breadth-first order (Z slots each),
    then the leaf buckets (M slots each), so internal addressing does
    not depend on M. Slot ``s`` owns metadata bits
    ``[s*w, (s+1)*w)`` of the metadata bitstring.
    """

    def __init__(self, params: TreeParams):
        self.params = params
        self.L, self.Z, self.M = params.L, params.Z, params.M
        self.width = params.meta_width
        self.block_bits = params.B
        self.n_internal = (1 << self.L) - 1
        self.n_buckets = (1 << (self.L + 1)) - 1
        self.n_slots = params.n_slots

    def capacity(self, bucket: int) -> int:
        return self.Z if bucket < self.n_internal else self.M

    def slot_start(self, bucket: int) -> int:
        if bucket < self.n_internal:
            return bucket * self.Z
        return self.n_internal * self.Z + (bucket - self.n_internal) * self.M

    def slot_index(self, bucket: int, slot: int) -> int:
        if not 0 <= bucket < self.n_buckets:
            raise IndexError(f"bucket {bucket} out of range")
        if not 0 <= slot < self.capacity(bucket):
            raise IndexError(f"slot {slot} out of range for bucket {bucket}")
        return self.slot_start(bucket) + slot

    def locate(self, bucket: int, slot: int) -> tuple[int, int]:
        """(metadata block index, bit offset within that block)."""
        bit = self.slot_index(bucket, slot) * self.width
        return divmod(bit, self.block_bits)

    @property
    def total_bits(self) -> int:
        return self.n_slots * self.width

    @property
    def n_blocks(self) -> int:
        return -(-self.total_bits // self.block_bits)

    def _span(self, bucket: int) -> tuple[int, int]:
        s0 = self.slot_start(bucket)
        first = s0 * self.width // self.block_bits
        last = ((s0 + self.capacity(bucket)) * self.width - 1) // self.block_bits
        return first, last - first + 1

    @cached_property
    def rows_per_depth(self) -> list[int]:
        """Metadata blocks transferred per bucket at each depth.

        A bucket's words may straddle one more block boundary depending
        on where they start; every bucket at a depth moves the maximum
        so the transfer count never depends on which path is touched.
        """
        rows = []
        for d in range(self.L + 1):
            first = (1 << d) - 1
            cap = self.capacity(first)
            s0 = np.arange(first, 2 * first + 1, dtype=np.int64)
            s0 = np.where(s0 < self.n_internal, s0 * self.Z,
                          self.n_internal * self.Z + (s0 - self.n_internal) * self.M)
            lo = s0 * self.width // self.block_bits
            hi = ((s0 + cap) * self.width - 1) // self.block_bits
            rows.append(int((hi - lo).max()) + 1)
        return rows

    def bucket_rows(self, bucket: int) -> range:
        """Metadata block indices moved when ``bucket`` is read or written."""
        first, _ = self._span(bucket)
        k = self.rows_per_depth[bucket_depth(bucket)]
        start = min(first, self.n_blocks - k)
        return range(start, start + k)

    def path_meta_rows(self) -> int:
        return sum(self.rows_per_depth)
