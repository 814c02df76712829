"""Position and counter tables, held by the user or outsourced to Path ORAM.

Every method of :class:`OutsourcedTable` is exactly one sub-ORAM access,
so the number of table accesses per logical access is fixed by the
calling code, never by the data.
"""
from __future__ import annotations

import math

from .packing import fields_per_block, get_field, pack_table, set_field, unpack_table
from .path_oram import PathOram


class MemoryTable:
    def __init__(self, values, width: int):
        self.width = width
        self.values = [int(v) for v in values]
        self.accesses = 0

    def get(self, i: int) -> int:
        self.accesses += 1
        return self.values[i]

    def swap(self, i: int, value: int) -> int:
        self.accesses += 1
        old = self.values[i]
        self.values[i] = value
        return old

    def set(self, i: int, value: int) -> None:
        self.accesses += 1
        self.values[i] = value

    def add(self, i: int, delta: int) -> int:
        self.accesses += 1
        self.values[i] += delta
        return self.values[i]

    def peek_all(self) -> list[int]:
        return list(self.values)

    def server_blocks(self) -> int:
        return 0


class OutsourcedTable:
    """A table of ``width``-bit entries packed into a Path ORAM."""

    def __init__(self, n: int, width: int, B: int, *, store, name: str, seed,
                 Z: int = 5, position_map: str = "memory", backend=None):
        self.n = n
        self.width = width
        self.B = B
        self.per_block = fields_per_block(B, width)
        n_blocks = max(2, math.ceil(n / self.per_block))
        self.oram = PathOram(n_blocks, B, Z, position_map=position_map, seed=seed,
                             store=store, name=name, backend=backend, top_level=False)
        self.accesses = 0

    def init(self, values) -> None:
        values = [int(v) for v in values]
        if len(values) != self.n:
            raise ValueError(f"expected {self.n} entries, got {len(values)}")
        values += [0] * (self.oram.params.N * self.per_block - len(values))
        self.oram.init(pack_table(values, self.width, self.B))

    def _rmw(self, i: int, fn):
        blk, idx = divmod(i, self.per_block)
        self.accesses += 1
        seen = []

        def edit(payload: bytes) -> bytes:
            old = get_field(payload, idx, self.width)
            seen.append(old)
            new = fn(old)
            return payload if new is None else set_field(payload, idx, self.width, new)

        self.oram.update(blk, edit)
        return seen[0]

    def get(self, i: int) -> int:
        return self._rmw(i, lambda old: None)

    def swap(self, i: int, value: int) -> int:
        return self._rmw(i, lambda old: value)

    def set(self, i: int, value: int) -> None:
        self._rmw(i, lambda old: value)

    def add(self, i: int, delta: int) -> int:
        return self._rmw(i, lambda old: old + delta) + delta

    def peek_all(self) -> list[int]:
        blocks = self.oram.block_contents()
        rows = [blocks[b] for b in range(self.oram.params.N)]
        return unpack_table(rows, self.width, self.B, self.n)

    def server_blocks(self) -> int:
        return self.oram.server_blocks()
