"""Path ORAM: uniform buckets, evict the accessed path, recursive position map.

Used standalone as a baseline and as the sub-ORAM that holds outsourced
position and counter tables.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .packing import fields_per_block, get_field, pack_table, set_field, unpack_table
from .params import path_oram_params
from .tree import IntegrityError, TreeOram

READ, WRITE = "read", "write"


class PathOram(TreeOram):
    """Path ORAM over ``N`` blocks of ``B`` bits.

    ``position_map`` is ``"memory"`` (the whole map kept by the user) or
    ``"recursive"``: labels are packed ``B // L`` per block into a child
    Path ORAM, recursing until the table fits in one block.
    """

    def __init__(self, N: int, B: int = 1024, Z: int = 5, L: int | None = None,
                 position_map: str = "memory", seed=0, store=None, name: str = "path",
                 record_trace: bool = True, backend: str | None = None,
                 top_level: bool = True):
        params = path_oram_params(N, B, Z, L)
        super().__init__(params, store=store, name=name, seed=seed,
                         record_trace=record_trace, backend=backend, top_level=top_level)
        if position_map not in ("memory", "recursive"):
            raise ValueError(f"position_map must be 'memory' or 'recursive', got {position_map!r}")
        self.position_map = position_map
        self.fanout = fields_per_block(B, params.L)
        self.child: PathOram | None = None
        if position_map == "recursive" and N > self.fanout:
            self.child = PathOram(math.ceil(N / self.fanout), B, Z,
                                  position_map="recursive", seed=self._seeds[2],
                                  store=self.store, name=name + ".pos",
                                  backend=backend, top_level=False)
        self._pos: list[int] = []

    @property
    def depth(self) -> int:
        """Number of trees in the recursion, this one included."""
        return 1 + (self.child.depth if self.child else 0)

    def init(self, payloads=None) -> int:
        labels = self.labels.draw_many(self.params.N)
        if self.child is not None:
            self.child.init(pack_table(labels, self.params.L, self.params.B))
        else:
            self._pos = labels.tolist()
        return self._upload(labels, payloads)

    def _swap_label(self, addr: int, new: int) -> int:
        if self.child is None:
            old = self._pos[addr]
            self._pos[addr] = new
            return old
        idx, w = addr % self.fanout, self.params.L
        prev = self.child.update(addr // self.fanout, lambda p: set_field(p, idx, w, new))
        return get_field(prev, idx, w)

    def position(self, addr: int) -> int:
        """Current label of ``addr`` (untraced, for audits)."""
        if self.child is None:
            return self._pos[addr]
        block = self.child.block_contents()[addr // self.fanout]
        return get_field(block, addr % self.fanout, self.params.L)

    def positions(self) -> list[int]:
        if self.child is None:
            return list(self._pos)
        blocks = self.child.block_contents()
        rows = [blocks[i] for i in range(self.child.params.N)]
        return unpack_table(rows, self.params.L, self.params.B, self.params.N)

    def update(self, addr: int, fn: Callable[[bytes], bytes] | None) -> bytes:
        """One access that reads block ``addr`` and writes back ``fn(old)``.

        ``fn=None`` leaves the block unchanged (a plain read).
        Returns the old payload.
        """
        self._require_init()
        if not 0 <= addr < self.params.N:
            raise IndexError(f"address {addr} out of range")
        if self.top_level:
            self.store.mark_epoch()
        new = self.labels.draw()
        old = self._swap_label(addr, new)
        try:
            pos = self.core.locate_path(addr, old)
        except KeyError as e:
            raise IntegrityError(str(e)) from None
        if pos != old:
            raise IntegrityError(f"block {addr} carries label {pos}, position map says {old}")
        ret = bytes(self.core.get_staging())
        payload = None if fn is None else fn(ret)
        self.core.commit_writeback(addr, new, payload, old)
        self.accesses += 1
        s = self.core.stash_size()
        if s > self.max_stash:
            self.max_stash = s
        return ret

    def access(self, addr: int, op: str = READ, value: bytes | None = None) -> bytes:
        if op == WRITE:
            if value is None or len(value) != self.params.block_bytes:
                raise ValueError(f"write needs a {self.params.block_bytes}-byte payload")
            return self.update(addr, lambda _old: value)
        if op != READ:
            raise ValueError(f"op must be 'read' or 'write', got {op!r}")
        return self.update(addr, None)

    def read(self, addr: int) -> bytes:
        return self.access(addr, READ)

    def write(self, addr: int, value: bytes) -> bytes:
        return self.access(addr, WRITE, value)

    def audit(self) -> list[str]:
        problems = super().audit()
        labels = self.primary_labels()
        pos = self.positions()
        bad = [a for a, l in labels.items() if pos[a] != l]
        if bad:
            problems.append(f"{len(bad)} blocks disagree with the position map, e.g. {bad[:5]}")
        if self.child is not None:
            problems += [f"[{self.child.name}] {p}" for p in self.child.audit()]
        return problems

    def server_blocks(self) -> int:
        """Blocks held on the server by this tree and its recursion."""
        own = self.data_region.size + self.meta_region.size
        return own + (self.child.server_blocks() if self.child else 0)

    def snapshot(self) -> dict:
        snap = super().snapshot()
        snap["position_table"] = self.positions()
        return snap


def initial_payloads(N: int, B: int, seed=0) -> np.ndarray:
    """Random initial contents, one row of B/8 bytes per block."""
    return np.random.default_rng(seed).integers(0, 256, size=(N, B // 8), dtype=np.uint8)
