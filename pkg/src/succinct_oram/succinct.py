"""The succinct tree ORAMs: one label per block (T1) or two choices (T2).

Both share ReadPath/EvictPath from the kernel. Eviction always follows
the bit-reversed global access counter, so eviction paths never depend
on the logical addresses.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import Construction, TreeParams
from .tables import MemoryTable, OutsourcedTable
from .tree import IntegrityError, TreeOram

READ, WRITE = "read", "write"


@dataclass
class SubOramConfig:
    """Sub-ORAM settings for outsourced tables."""
    Z: int = 5
    position_map: str = "memory"


@dataclass
class LeafLog:
    """Per-access leaves: what the adversary sees besides table accesses."""
    read_leaves: list = field(default_factory=list)
    evict_leaves: list = field(default_factory=list)


class SuccinctOram(TreeOram):
    def __init__(self, params: TreeParams, tables: str = "memory",
                 sub_oram: SubOramConfig | dict | None = None, seed=0, store=None,
                 name: str = "data", record_trace: bool = True,
                 backend: str | None = None, log_leaves: bool = False):
        if params.construction is Construction.PATH:
            raise ValueError("use PathOram for the path construction")
        super().__init__(params, store=store, name=name, seed=seed,
                         record_trace=record_trace, backend=backend)
        self.two_choice = params.construction is Construction.T2
        if tables not in ("memory", "outsourced"):
            raise ValueError(f"tables must be 'memory' or 'outsourced', got {tables!r}")
        self.tables = tables
        if isinstance(sub_oram, dict):
            sub_oram = SubOramConfig(**sub_oram)
        self.sub_oram = sub_oram or SubOramConfig()
        L, N = params.L, params.N
        self.pos_width = 2 * L if self.two_choice else L
        # counters reach N in the worst case, one bit more than an address
        self.ctr_width = N.bit_length()
        self.pos = self.ctr = None
        if tables == "outsourced":
            sub_seeds = self._seeds[2].spawn(2)
            kw = dict(store=self.store, Z=self.sub_oram.Z,
                      position_map=self.sub_oram.position_map, backend=backend)
            self.pos = OutsourcedTable(N, self.pos_width, params.B, name=name + ".postab",
                                       seed=sub_seeds[0], **kw)
            if self.two_choice:
                self.ctr = OutsourcedTable(1 << L, self.ctr_width, params.B,
                                           name=name + ".ctrtab", seed=sub_seeds[1], **kw)
        self.log = LeafLog() if log_leaves else None
        self.stash_after_access: list[int] | None = None

    # -- setup -------------------------------------------------------
    def init(self, payloads=None) -> int:
        """Assign labels, fill tables and upload all N blocks.

        Returns how many blocks overflowed into the stash.
        """
        N, L = self.params.N, self.params.L
        if self.two_choice:
            ctr = [0] * (1 << L)
            pos_entries, primary = [], np.empty(N, dtype=np.int64)
            for a in range(N):
                l1, l2 = self.labels.draw(), self.labels.draw()
                win = l1 if ctr[l1] <= ctr[l2] else l2
                ctr[win] += 1
                primary[a] = win
                pos_entries.append((l1 << L) | l2)
            self._init_table("pos", pos_entries, self.pos_width)
            self._init_table("ctr", ctr, self.ctr_width)
        else:
            primary = self.labels.draw_many(N)
            self._init_table("pos", primary, self.pos_width)
        return self._upload(primary, payloads)

    def _init_table(self, which, values, width):
        table = getattr(self, which)
        if table is None:
            setattr(self, which, MemoryTable(values, width))
        else:
            table.init(values)

    # -- access ------------------------------------------------------
    def access(self, addr: int, op: str = READ, value: bytes | None = None) -> bytes:
        """Read or write block ``addr``; returns its value before the access."""
        self._require_init()
        if not 0 <= addr < self.params.N:
            raise IndexError(f"address {addr} out of range")
        if op == WRITE:
            if value is None or len(value) != self.params.block_bytes:
                raise ValueError(f"write needs a {self.params.block_bytes}-byte payload")
        elif op != READ:
            raise ValueError(f"op must be 'read' or 'write', got {op!r}")
        self.store.mark_epoch()
        core = self.core
        try:
            if self.two_choice:
                new_label, reads = self._relabel_two_choice(addr)
            else:
                new_label = self.labels.draw()
                old = self.pos.swap(addr, new_label)
                found = core.locate(addr, old)
                if found != old:
                    raise IntegrityError(f"block {addr} carries label {found}, table says {old}")
                reads = (old,)
        except KeyError as e:
            raise IntegrityError(str(e)) from None
        ret = bytes(core.get_staging())
        leaf = core.commit_evict(addr, new_label, value if op == WRITE else None)
        self.accesses += 1
        s = core.stash_size()
        if s > self.max_stash:
            self.max_stash = s
        if self.log is not None:
            self.log.read_leaves.extend(reads)
            self.log.evict_leaves.append(leaf)
        if self.stash_after_access is not None:
            self.stash_after_access.append(s)
        return ret

    def _relabel_two_choice(self, addr):
        L = self.params.L
        n1, n2 = self.labels.draw(), self.labels.draw()
        entry = self.pos.swap(addr, (n1 << L) | n2)
        l1, l2 = entry >> L, entry & ((1 << L) - 1)
        primary = self.core.locate(addr, l1, l2)
        if primary not in (l1, l2):
            raise IntegrityError(f"block {addr} carries label {primary}, not {l1} or {l2}")
        # decrement before reading the candidates, in listed order
        self.ctr.add(primary, -1)
        c1 = self.ctr.get(n1)
        c2 = self.ctr.get(n2)
        win, c = (n1, c1) if c1 <= c2 else (n2, c2)
        self.ctr.set(win, c + 1)
        return win, (l1, l2)

    def read(self, addr: int) -> bytes:
        return self.access(addr, READ)

    def write(self, addr: int, value: bytes) -> bytes:
        return self.access(addr, WRITE, value)

    # -- inspection --------------------------------------------------
    def position_entries(self) -> list[tuple[int, ...]]:
        L = self.params.L
        raw = self.pos.peek_all()
        if self.two_choice:
            return [(v >> L, v & ((1 << L) - 1)) for v in raw]
        return [(v,) for v in raw]

    def counter_table(self) -> list[int] | None:
        return self.ctr.peek_all() if self.two_choice else None

    def recount(self) -> np.ndarray:
        """Per-leaf count of primary labels, from the tree and stash."""
        labels = self.primary_labels()
        return np.bincount(np.fromiter(labels.values(), dtype=np.int64),
                           minlength=self.params.leaves)

    def audit(self) -> list[str]:
        problems = super().audit()
        labels = self.primary_labels()
        entries = self.position_entries()
        bad = [a for a, l in labels.items() if l not in entries[a]]
        if bad:
            problems.append(f"{len(bad)} blocks disagree with the position table, e.g. {bad[:5]}")
        if self.two_choice:
            ctr = np.asarray(self.counter_table(), dtype=np.int64)
            if not np.array_equal(ctr, self.recount()):
                problems.append("counter table does not match the recount")
            if ctr.sum() != self.params.N:
                problems.append(f"counter table sums to {ctr.sum()}, not N")
        if isinstance(self.pos, OutsourcedTable):
            problems += [f"[{self.pos.oram.name}] {p}" for p in self.pos.oram.audit()]
        if isinstance(self.ctr, OutsourcedTable):
            problems += [f"[{self.ctr.oram.name}] {p}" for p in self.ctr.oram.audit()]
        return problems

    def table_accesses(self) -> int:
        n = self.pos.accesses if self.pos is not None else 0
        if self.ctr is not None:
            n += self.ctr.accesses
        return n

    def server_blocks(self) -> int:
        own = self.data_region.size + self.meta_region.size
        for t in (self.pos, self.ctr):
            if t is not None:
                own += t.server_blocks()
        return own

    def snapshot(self) -> dict:
        snap = super().snapshot()
        snap["position_table"] = [list(e) for e in self.position_entries()]
        if self.two_choice:
            snap["counter_table"] = self.counter_table()
        return snap
