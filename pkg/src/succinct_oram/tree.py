"""Shared plumbing for tree ORAMs: regions, kernel binding, audits."""
from __future__ import annotations

import numpy as np

from . import kernel
from .meta import MetaLayout
from .params import TreeParams
from .rng import LabelSource, garbage_key, seed_sequence
from .store import PhysicalStore


class IntegrityError(RuntimeError):
    """A tree-ORAM invariant does not hold (lost block, bad label, ...)."""


class TreeOram:
    def __init__(self, params: TreeParams, *, store: PhysicalStore | None = None,
                 name: str = "oram", seed=0, record_trace: bool = True,
                 backend: str | None = None, top_level: bool = True):
        self.params = params
        self.layout = MetaLayout(params)
        if store is None:
            store = PhysicalStore(params.B, record_trace=record_trace)
        elif store.block_bits != params.B:
            raise ValueError("store block size differs from params.B")
        self.store = store
        self.name = name
        self.backend = backend
        self.top_level = top_level
        self.data_region = store.allocate(f"{name}.data", params.n_slots)
        self.meta_region = store.allocate(f"{name}.meta", self.layout.n_blocks)
        ss = seed_sequence(seed)
        self._seeds = ss.spawn(3)
        self.labels = LabelSource(self._seeds[0], params.L)
        self.core = None
        self.accesses = 0
        self.max_stash = 0
        self.initialized = False

    # -- kernel ------------------------------------------------------
    def _bind(self) -> None:
        p = self.params
        self.core = kernel.tree_core(
            self.backend, store=self.store, data_region=self.data_region,
            meta_region=self.meta_region, L=p.L, Z=p.Z, M=p.M,
            addr_width=p.addr_width, rows_per_depth=self.layout.rows_per_depth,
            garbage_key=garbage_key(self._seeds[1]))

    def _upload(self, labels, payloads) -> int:
        """Place all blocks and record the initial upload as sequential writes."""
        if self.initialized:
            raise RuntimeError("already initialized")
        self._bind()
        if payloads is not None:
            payloads = np.asarray(payloads, dtype=np.uint8)
            if payloads.shape != (self.params.N, self.params.block_bytes):
                raise ValueError("initial payloads must have shape (N, B/8)")
        overflow = self.core.place_all(np.asarray(labels, dtype=np.int64), payloads)
        for region in (self.data_region, self.meta_region):
            self.store.record_bulk(region.base, region.size)
        self.initialized = True
        self.max_stash = self.core.stash_size()
        return overflow

    def _require_init(self):
        if not self.initialized:
            raise RuntimeError("call init() before accessing the ORAM")

    # -- observation -------------------------------------------------
    @property
    def stash_size(self) -> int:
        return self.core.stash_size() if self.core is not None else 0

    @property
    def G(self) -> int:
        return self.core.G if self.core is not None else 0

    def transfer_counts(self) -> dict:
        c = self.core
        return {"data_reads": c.data_reads, "data_writes": c.data_writes,
                "meta_reads": c.meta_reads, "meta_writes": c.meta_writes}

    def data_transfers(self) -> int:
        return self.core.data_reads + self.core.data_writes

    def real_slots(self):
        """(slot, bucket, addr, pos) arrays of every real block in the tree."""
        types, addrs, poss = self.core.dump_meta()
        slots = np.flatnonzero(types == 1)
        lay = self.layout
        starts = np.array([lay.slot_start(b) for b in range(lay.n_buckets)], dtype=np.int64)
        buckets = np.searchsorted(starts, slots, side="right") - 1
        return slots, buckets, addrs[slots], poss[slots]

    def locations(self) -> dict[int, int]:
        """addr -> breadth-first bucket index, or -1 for the stash."""
        _, buckets, addrs, _ = self.real_slots()
        loc = dict(zip(addrs.tolist(), buckets.tolist()))
        for a, _, _ in self.core.stash_entries():
            loc[a] = -1
        return loc

    def leaf_overflow(self) -> int:
        """Real blocks held outside the leaf buckets (internal buckets or stash)."""
        n_internal = self.params.leaves - 1
        return sum(1 for b in self.locations().values() if b < n_internal)

    def block_contents(self) -> dict[int, bytes]:
        """Current payload of every real block (untraced)."""
        slots, _, addrs, _ = self.real_slots()
        out = {a: self.core.slot_payload(s) for s, a in zip(slots.tolist(), addrs.tolist())}
        for a, _, payload in self.core.stash_entries():
            out[a] = bytes(payload)
        return out

    def audit(self) -> list[str]:
        """Check the tree invariants; returns a list of violations."""
        problems: list[str] = []
        p = self.params
        _, buckets, addrs, poss = self.real_slots()
        depth = np.floor(np.log2(buckets + 1)).astype(np.int64)
        on_path = (poss >> (p.L - depth)) == (buckets - ((1 << depth) - 1))
        for b, a, pos in zip(buckets[~on_path], addrs[~on_path], poss[~on_path]):
            problems.append(f"block {a} with label {pos} sits off its path in bucket {b}")
        stash = self.core.stash_entries()
        all_addrs = addrs.tolist() + [a for a, _, _ in stash]
        if len(all_addrs) != len(set(all_addrs)):
            problems.append("duplicate real block")
        missing = set(range(p.N)) - set(all_addrs)
        if missing:
            problems.append(f"{len(missing)} blocks lost, e.g. {sorted(missing)[:5]}")
        if len(all_addrs) != p.N:
            problems.append(f"{len(all_addrs)} real blocks, expected {p.N}")
        return problems

    def check(self) -> None:
        problems = self.audit()
        if problems:
            raise IntegrityError("; ".join(problems[:10]))

    def primary_labels(self) -> dict[int, int]:
        _, _, addrs, poss = self.real_slots()
        out = dict(zip(addrs.tolist(), poss.tolist()))
        for a, pos, _ in self.core.stash_entries():
            out[a] = pos
        return out

    def snapshot(self) -> dict:
        """JSON-serialisable view of the metadata tree and stash."""
        _, buckets, addrs, poss = self.real_slots()
        tree: dict[str, list] = {}
        for b, a, pos in zip(buckets.tolist(), addrs.tolist(), poss.tolist()):
            tree.setdefault(str(b), []).append([a, pos])
        return {
            "name": self.name,
            "params": {"N": self.params.N, "B": self.params.B, "L": self.params.L,
                       "Z": self.params.Z, "M": self.params.M,
                       "construction": self.params.construction.value},
            "G": self.G,
            "buckets": tree,
            "stash": [[a, pos] for a, pos, _ in self.core.stash_entries()],
        }
