"""Pure-Python tree kernel (fallback for the compiled ``_ckernel``).

Both backends implement the same operations with the same trace order,
stash order and dummy-payload stream, so a run is bit-identical whichever
one is loaded.
"""
from __future__ import annotations

from bisect import bisect_left, insort

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB


def splitmix_words(key: int, ctr: int, n: int) -> np.ndarray:
    """Counter-based splitmix64 words ``mix(key + (ctr+i)*GOLDEN)``."""
    z = (np.uint64(key) + (np.arange(ctr, ctr + n, dtype=np.uint64) * np.uint64(GOLDEN)))
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


def two_choice_loads(first, second, bins: int) -> np.ndarray:
    """Throw ball k into the lesser loaded of first[k], second[k] (ties: first)."""
    loads = [0] * bins
    for a, b in zip(first.tolist(), second.tolist()):
        if loads[b] < loads[a]:
            loads[b] += 1
        else:
            loads[a] += 1
    return np.asarray(loads, dtype=np.int64)


class TreeCore:
    def __init__(self, store, data_region, meta_region, L, Z, M, addr_width,
                 rows_per_depth, garbage_key):
        self.store = store
        self.L, self.Z, self.M = int(L), int(Z), int(M)
        self.aw = int(addr_width)
        self.w = 1 + self.aw + self.L
        self.n_internal = (1 << self.L) - 1
        self.n_buckets = (1 << (self.L + 1)) - 1
        self.n_slots = self.n_internal * self.Z + (1 << self.L) * self.M
        self.data_base = data_region.base
        self.meta_base = meta_region.base
        self.meta_rows = meta_region.size
        self.nbytes = store.block_bytes
        self.bbits = self.nbytes * 8
        self.nwords = -(-self.nbytes // 8)
        self.rows_per_depth = [int(k) for k in rows_per_depth]
        self.gkey = int(garbage_key) & MASK64
        self.gctr = 0
        self.G = 0
        self.data_reads = self.data_writes = 0
        self.meta_reads = self.meta_writes = 0
        cells = store.cells
        self._cells = cells
        self._meta = cells[self.meta_base:self.meta_base + self.meta_rows].reshape(-1)
        self._keys: list[tuple[int, int]] = []
        self._stash: dict[int, tuple[int, bytes]] = {}
        self._staging = bytes(self.nbytes)

    # -- layout helpers ----------------------------------------------
    def capacity(self, b):
        return self.Z if b < self.n_internal else self.M

    def slot_start(self, b):
        if b < self.n_internal:
            return b * self.Z
        return self.n_internal * self.Z + (b - self.n_internal) * self.M

    def bucket_on_path(self, label, depth):
        return (1 << depth) - 1 + (label >> (self.L - depth))

    def _meta_start(self, b, depth):
        first = self.slot_start(b) * self.w // self.bbits
        return min(first, self.meta_rows - self.rows_per_depth[depth])

    # -- metadata fields ---------------------------------------------
    def _field(self, slot):
        bit = slot * self.w
        b0, b1 = bit >> 3, (bit + self.w + 7) >> 3
        chunk = int.from_bytes(self._meta[b0:b1].tobytes(), "big")
        shift = (b1 - b0) * 8 - (bit & 7) - self.w
        return (chunk >> shift) & ((1 << self.w) - 1)

    def _set_field(self, slot, value):
        bit = slot * self.w
        b0, b1 = bit >> 3, (bit + self.w + 7) >> 3
        nb = b1 - b0
        chunk = int.from_bytes(self._meta[b0:b1].tobytes(), "big")
        shift = nb * 8 - (bit & 7) - self.w
        mask = ((1 << self.w) - 1) << shift
        chunk = (chunk & ~mask) | (value << shift)
        self._meta[b0:b1] = np.frombuffer(chunk.to_bytes(nb, "big"), dtype=np.uint8)

    def get_meta(self, slot):
        v = self._field(slot)
        lw = self.L
        return v >> (self.aw + lw), (v >> lw) & ((1 << self.aw) - 1), v & ((1 << lw) - 1)

    def set_meta(self, slot, real, addr, pos):
        self._set_field(slot, (int(real) << (self.aw + self.L)) | (addr << self.L) | pos)

    def _clear_type(self, slot):
        self._set_field(slot, self._field(slot) & ((1 << (self.aw + self.L)) - 1))

    # -- trace -------------------------------------------------------
    def _rec(self, addr, write):
        self.store._record(addr, write)

    def _meta_io(self, b, depth, write):
        start = self._meta_start(b, depth)
        for r in range(start, start + self.rows_per_depth[depth]):
            self._rec(self.meta_base + r, write)
        if write:
            self.meta_writes += self.rows_per_depth[depth]
        else:
            self.meta_reads += self.rows_per_depth[depth]

    def _garbage(self):
        words = splitmix_words(self.gkey, self.gctr, self.nwords)
        self.gctr += self.nwords
        return words.astype("<u8").tobytes()[: self.nbytes]

    # -- stash -------------------------------------------------------
    def stash_insert(self, addr, pos, payload):
        insort(self._keys, (pos, addr))
        self._stash[addr] = (pos, bytes(payload))

    def _stash_take(self, addr):
        entry = self._stash.pop(addr, None)
        if entry is None:
            return None
        pos, payload = entry
        del self._keys[bisect_left(self._keys, (pos, addr))]
        return pos, payload

    def stash_size(self):
        return len(self._keys)

    def stash_entries(self):
        return [(a, p, self._stash[a][1]) for p, a in self._keys]

    # -- path primitives ---------------------------------------------
    def read_path(self, label, addr):
        hit = False
        for d in range(self.L + 1):
            b = self.bucket_on_path(label, d)
            self._meta_io(b, d, False)
            s0 = self.slot_start(b)
            for slot in range(s0, s0 + self.capacity(b)):
                self._rec(self.data_base + slot, False)
                self.data_reads += 1
                real, a, p = self.get_meta(slot)
                if real and a == addr and p == label:
                    self._staging = self._cells[self.data_base + slot].tobytes()
                    self._clear_type(slot)
                    hit = True
            self._meta_io(b, d, True)
        return hit

    def evict_read(self, leaf):
        for d in range(self.L + 1):
            b = self.bucket_on_path(leaf, d)
            self._meta_io(b, d, False)
            s0 = self.slot_start(b)
            for slot in range(s0, s0 + self.capacity(b)):
                self._rec(self.data_base + slot, False)
                self.data_reads += 1
                real, a, p = self.get_meta(slot)
                if real:
                    self.stash_insert(a, p, self._cells[self.data_base + slot].tobytes())
                    self._clear_type(slot)
            self._meta_io(b, d, True)

    def evict_write(self, leaf):
        for d in range(self.L, -1, -1):
            b = self.bucket_on_path(leaf, d)
            lo = (leaf >> (self.L - d)) << (self.L - d)
            hi = lo + (1 << (self.L - d))
            i = bisect_left(self._keys, (lo, -1))
            j = i
            cap = self.capacity(b)
            while j < len(self._keys) and j - i < cap and self._keys[j][0] < hi:
                j += 1
            chosen = self._keys[i:j]
            del self._keys[i:j]
            s0 = self.slot_start(b)
            for k in range(cap):
                slot = s0 + k
                if k < len(chosen):
                    p, a = chosen[k]
                    payload = self._stash.pop(a)[1]
                    self._cells[self.data_base + slot] = np.frombuffer(payload, dtype=np.uint8)
                    self.set_meta(slot, 1, a, p)
                else:
                    self._cells[self.data_base + slot] = np.frombuffer(self._garbage(), dtype=np.uint8)
                    self.set_meta(slot, 0, 0, 0)
                self._rec(self.data_base + slot, True)
                self.data_writes += 1
            self._meta_io(b, d, True)

    # -- fused access steps ------------------------------------------
    def locate(self, addr, l1, l2=-1):
        """ReadPath on l1 (and l2), else fall back to the stash.

        Returns the block's primary label; its payload goes to staging.
        """
        found = -1
        if self.read_path(l1, addr):
            found = l1
        if l2 >= 0 and self.read_path(l2, addr) and found < 0:
            found = l2
        if found < 0:
            entry = self._stash_take(addr)
            if entry is None:
                raise KeyError(f"block {addr} is neither on its path(s) nor in the stash")
            found, self._staging = entry
        return found

    def locate_path(self, addr, leaf):
        self.evict_read(leaf)
        entry = self._stash_take(addr)
        if entry is None:
            raise KeyError(f"block {addr} is neither on path {leaf} nor in the stash")
        pos, self._staging = entry
        return pos

    def _bitrev(self, x):
        r = 0
        for _ in range(self.L):
            r = (r << 1) | (x & 1)
            x >>= 1
        return r

    def commit_evict(self, addr, new_label, payload=None):
        if payload is not None:
            self._staging = bytes(payload)
        self.stash_insert(addr, new_label, self._staging)
        leaf = self._bitrev(self.G & ((1 << self.L) - 1))
        self.G += 1
        self.evict_read(leaf)
        self.evict_write(leaf)
        return leaf

    def commit_writeback(self, addr, new_label, payload, leaf):
        if payload is not None:
            self._staging = bytes(payload)
        self.stash_insert(addr, new_label, self._staging)
        self.evict_write(leaf)

    def get_staging(self):
        return self._staging

    # -- setup and inspection (untraced) -----------------------------
    def fill_dummies(self):
        n = self.n_slots
        words = splitmix_words(self.gkey, self.gctr, n * self.nwords)
        self.gctr += n * self.nwords
        raw = np.frombuffer(words.astype("<u8").tobytes(), dtype=np.uint8)
        raw = raw.reshape(n, self.nwords * 8)[:, : self.nbytes]
        self._cells[self.data_base:self.data_base + n] = raw
        self._meta[:] = 0

    def place_all(self, labels, payloads=None):
        """Put block a at the deepest non-full bucket on its path; overflow
        goes to the stash. Returns the number of stashed blocks."""
        self.fill_dummies()
        counts = [0] * self.n_buckets
        zero = bytes(self.nbytes)
        overflow = 0
        for a, label in enumerate(np.asarray(labels).tolist()):
            payload = zero if payloads is None else payloads[a].tobytes()
            for d in range(self.L, -1, -1):
                b = self.bucket_on_path(label, d)
                if counts[b] < self.capacity(b):
                    slot = self.slot_start(b) + counts[b]
                    counts[b] += 1
                    self._cells[self.data_base + slot] = np.frombuffer(payload, dtype=np.uint8)
                    self.set_meta(slot, 1, a, label)
                    break
            else:
                self.stash_insert(a, label, payload)
                overflow += 1
        return overflow

    def dump_meta(self):
        types = np.zeros(self.n_slots, dtype=np.int8)
        addrs = np.zeros(self.n_slots, dtype=np.int64)
        poss = np.zeros(self.n_slots, dtype=np.int64)
        for s in range(self.n_slots):
            types[s], addrs[s], poss[s] = self.get_meta(s)
        return types, addrs, poss

    def slot_payload(self, slot):
        return self._cells[self.data_base + slot].tobytes()
