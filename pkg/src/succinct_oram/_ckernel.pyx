# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tree kernel. Mirrors ``_pykernel`` operation for operation."""
import numpy as np
cimport numpy as cnp
from libc.string cimport memcpy, memmove, memset
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t MIX1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t MIX2 = 0x94D049BB133111EBULL


cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


def two_choice_loads(first, second, Py_ssize_t bins):
    cdef int64_t[::1] a = np.ascontiguousarray(first, dtype=np.int64)
    cdef int64_t[::1] b = np.ascontiguousarray(second, dtype=np.int64)
    out = np.zeros(bins, dtype=np.int64)
    cdef int64_t[::1] loads = out
    cdef Py_ssize_t k, n = a.shape[0]
    cdef int64_t x, y
    with nogil:
        for k in range(n):
            x = a[k]
            y = b[k]
            if loads[y] < loads[x]:
                loads[y] += 1
            else:
                loads[x] += 1
    return out


cdef class TreeCore:
    cdef public object store
    cdef public int L, Z, M, aw, w
    cdef public Py_ssize_t n_internal, n_buckets, n_slots
    cdef public Py_ssize_t data_base, meta_base, meta_rows, nbytes, bbits, nwords
    cdef public object rows_per_depth
    cdef public long long G
    cdef public long long data_reads, data_writes, meta_reads, meta_writes
    cdef public unsigned long long gkey, gctr

    cdef object _cells_obj
    cdef unsigned char* cells
    cdef unsigned char* meta
    cdef Py_ssize_t* rows
    cdef object _rows_obj
    cdef int64_t* counters
    cdef int64_t* trace
    cdef bint recording
    cdef Py_ssize_t bound

    # stash pool
    cdef object _paddr, _ppos, _pdata, _order, _free
    cdef int64_t* p_addr
    cdef int64_t* p_pos
    cdef unsigned char* p_data
    cdef int64_t* order
    cdef int64_t* freel
    cdef Py_ssize_t n_stash, n_free, pool_cap
    cdef object _staging_obj
    cdef unsigned char* staging

    def __init__(self, store, data_region, meta_region, L, Z, M, addr_width,
                 rows_per_depth, garbage_key):
        self.store = store
        self.L = L
        self.Z = Z
        self.M = M
        self.aw = addr_width
        self.w = 1 + self.aw + self.L
        if self.w > 57:
            raise ValueError("metadata words wider than 57 bits need the Python kernel")
        self.n_internal = (1 << self.L) - 1
        self.n_buckets = (1 << (self.L + 1)) - 1
        self.n_slots = self.n_internal * self.Z + (1 << self.L) * self.M
        self.data_base = data_region.base
        self.meta_base = meta_region.base
        self.meta_rows = meta_region.size
        self.nbytes = store.block_bytes
        self.bbits = self.nbytes * 8
        self.nwords = (self.nbytes + 7) // 8
        self.rows_per_depth = [int(k) for k in rows_per_depth]
        self._rows_obj = np.asarray(self.rows_per_depth, dtype=np.intp)
        self.rows = <Py_ssize_t*> cnp.PyArray_DATA(self._rows_obj)
        self.gkey = garbage_key & 0xFFFFFFFFFFFFFFFF
        self.gctr = 0
        self.G = 0
        self.data_reads = self.data_writes = self.meta_reads = self.meta_writes = 0
        cells = store.cells
        if not cells.flags["C_CONTIGUOUS"]:
            raise ValueError("store cells must be C-contiguous")
        self._cells_obj = cells
        self.cells = <unsigned char*> cnp.PyArray_DATA(cells)
        self.meta = self.cells + self.meta_base * self.nbytes
        self.counters = <int64_t*> cnp.PyArray_DATA(store._counters)
        cdef Py_ssize_t path_slots = self.Z * self.L + self.M
        self.bound = 4 * (path_slots + 2 * sum(self.rows_per_depth)) + 8
        self.pool_cap = 0
        self.n_stash = 0
        self.n_free = 0
        self._grow(64)
        self._staging_obj = np.zeros(self.nbytes, dtype=np.uint8)
        self.staging = <unsigned char*> cnp.PyArray_DATA(self._staging_obj)

    cdef void _grow(self, Py_ssize_t cap):
        cdef Py_ssize_t old = self.pool_cap, i
        paddr = np.zeros(cap, dtype=np.int64)
        ppos = np.zeros(cap, dtype=np.int64)
        pdata = np.zeros((cap, self.nbytes), dtype=np.uint8)
        order = np.zeros(cap, dtype=np.int64)
        free = np.zeros(cap, dtype=np.int64)
        if old:
            paddr[:old] = self._paddr
            ppos[:old] = self._ppos
            pdata[:old] = self._pdata
            order[:old] = self._order
            free[:self.n_free] = self._free[:self.n_free]
        self._paddr, self._ppos, self._pdata, self._order, self._free = paddr, ppos, pdata, order, free
        self.p_addr = <int64_t*> cnp.PyArray_DATA(paddr)
        self.p_pos = <int64_t*> cnp.PyArray_DATA(ppos)
        self.p_data = <unsigned char*> cnp.PyArray_DATA(pdata)
        self.order = <int64_t*> cnp.PyArray_DATA(order)
        self.freel = <int64_t*> cnp.PyArray_DATA(free)
        # new pool slots are free; push highest first so low indices pop first
        for i in range(cap - 1, old - 1, -1):
            self.freel[self.n_free] = i
            self.n_free += 1
        self.pool_cap = cap

    cdef void _begin(self):
        buf = self.store.reserve(self.bound)
        self.trace = <int64_t*> cnp.PyArray_DATA(buf)
        self.recording = self.store.record_trace

    cdef inline void _rec(self, Py_ssize_t addr, int write) noexcept:
        self.counters[write] += 1
        if self.recording:
            self.trace[self.counters[2]] = (<int64_t> addr << 1) | write
            self.counters[2] += 1

    # -- layout ------------------------------------------------------
    cpdef Py_ssize_t capacity(self, Py_ssize_t b):
        return self.Z if b < self.n_internal else self.M

    cpdef Py_ssize_t slot_start(self, Py_ssize_t b):
        if b < self.n_internal:
            return b * self.Z
        return self.n_internal * self.Z + (b - self.n_internal) * self.M

    cpdef Py_ssize_t bucket_on_path(self, long long label, int depth):
        return (1 << depth) - 1 + (label >> (self.L - depth))

    # -- metadata fields ---------------------------------------------
    cdef inline uint64_t _field(self, Py_ssize_t slot) noexcept:
        cdef Py_ssize_t bit = slot * self.w
        cdef Py_ssize_t b0 = bit >> 3, b1 = (bit + self.w + 7) >> 3, k
        cdef uint64_t chunk = 0
        for k in range(b0, b1):
            chunk = (chunk << 8) | self.meta[k]
        return (chunk >> ((b1 - b0) * 8 - (bit & 7) - self.w)) & ((<uint64_t> 1 << self.w) - 1)

    cdef inline void _set_field(self, Py_ssize_t slot, uint64_t value) noexcept:
        cdef Py_ssize_t bit = slot * self.w
        cdef Py_ssize_t b0 = bit >> 3, b1 = (bit + self.w + 7) >> 3, k
        cdef int shift = <int> ((b1 - b0) * 8 - (bit & 7) - self.w)
        cdef uint64_t chunk = 0, mask
        for k in range(b0, b1):
            chunk = (chunk << 8) | self.meta[k]
        mask = ((<uint64_t> 1 << self.w) - 1) << shift
        chunk = (chunk & ~mask) | (value << shift)
        for k in range(b1 - 1, b0 - 1, -1):
            self.meta[k] = <unsigned char> (chunk & 0xFF)
            chunk >>= 8

    def get_meta(self, Py_ssize_t slot):
        cdef uint64_t v = self._field(slot)
        return (int(v >> (self.aw + self.L)), int((v >> self.L) & ((<uint64_t> 1 << self.aw) - 1)),
                int(v & ((<uint64_t> 1 << self.L) - 1)))

    def set_meta(self, Py_ssize_t slot, int real, long long addr, long long pos):
        self._set_field(slot, self._pack(real, addr, pos))

    cdef inline uint64_t _pack(self, int real, int64_t addr, int64_t pos) noexcept:
        return ((<uint64_t> real) << (self.aw + self.L)) | ((<uint64_t> addr) << self.L) | (<uint64_t> pos)

    cdef inline void _meta_io(self, Py_ssize_t b, int depth, int write) noexcept:
        cdef Py_ssize_t k = self.rows[depth]
        cdef Py_ssize_t start = self.slot_start(b) * self.w // self.bbits
        cdef Py_ssize_t r
        if start > self.meta_rows - k:
            start = self.meta_rows - k
        for r in range(start, start + k):
            self._rec(self.meta_base + r, write)
        if write:
            self.meta_writes += k
        else:
            self.meta_reads += k

    cdef inline void _garbage_into(self, unsigned char* dst) noexcept:
        cdef Py_ssize_t i, j, off = 0
        cdef uint64_t z
        for i in range(self.nwords):
            z = _mix(self.gkey + (self.gctr + i) * GOLDEN)
            for j in range(8):
                if off < self.nbytes:
                    dst[off] = <unsigned char> (z >> (8 * j))
                    off += 1
        self.gctr += self.nwords

    # -- stash -------------------------------------------------------
    cdef inline bint _less(self, int64_t pos, int64_t addr, int64_t idx) noexcept:
        return pos < self.p_pos[idx] or (pos == self.p_pos[idx] and addr < self.p_addr[idx])

    cdef Py_ssize_t _lower_bound_pos(self, int64_t pos) noexcept:
        cdef Py_ssize_t lo = 0, hi = self.n_stash, mid
        while lo < hi:
            mid = (lo + hi) >> 1
            if self.p_pos[self.order[mid]] < pos:
                lo = mid + 1
            else:
                hi = mid
        return lo

    cdef void _insert(self, int64_t addr, int64_t pos, const unsigned char* payload):
        cdef Py_ssize_t lo = 0, hi = self.n_stash, mid
        cdef int64_t idx
        if self.n_free == 0:
            self._grow(2 * self.pool_cap)
        self.n_free -= 1
        idx = self.freel[self.n_free]
        self.p_addr[idx] = addr
        self.p_pos[idx] = pos
        memcpy(self.p_data + idx * self.nbytes, payload, self.nbytes)
        while lo < hi:
            mid = (lo + hi) >> 1
            if self._less(pos, addr, self.order[mid]):
                hi = mid
            else:
                lo = mid + 1
        memmove(self.order + lo + 1, self.order + lo, (self.n_stash - lo) * sizeof(int64_t))
        self.order[lo] = idx
        self.n_stash += 1

    cdef Py_ssize_t _find(self, int64_t addr) noexcept:
        cdef Py_ssize_t k
        for k in range(self.n_stash):
            if self.p_addr[self.order[k]] == addr:
                return k
        return -1

    cdef void _remove_range(self, Py_ssize_t i, Py_ssize_t j) noexcept:
        cdef Py_ssize_t k
        for k in range(i, j):
            self.freel[self.n_free] = self.order[k]
            self.n_free += 1
        memmove(self.order + i, self.order + j, (self.n_stash - j) * sizeof(int64_t))
        self.n_stash -= j - i

    def stash_insert(self, long long addr, long long pos, payload):
        cdef const unsigned char[::1] p = bytes(payload)
        self._insert(addr, pos, &p[0])

    def stash_size(self):
        return self.n_stash

    def stash_entries(self):
        out = []
        cdef Py_ssize_t k
        cdef int64_t idx
        for k in range(self.n_stash):
            idx = self.order[k]
            out.append((int(self.p_addr[idx]), int(self.p_pos[idx]),
                        (<char*> (self.p_data + idx * self.nbytes))[:self.nbytes]))
        return out

    # -- path primitives ---------------------------------------------
    cdef bint _read_path(self, int64_t label, int64_t addr) noexcept:
        cdef bint hit = False
        cdef int d
        cdef Py_ssize_t b, s0, slot, cap
        cdef uint64_t v, want = self._pack(1, addr, label)
        for d in range(self.L + 1):
            b = (1 << d) - 1 + (label >> (self.L - d))
            self._meta_io(b, d, 0)
            s0 = self.slot_start(b)
            cap = self.capacity(b)
            for slot in range(s0, s0 + cap):
                self._rec(self.data_base + slot, 0)
                v = self._field(slot)
                if v == want:
                    memcpy(self.staging, self.cells + (self.data_base + slot) * self.nbytes, self.nbytes)
                    self._set_field(slot, v & (((<uint64_t> 1) << (self.aw + self.L)) - 1))
                    hit = True
            self.data_reads += cap
            self._meta_io(b, d, 1)
        return hit

    cdef void _evict_read(self, int64_t leaf):
        cdef int d
        cdef Py_ssize_t b, s0, slot, cap
        cdef uint64_t v
        cdef uint64_t tbit = (<uint64_t> 1) << (self.aw + self.L)
        cdef uint64_t amask = ((<uint64_t> 1) << self.aw) - 1, pmask = ((<uint64_t> 1) << self.L) - 1
        for d in range(self.L + 1):
            b = (1 << d) - 1 + (leaf >> (self.L - d))
            self._meta_io(b, d, 0)
            s0 = self.slot_start(b)
            cap = self.capacity(b)
            for slot in range(s0, s0 + cap):
                self._rec(self.data_base + slot, 0)
                v = self._field(slot)
                if v & tbit:
                    self._insert(<int64_t> ((v >> self.L) & amask), <int64_t> (v & pmask),
                                 self.cells + (self.data_base + slot) * self.nbytes)
                    self._set_field(slot, v & (tbit - 1))
            self.data_reads += cap
            self._meta_io(b, d, 1)

    cdef void _evict_write(self, int64_t leaf):
        cdef int d
        cdef Py_ssize_t b, s0, cap, i, j, k, slot
        cdef int64_t lo, hi, idx
        for d in range(self.L, -1, -1):
            b = (1 << d) - 1 + (leaf >> (self.L - d))
            lo = (leaf >> (self.L - d)) << (self.L - d)
            hi = lo + ((<int64_t> 1) << (self.L - d))
            cap = self.capacity(b)
            i = self._lower_bound_pos(lo)
            j = i
            while j < self.n_stash and j - i < cap and self.p_pos[self.order[j]] < hi:
                j += 1
            s0 = self.slot_start(b)
            for k in range(cap):
                slot = s0 + k
                if k < j - i:
                    idx = self.order[i + k]
                    memcpy(self.cells + (self.data_base + slot) * self.nbytes,
                           self.p_data + idx * self.nbytes, self.nbytes)
                    self._set_field(slot, self._pack(1, self.p_addr[idx], self.p_pos[idx]))
                else:
                    self._garbage_into(self.cells + (self.data_base + slot) * self.nbytes)
                    self._set_field(slot, 0)
                self._rec(self.data_base + slot, 1)
            self.data_writes += cap
            self._remove_range(i, j)
            self._meta_io(b, d, 1)

    def read_path(self, long long label, long long addr):
        self._begin()
        return self._read_path(label, addr)

    def evict_read(self, long long leaf):
        self._begin()
        self._evict_read(leaf)

    def evict_write(self, long long leaf):
        self._begin()
        self._evict_write(leaf)

    # -- fused access steps ------------------------------------------
    def locate(self, long long addr, long long l1, long long l2=-1):
        cdef long long found = -1
        cdef Py_ssize_t k
        cdef int64_t idx
        self._begin()
        if self._read_path(l1, addr):
            found = l1
        if l2 >= 0 and self._read_path(l2, addr) and found < 0:
            found = l2
        if found < 0:
            k = self._find(addr)
            if k < 0:
                raise KeyError(f"block {addr} is neither on its path(s) nor in the stash")
            idx = self.order[k]
            found = self.p_pos[idx]
            memcpy(self.staging, self.p_data + idx * self.nbytes, self.nbytes)
            self._remove_range(k, k + 1)
        return found

    def locate_path(self, long long addr, long long leaf):
        cdef Py_ssize_t k
        cdef int64_t idx
        self._begin()
        self._evict_read(leaf)
        k = self._find(addr)
        if k < 0:
            raise KeyError(f"block {addr} is neither on path {leaf} nor in the stash")
        idx = self.order[k]
        memcpy(self.staging, self.p_data + idx * self.nbytes, self.nbytes)
        self._remove_range(k, k + 1)
        return int(self.p_pos[idx])

    cdef void _stage(self, payload):
        cdef const unsigned char[::1] p
        if payload is not None:
            p = payload
            if p.shape[0] != self.nbytes:
                raise ValueError("payload has the wrong length")
            memcpy(self.staging, &p[0], self.nbytes)

    def commit_evict(self, long long addr, long long new_label, payload=None):
        cdef int64_t x, r = 0
        cdef int i
        self._stage(payload)
        self._begin()
        self._insert(addr, new_label, self.staging)
        x = self.G & (((<int64_t> 1) << self.L) - 1)
        for i in range(self.L):
            r = (r << 1) | (x & 1)
            x >>= 1
        self.G += 1
        self._evict_read(r)
        self._evict_write(r)
        return r

    def commit_writeback(self, long long addr, long long new_label, payload, long long leaf):
        self._stage(payload)
        self._begin()
        self._insert(addr, new_label, self.staging)
        self._evict_write(leaf)

    def get_staging(self):
        return (<char*> self.staging)[:self.nbytes]

    # -- setup and inspection (untraced) -----------------------------
    def fill_dummies(self):
        cdef Py_ssize_t s
        for s in range(self.n_slots):
            self._garbage_into(self.cells + (self.data_base + s) * self.nbytes)
        memset(self.meta, 0, self.meta_rows * self.nbytes)

    def place_all(self, labels, payloads=None):
        cdef int64_t[::1] lab = np.ascontiguousarray(labels, dtype=np.int64)
        cdef const unsigned char[:, ::1] pay
        cdef bint have = payloads is not None
        counts_obj = np.zeros(self.n_buckets, dtype=np.int64)
        cdef int64_t[::1] counts = counts_obj
        zero_obj = np.zeros(self.nbytes, dtype=np.uint8)
        cdef unsigned char[::1] zero = zero_obj
        cdef const unsigned char* src
        cdef Py_ssize_t a, b, slot, overflow = 0
        cdef int d
        cdef bint placed
        if have:
            pay = np.ascontiguousarray(payloads, dtype=np.uint8)
        self.fill_dummies()
        for a in range(lab.shape[0]):
            if have:
                src = &pay[a, 0]
            else:
                src = &zero[0]
            placed = False
            for d in range(self.L, -1, -1):
                b = (1 << d) - 1 + (lab[a] >> (self.L - d))
                if counts[b] < self.capacity(b):
                    slot = self.slot_start(b) + counts[b]
                    counts[b] += 1
                    memcpy(self.cells + (self.data_base + slot) * self.nbytes, src, self.nbytes)
                    self._set_field(slot, self._pack(1, a, lab[a]))
                    placed = True
                    break
            if not placed:
                self._insert(a, lab[a], src)
                overflow += 1
        return overflow

    def dump_meta(self):
        types = np.zeros(self.n_slots, dtype=np.int8)
        addrs = np.zeros(self.n_slots, dtype=np.int64)
        poss = np.zeros(self.n_slots, dtype=np.int64)
        cdef signed char[::1] t = types
        cdef int64_t[::1] ad = addrs, po = poss
        cdef Py_ssize_t s
        cdef uint64_t v
        for s in range(self.n_slots):
            v = self._field(s)
            t[s] = <signed char> (v >> (self.aw + self.L))
            ad[s] = <int64_t> ((v >> self.L) & (((<uint64_t> 1) << self.aw) - 1))
            po[s] = <int64_t> (v & (((<uint64_t> 1) << self.L) - 1))
        return types, addrs, poss

    def slot_payload(self, Py_ssize_t slot):
        return self._cells_obj[self.data_base + slot].tobytes()
