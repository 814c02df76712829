"""Simulated honest-but-curious block server.

The store is a flat array of B-bit cells carved into named regions. Every
physical read or write bumps a counter and, unless trace recording is
off, appends ``(addr << 1) | is_write`` to the access trace. The trace is
the adversary's view; payload contents are not.
"""
from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

READ, WRITE = "read", "write"


@dataclass(frozen=True)
class Region:
    name: str
    base: int
    size: int

    def __contains__(self, addr: int) -> bool:
        return self.base <= addr < self.base + self.size


class AccessTrace:
    """Ordered physical accesses plus indices delimiting logical accesses.

    Entries recorded before the first epoch mark (initial upload) belong
    to epoch -1.
    """

    def __init__(self, entries: np.ndarray, epoch_marks: list[int]):
        self.entries = entries
        self.epoch_marks = list(epoch_marks)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def addresses(self) -> np.ndarray:
        return self.entries >> 1

    @property
    def is_write(self) -> np.ndarray:
        return (self.entries & 1).astype(bool)

    def epochs(self) -> np.ndarray:
        idx = np.arange(len(self.entries))
        return np.searchsorted(np.asarray(self.epoch_marks, dtype=np.int64),
                               idx, side="right") - 1

    def epoch(self, k: int) -> np.ndarray:
        """Raw entries of logical access ``k``."""
        start = self.epoch_marks[k]
        stop = self.epoch_marks[k + 1] if k + 1 < len(self.epoch_marks) else len(self.entries)
        return self.entries[start:stop]

    def records(self) -> Iterator[tuple[int, str, int]]:
        for e, raw in zip(self.epochs().tolist(), self.entries.tolist()):
            yield e, WRITE if raw & 1 else READ, raw >> 1

    def to_csv(self, fh) -> None:
        w = csv.writer(fh)
        w.writerow(["epoch", "direction", "addr"])
        w.writerows(self.records())

    def to_jsonl(self, fh) -> None:
        for e, d, a in self.records():
            fh.write(json.dumps({"epoch": e, "direction": d, "addr": a}) + "\n")

    @classmethod
    def from_csv(cls, fh) -> "AccessTrace":
        rows = list(csv.DictReader(fh))
        entries = np.array([(int(r["addr"]) << 1) | (r["direction"] == WRITE)
                            for r in rows], dtype=np.int64)
        marks, last = [], None
        for i, r in enumerate(rows):
            e = int(r["epoch"])
            if e >= 0 and e != last:
                marks.append(i)
            last = e
        return cls(entries, marks)


class PhysicalStore:
    """Flat physical block array with trace recording and counters.

    Regions are allocated first; the cell array itself is created on
    first use and the layout is frozen from then on.
    """

    def __init__(self, block_bits: int = 1024, record_trace: bool = True):
        if block_bits <= 0 or block_bits % 8:
            raise ValueError("block_bits must be a positive multiple of 8")
        self.block_bits = block_bits
        self.block_bytes = block_bits // 8
        self.record_trace = record_trace
        self.regions: dict[str, Region] = {}
        self._capacity = 0
        self._cells: np.ndarray | None = None
        # reads, writes, recorded trace length
        self._counters = np.zeros(3, dtype=np.int64)
        self._trace = np.empty(1024, dtype=np.int64)
        self.epoch_marks: list[int] = []

    # -- layout -------------------------------------------------------
    def allocate(self, name: str, n_blocks: int) -> Region:
        if self._cells is not None:
            raise RuntimeError("store layout is frozen once cells exist")
        if name in self.regions:
            raise ValueError(f"region {name!r} already allocated")
        region = Region(name, self._capacity, int(n_blocks))
        self.regions[name] = region
        self._capacity += region.size
        return region

    @property
    def capacity(self) -> int:
        return self._capacity

    @property
    def cells(self) -> np.ndarray:
        if self._cells is None:
            self._cells = np.zeros((self._capacity, self.block_bytes), dtype=np.uint8)
        return self._cells

    # -- trace plumbing ----------------------------------------------
    @property
    def reads(self) -> int:
        return int(self._counters[0])

    @property
    def writes(self) -> int:
        return int(self._counters[1])

    @property
    def transfers(self) -> int:
        return self.reads + self.writes

    def reserve(self, k: int) -> np.ndarray:
        """Make room for ``k`` more trace entries and return the buffer."""
        need = int(self._counters[2]) + k
        if need > len(self._trace):
            new = np.empty(max(need, 2 * len(self._trace)), dtype=np.int64)
            new[: self._counters[2]] = self._trace[: self._counters[2]]
            self._trace = new
        return self._trace

    def _record(self, addr: int, write: bool) -> None:
        self._counters[1 if write else 0] += 1
        if self.record_trace:
            self.reserve(1)
            n = self._counters[2]
            self._trace[n] = (addr << 1) | write
            self._counters[2] = n + 1

    def record_bulk(self, start: int, count: int, write: bool = True) -> None:
        """Record sequential accesses to ``[start, start+count)``."""
        self._counters[1 if write else 0] += count
        if self.record_trace and count:
            buf = self.reserve(count)
            n = int(self._counters[2])
            buf[n:n + count] = (np.arange(start, start + count, dtype=np.int64) << 1) | write
            self._counters[2] = n + count

    def mark_epoch(self) -> None:
        self.epoch_marks.append(int(self._counters[2]) if self.record_trace
                                else self.transfers)

    @property
    def trace(self) -> AccessTrace:
        n = int(self._counters[2])
        return AccessTrace(self._trace[:n].copy(), self.epoch_marks)

    def clear_trace(self) -> None:
        self._counters[:] = 0
        self.epoch_marks.clear()

    # -- block interface ---------------------------------------------
    def _check(self, addr: int) -> None:
        if not 0 <= addr < self._capacity:
            raise IndexError(f"physical address {addr} out of range [0, {self._capacity})")

    def read_block(self, addr: int) -> bytes:
        self._check(addr)
        self._record(addr, False)
        return self.cells[addr].tobytes()

    def write_block(self, addr: int, payload: bytes) -> None:
        self._check(addr)
        if len(payload) != self.block_bytes:
            raise ValueError(f"payload must be {self.block_bytes} bytes")
        self._record(addr, True)
        self.cells[addr] = np.frombuffer(payload, dtype=np.uint8)


def default_output_dir() -> str:
    return os.environ.get("SUCCINCT_ORAM_OUT", ".")


# -- optional encryption layer -------------------------------------------

class SealedBlock(NamedTuple):
    counter: int
    body: bytes


def _ctr_cipher(key: bytes, counter: int):
    return Cipher(algorithms.AES(key), modes.CTR(counter.to_bytes(16, "big")))


def seal(payload: bytes, block_counter: int, key: bytes | None) -> SealedBlock:
    """AES counter-mode encryption; ``key=None`` is the disabled test mode."""
    if key is None:
        return SealedBlock(block_counter, bytes(payload))
    # each block spans len//16 AES blocks; space nonces so streams never overlap
    enc = _ctr_cipher(key, block_counter << 32).encryptor()
    return SealedBlock(block_counter, enc.update(bytes(payload)) + enc.finalize())


def open_sealed(ciphertext: SealedBlock, key: bytes | None) -> bytes:
    if key is None:
        return bytes(ciphertext.body)
    dec = _ctr_cipher(key, ciphertext.counter << 32).decryptor()
    return dec.update(ciphertext.body) + dec.finalize()


class Sealer:
    """Holds the key and a strictly increasing block counter."""

    def __init__(self, key: bytes | None = None):
        if key is not None and len(key) not in (16, 24, 32):
            raise ValueError("AES key must be 16, 24 or 32 bytes")
        self.key = key
        self.counter = 0

    @property
    def enabled(self) -> bool:
        return self.key is not None

    def seal(self, payload: bytes) -> SealedBlock:
        self.counter += 1
        return seal(payload, self.counter, self.key)

    def open(self, block: SealedBlock) -> bytes:
        return open_sealed(block, self.key)


class SealedStore:
    """Block interface over a :class:`PhysicalStore` that seals every write.

    Ciphertext bodies live in the store's cells (same width as the
    plaintext); the per-block counters are kept beside them, as a real
    server would store the nonce next to the ciphertext.
    """

    def __init__(self, store: PhysicalStore, sealer: Sealer):
        self.store = store
        self.sealer = sealer
        self._counters: dict[int, int] = {}

    def write_block(self, addr: int, payload: bytes) -> None:
        sealed = self.sealer.seal(payload)
        self._counters[addr] = sealed.counter
        self.store.write_block(addr, sealed.body)

    def read_block(self, addr: int) -> bytes:
        body = self.store.read_block(addr)
        return self.sealer.open(SealedBlock(self._counters.get(addr, 0), body))

    def raw(self, addr: int) -> bytes:
        return self.store.cells[addr].tobytes()


def trace_to_string(trace: AccessTrace, fmt: str = "csv") -> str:
    buf = io.StringIO()
    (trace.to_csv if fmt == "csv" else trace.to_jsonl)(buf)
    return buf.getvalue()
