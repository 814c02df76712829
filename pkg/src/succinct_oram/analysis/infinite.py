"""Unbounded-bucket reference ORAM, the greedy post-processor, and subtree
usage counts.

Buckets here use heap numbering: the root is 1, the children of i are
2i and 2i+1, leaves are 2^L .. 2^(L+1)-1, and index 0 is the stash.
The bounded trees number buckets breadth first from 0, so heap = bfs + 1.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from ..meta import bit_reversal
from ..params import Construction, TreeParams
from ..rng import LabelSource, seed_sequence
from ..succinct import SuccinctOram


def is_heap_ancestor(a: int, i: int) -> bool:
    """True when bucket ``a`` is a proper ancestor of ``i`` (the stash 0 is above the root)."""
    if a == 0:
        return i != 0
    da, di = a.bit_length(), i.bit_length()
    return da < di and (i >> (di - da)) == a


class InfiniteOram:
    """Same label stream and eviction schedule as :class:`SuccinctOram`,
    with every bucket unbounded. Only metadata is tracked."""

    def __init__(self, params: TreeParams, seed=0, desync: int = 0):
        if params.construction is Construction.PATH:
            raise ValueError("the reference model follows the succinct constructions")
        self.params = params
        self.L = params.L
        self.two_choice = params.construction is Construction.T2
        self.labels = LabelSource(seed_sequence(seed).spawn(3)[0], params.L)
        for _ in range(desync):
            self.labels.draw()
        self.G = 0
        self.n_heap = 1 << (self.L + 1)
        self.buckets: list[set[int]] = [set() for _ in range(self.n_heap)]
        self.where: dict[int, int] = {}
        self.primary: dict[int, int] = {}
        self.second: dict[int, int] = {}
        self.ctr: list[int] = []

    def _put(self, addr: int, bucket: int) -> None:
        self.buckets[bucket].add(addr)
        self.where[addr] = bucket

    def init(self) -> None:
        N, L = self.params.N, self.L
        if self.two_choice:
            self.ctr = [0] * (1 << L)
            for a in range(N):
                l1, l2 = self.labels.draw(), self.labels.draw()
                win = l1 if self.ctr[l1] <= self.ctr[l2] else l2
                self.ctr[win] += 1
                self.primary[a] = win
                self.second[a] = (l1, l2)
        else:
            for a, lab in enumerate(self.labels.draw_many(N).tolist()):
                self.primary[a] = lab
        for a, lab in self.primary.items():
            self._put(a, (1 << L) + lab)

    def _on_path(self, bucket: int, label: int) -> bool:
        leaf = (1 << self.L) + label
        return bucket == 0 or bucket == leaf or is_heap_ancestor(bucket, leaf)

    def access(self, addr: int) -> None:
        L = self.L
        if self.two_choice:
            n1, n2 = self.labels.draw(), self.labels.draw()
            old = self.primary[addr]
            self.ctr[old] -= 1
            c1, c2 = self.ctr[n1], self.ctr[n2]
            win = n1 if c1 <= c2 else n2
            self.ctr[win] += 1
            self.second[addr] = (n1, n2)
        else:
            old = self.primary[addr]
            win = self.labels.draw()
        b = self.where[addr]
        if not self._on_path(b, old):
            raise AssertionError(f"block {addr} in bucket {b} is off the path of {old}")
        self.buckets[b].discard(addr)
        self.primary[addr] = win
        self._put(addr, 0)
        self.evict()

    def evict(self) -> None:
        L = self.L
        leaf = bit_reversal(self.G % (1 << L), L)
        self.G += 1
        path = [(1 << d) + (leaf >> (L - d)) for d in range(L + 1)]
        moving = set(self.buckets[0])
        self.buckets[0].clear()
        for b in path:
            moving |= self.buckets[b]
            self.buckets[b].clear()
        for a in moving:
            d = L - (self.primary[a] ^ leaf).bit_length()
            self._put(a, path[d])

    def capacity(self, bucket: int) -> int:
        return self.params.Z if bucket < (1 << self.L) else self.params.M

    def state(self) -> dict[int, frozenset]:
        return {i: frozenset(s) for i, s in enumerate(self.buckets) if s}


def bounded_state(oram: SuccinctOram) -> dict[int, frozenset]:
    """Heap-numbered bucket contents of a bounded tree (0 = stash)."""
    out: dict[int, set] = {}
    for a, b in oram.locations().items():
        out.setdefault(b + 1, set()).add(a)
    return {i: frozenset(s) for i, s in out.items()}


@dataclass
class PostProcessed:
    buckets: dict[int, frozenset]
    errors: list[str] = field(default_factory=list)
    # buckets that pushed blocks up while below their own capacity (M at
    # the leaves); not an error under G's definition, kept as a diagnostic
    underfull: list[str] = field(default_factory=list)

    @property
    def stash(self) -> int:
        return len(self.buckets.get(0, ()))


def post_process(s_z: dict[int, frozenset], inf: InfiniteOram) -> PostProcessed:
    """Push unbounded-state blocks upward until they sit where the bounded
    state holds them, visiting buckets in reverse breadth-first order.

    Errors are returned as data: a block that the bounded state keeps in
    no ancestor of its bucket, or a bucket that pushed blocks up and is
    left with fewer than Z blocks. Leaves that push up while below M are
    listed in ``underfull`` instead.
    """
    zloc = {a: b for b, s in s_z.items() for a in s}
    cur = [set(s) for s in inf.buckets]
    errors: list[str] = []
    underfull: list[str] = []
    Z = inf.params.Z
    for i in range(inf.n_heap - 1, 0, -1):
        moved = 0
        for v in sorted(cur[i]):
            zi = zloc.get(v)
            if zi == i:
                continue
            if zi is not None and is_heap_ancestor(zi, i):
                cur[i].discard(v)
                cur[i // 2].add(v)
                moved += 1
            else:
                errors.append(f"block {v} in bucket {i} is not held by any ancestor (bounded: {zi})")
        if moved and len(cur[i]) < Z:
            errors.append(f"bucket {i} pushed {moved} blocks up but holds {len(cur[i])} < Z={Z}")
        elif moved and len(cur[i]) < inf.capacity(i):
            underfull.append(f"bucket {i} pushed {moved} blocks up but holds {len(cur[i])} "
                             f"< capacity {inf.capacity(i)}")
    return PostProcessed({i: frozenset(s) for i, s in enumerate(cur) if s}, errors, underfull)


def state_diff(a: dict[int, frozenset], b: dict[int, frozenset], limit: int = 10) -> list[str]:
    out = []
    for i in sorted(set(a) | set(b)):
        x, y = a.get(i, frozenset()), b.get(i, frozenset())
        if x != y:
            out.append(f"bucket {i}: only bounded {sorted(x - y)[:5]}, only processed {sorted(y - x)[:5]}")
            if len(out) >= limit:
                break
    return out


@dataclass
class OracleVerdict:
    seed: int
    accesses: int
    equal: bool
    errors: list[str]
    diff: list[str]
    stash_bounded: int
    stash_processed: int
    underfull: int = 0

    @property
    def ok(self) -> bool:
        return self.equal and not self.errors

    def to_dict(self) -> dict:
        return {"seed": self.seed, "accesses": self.accesses, "ok": self.ok,
                "equal": self.equal, "g_errors": len(self.errors),
                "first_errors": self.errors[:3], "diff": self.diff,
                "stash_bounded": self.stash_bounded, "stash_processed": self.stash_processed,
                "underfull_pushes": self.underfull}


def run_oracle_pair(params: TreeParams, workload, seed=0, desync: int = 0,
                    backend: str | None = None, check_every: int = 0):
    """Run the bounded and unbounded ORAMs on the same label tape and compare.

    ``desync`` shifts the unbounded tape by that many draws (a negative
    control). With ``check_every = k > 0`` states are also compared every
    k accesses; the first mismatch is returned.
    Returns ``(verdict, bounded, unbounded)``.
    """
    z = SuccinctOram(params, seed=seed, record_trace=False, backend=backend)
    z.init()
    inf = InfiniteOram(params, seed=seed, desync=desync)
    inf.init()
    n = 0

    def compare():
        s_z = bounded_state(z)
        pp = post_process(s_z, inf)
        equal = pp.buckets == s_z
        return OracleVerdict(seed if isinstance(seed, int) else -1, n, equal, pp.errors,
                             [] if equal else state_diff(s_z, pp.buckets),
                             len(s_z.get(0, ())), pp.stash, len(pp.underfull))

    for addr in workload:
        z.read(int(addr))
        inf.access(int(addr))
        n += 1
        if check_every and n % check_every == 0:
            v = compare()
            if not v.ok:
                return v, z, inf
    return compare(), z, inf


# -- subtree usage ----------------------------------------------------

def _validate_subtree(sub, L: int) -> frozenset:
    sub = frozenset(int(x) for x in sub)
    if 1 not in sub:
        raise ValueError("subtree must contain the root")
    for v in sub:
        if not 1 <= v < (1 << (L + 1)):
            raise ValueError(f"bucket {v} is outside the tree")
        if v != 1 and v // 2 not in sub:
            raise ValueError(f"bucket {v} is disconnected from the root")
    return sub


def subtree_usage(inf: InfiniteOram, subtree) -> tuple[int, int]:
    """(X, C): blocks the unbounded state keeps in ``subtree`` and the
    bounded capacity of the same buckets."""
    sub = _validate_subtree(subtree, inf.L)
    X = sum(len(inf.buckets[v]) for v in sub)
    C = sum(inf.capacity(v) for v in sub)
    return X, C


def max_excess(inf: InfiniteOram) -> int:
    """max over root-containing subtrees T of X(T) - C(T).

    Bottom-up: the best subtree rooted at v takes v and every child
    subtree whose best value is positive.
    """
    best = [0] * inf.n_heap
    for v in range(inf.n_heap - 1, 0, -1):
        val = len(inf.buckets[v]) - inf.capacity(v)
        if 2 * v < inf.n_heap:
            val += max(0, best[2 * v]) + max(0, best[2 * v + 1])
        best[v] = val
    return best[1]


def enumerate_subtrees(L: int, root: int = 1):
    """Every connected subtree containing ``root`` (exponential; small L only)."""
    if root >= (1 << L):
        yield frozenset([root])
        return
    left = [frozenset()] + list(enumerate_subtrees(L, 2 * root))
    right = [frozenset()] + list(enumerate_subtrees(L, 2 * root + 1))
    for a, b in itertools.product(left, right):
        yield frozenset([root]) | a | b


def max_excess_brute(inf: InfiniteOram) -> int:
    if inf.L > 4:
        raise ValueError("exhaustive enumeration is limited to L <= 4")
    return max(x - c for x, c in (subtree_usage(inf, t) for t in enumerate_subtrees(inf.L)))


def internal_load(inf: InfiniteOram) -> float:
    """X(T)/n(T) for T the full internal tree."""
    n = (1 << inf.L) - 1
    return sum(len(inf.buckets[v]) for v in range(1, 1 << inf.L)) / n
