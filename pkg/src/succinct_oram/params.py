"""Tree shape parameters for the three tree ORAM constructions.

All address arithmetic is exact integer math. The only floating point
step is the square root in :func:`derive_params_t1`; the resulting leaf
capacity may differ by one from an exact real computation, which only
changes headroom, never correctness.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, replace


class Construction(str, enum.Enum):
    PATH = "path"
    T1 = "t1"
    T2 = "t2"

    @classmethod
    def parse(cls, value) -> "Construction":
        if isinstance(value, cls):
            return value
        aliases = {
            "path": cls.PATH, "pathoram": cls.PATH, "path_oram": cls.PATH,
            "t1": cls.T1, "succinctone": cls.T1, "succinct1": cls.T1,
            "t2": cls.T2, "succincttwo": cls.T2, "succinct2": cls.T2,
        }
        try:
            return aliases[str(value).lower().replace("-", "")]
        except KeyError:
            raise ValueError(f"unknown construction {value!r}") from None


# Default bucket sizes: Z=3 makes the one-choice tail bound positive,
# Z=4 the two-choice one, and Z=5 is the Path ORAM rigorous setting.
DEFAULT_Z = {Construction.T1: 3, Construction.T2: 4, Construction.PATH: 5}


MAX_L = 40


class ParamError(ValueError):
    """Raised for tree parameters that violate a structural precondition."""


def ceil_lg(x: int) -> int:
    """Smallest k with 2**k >= x (x >= 1)."""
    if x < 1:
        raise ValueError("ceil_lg needs x >= 1")
    return (x - 1).bit_length()


def ceil_lg_ratio(num: int, den: int) -> int:
    """Smallest k >= 0 with 2**k * den >= num, i.e. ceil(lg(num/den))."""
    k = 0
    while (den << k) < num:
        k += 1
    return k


@dataclass(frozen=True)
class TreeParams:
    n_bits: int
    B: int
    N: int
    L: int
    M: int
    Z: int
    addr_width: int
    label_width: int
    construction: Construction

    def __post_init__(self):
        validate(self)

    @classmethod
    def manual(cls, N: int, B: int, Z: int, L: int, M: int | None = None,
               construction="t1") -> "TreeParams":
        """Build parameters from explicit Z, L, M (e.g. a Table-2 row)."""
        c = Construction.parse(construction)
        if c is Construction.PATH:
            M = Z if M is None else M
        if M is None:
            raise ParamError("M is required for the succinct constructions")
        return cls(n_bits=N * B, B=B, N=N, L=L, M=M, Z=Z,
                   addr_width=ceil_lg(N), label_width=L, construction=c)

    @property
    def leaves(self) -> int:
        return 1 << self.L

    @property
    def meta_width(self) -> int:
        return 1 + self.addr_width + self.label_width

    @property
    def path_blocks(self) -> int:
        """Data blocks on one root-to-leaf path: Z*L + M."""
        return self.Z * self.L + self.M

    @property
    def n_slots(self) -> int:
        """Data-tree block count: Z*(2^L - 1) internal plus M*2^L leaf."""
        return self.Z * (self.leaves - 1) + self.M * self.leaves

    @property
    def block_bytes(self) -> int:
        return self.B // 8

    def with_(self, **changes) -> "TreeParams":
        return replace(self, **changes)


def validate(p: TreeParams) -> None:
    if p.B <= 0 or p.B % 8:
        raise ParamError(f"B must be a positive multiple of 8, got {p.B}")
    if p.N < 2:
        raise ParamError(f"N must be >= 2, got {p.N}")
    if p.n_bits != p.N * p.B:
        raise ParamError("n_bits must equal N*B")
    if p.B < 3 * ceil_lg(p.n_bits):
        raise ParamError(
            f"B={p.B} is below 3*ceil(lg n)={3 * ceil_lg(p.n_bits)}")
    if p.L < 0 or p.Z < 1 or p.M < 1:
        raise ParamError("need L >= 0, Z >= 1, M >= 1")
    if p.L > MAX_L:
        raise ParamError(f"L={p.L} exceeds the supported maximum {MAX_L}")
    if p.addr_width != ceil_lg(p.N) or p.label_width != p.L:
        raise ParamError("addr_width/label_width inconsistent with N/L")
    if p.construction is Construction.PATH and p.M != p.Z:
        raise ParamError("Path ORAM buckets are uniform: M must equal Z")
    # capacity check: M * 2^L >= N, i.e. M >= N / 2^L (exact)
    if p.M * p.leaves + p.Z * (p.leaves - 1) < p.N:
        raise ParamError("tree cannot hold N blocks")
    if p.construction is not Construction.PATH and p.M * p.leaves < p.N:
        # the aggressive two-choice reference row runs leaves below the mean
        # load on purpose; allow it but make it loud.
        warnings.warn(
            f"leaf capacity M={p.M} is below the mean load N/2^L="
            f"{p.N / p.leaves:.2f}; internal buckets must absorb the rest",
            stacklevel=3)


def _tree_height(N: int, f_val: float) -> int:
    if f_val < 1:
        raise ParamError("f_val must be >= 1")
    if N / f_val < 2:
        raise ParamError("N/f_val must be >= 2")
    if float(f_val).is_integer():
        L = ceil_lg_ratio(N, int(f_val))
    else:
        L = math.ceil(math.log2(N / f_val))
    if L == 0:
        raise ParamError("degenerate single-leaf tree (L = 0)")
    if (1 << L) > N:
        raise ParamError(f"2^L = {1 << L} exceeds N = {N}")
    return L


def derive_params_t1(N: int, f_val: float, g_val: float, B: int = 1024,
                     Z: int | None = None) -> TreeParams:
    """L = ceil(lg(N/f)), M = ceil(N/2^L + g*sqrt(N*L/2^L)); Z defaults to 3."""
    if g_val < 0:
        raise ParamError("g_val must be non-negative")
    L = _tree_height(N, f_val)
    mean = N / (1 << L)
    M = math.ceil(mean + g_val * math.sqrt(N * L / (1 << L)))
    return TreeParams.manual(N, B, Z or DEFAULT_Z[Construction.T1], L, M, "t1")


def derive_params_t2(N: int, f_val: float, eps: float, B: int = 1024,
                     Z: int | None = None) -> TreeParams:
    """L = ceil(lg(N/f)), M = ceil(N/2^L + (1+eps)*lg L); Z defaults to 4."""
    if eps < 0:
        raise ParamError("eps must be non-negative")
    if eps == 0:
        warnings.warn("eps = 0: the overflow bound needs eps > 0", stacklevel=2)
    if N < 4 or N / f_val < 4:
        raise ParamError("two-choice tree needs N >= 4 and N/f_val >= 4")
    L = _tree_height(N, f_val)
    M = math.ceil(N / (1 << L) + (1 + eps) * math.log2(L))
    return TreeParams.manual(N, B, Z or DEFAULT_Z[Construction.T2], L, M, "t2")


def path_oram_params(N: int, B: int = 1024, Z: int = 5,
                     L: int | None = None) -> TreeParams:
    """Uniform-bucket tree; defaults to 2^ceil(lg N) leaves."""
    if L is None:
        L = max(1, ceil_lg(N))
    return TreeParams.manual(N, B, Z, L, Z, "path")


def bandwidth_blocks(p: TreeParams) -> int:
    """Data-block transfers per logical access (recursion/metadata excluded)."""
    if p.construction is Construction.PATH:
        return 2 * p.Z * (p.L + 1)
    if p.construction is Construction.T1:
        return 3 * p.path_blocks
    return 4 * p.path_blocks
