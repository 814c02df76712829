import math
import warnings

import pytest
from hypothesis import given, strategies as st

from succinct_oram.params import (Construction, ParamError, TreeParams, bandwidth_blocks,
                                  ceil_lg, ceil_lg_ratio, derive_params_t1, derive_params_t2,
                                  path_oram_params)


def test_ceil_lg_small_values():
    assert [ceil_lg(x) for x in (1, 2, 3, 4, 5, 8, 9)] == [0, 1, 2, 2, 3, 3, 4]


@given(st.integers(1, 1 << 40), st.integers(1, 1 << 20))
def test_ceil_lg_ratio_matches_real_log(num, den):
    # oracle: smallest k with den * 2^k >= num
    k = 0
    while den << k < num:
        k += 1
    assert ceil_lg_ratio(num, den) == k


def test_derive_t1_worked_example():
    p = derive_params_t1(1 << 20, 64, 2)
    assert (p.L, p.Z) == (14, 3)
    # 64 + 2*sqrt(2^20*14/2^14) = 64 + 59.87
    assert p.M == math.ceil(64 + 2 * math.sqrt(64 * 14)) == 124


def test_derive_t2_worked_example():
    p = derive_params_t2(1 << 20, 16, 1)
    assert (p.L, p.M, p.Z) == (16, 24, 4)


def test_derive_t1_rejects_single_leaf():
    with pytest.raises(ParamError):
        derive_params_t1(16, 16, 0)


def test_derive_t2_eps_zero_warns():
    with pytest.warns(UserWarning):
        p = derive_params_t2(1 << 12, 16, 0)
    assert p.M == math.ceil(16 + math.log2(8))


def test_derive_t2_needs_four_leaves():
    with pytest.raises(ParamError):
        derive_params_t2(1 << 10, 512, 1)


def test_manual_reference_rows_accepted():
    TreeParams.manual(1 << 20, 1024, 3, 15, 112, "t1")
    with pytest.warns(UserWarning):
        TreeParams.manual(1 << 20, 1024, 3, 16, 14, "t2")


def test_block_size_precondition():
    # B >= 3 ceil(lg n): n = 2^20 * 32 bits needs B >= 75
    with pytest.raises(ParamError):
        TreeParams.manual(1 << 20, 32, 3, 15, 112, "t1")


def test_path_params_uniform():
    p = path_oram_params(1000, 1024, 4)
    assert p.L == 10 and p.M == p.Z == 4
    with pytest.raises(ParamError):
        TreeParams.manual(1024, 1024, 4, 10, 5, "path")


def test_capacity_must_hold_N():
    with pytest.raises(ParamError):
        TreeParams.manual(1024, 1024, 1, 2, 1, "t1")


def test_bandwidth_formulas():
    assert bandwidth_blocks(path_oram_params(1 << 20, Z=5, L=20)) == 210
    assert bandwidth_blocks(path_oram_params(1 << 20, Z=4, L=19)) == 160
    assert bandwidth_blocks(TreeParams.manual(1 << 20, 1024, 3, 15, 112, "t1")) == 471
    assert bandwidth_blocks(TreeParams.manual(1 << 20, 1024, 4, 15, 36, "t1")) == 288
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert bandwidth_blocks(TreeParams.manual(1 << 20, 1024, 3, 16, 14, "t2")) == 248


def test_construction_aliases():
    assert Construction.parse("SuccinctOne") is Construction.T1
    assert Construction.parse("succinct-two") is Construction.T2
    assert Construction.parse("PathOram") is Construction.PATH
    with pytest.raises(ValueError):
        Construction.parse("ring")


@given(st.integers(4, 1 << 24), st.sampled_from([1, 2, 4, 16, 64]), st.floats(0, 8))
def test_derived_t1_shape(N, f, g):
    if N / f < 2:
        return
    try:
        p = derive_params_t1(N, f, g, B=4096)
    except ParamError:
        assert N // f < 2 or (1 << ceil_lg_ratio(N, f)) > N or ceil_lg_ratio(N, f) == 0
        return
    assert (1 << p.L) >= N / f > (1 << (p.L - 1))
    assert p.M >= N / p.leaves
