import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from succinct_oram.analysis.bins import (one_choice_threshold, run_bins,
                                         two_choice_gap_threshold)
from succinct_oram.analysis.infinite import (InfiniteOram, enumerate_subtrees, internal_load,
                                             is_heap_ancestor, max_excess, max_excess_brute,
                                             post_process, run_oracle_pair, subtree_usage)
from succinct_oram.analysis.security import security_test, two_sample_p
from succinct_oram.params import derive_params_t1, derive_params_t2

from conftest import manual

MODERATE_T1 = manual(1024, 256, 3, 5, 40, "t1")
MODERATE_T2 = manual(1024, 256, 4, 6, 20, "t2")
DERIVED_T1 = derive_params_t1(1024, 32, 4, B=256)
DERIVED_T2 = derive_params_t2(1024, 16, 1, B=256)


# -- balls into bins ---------------------------------------------------

@pytest.mark.parametrize("choices", [1, 2])
def test_bins_conserve_balls(choices, backend):
    e = run_bins(257, 5000, choices, seed=1, backend=backend)
    assert e.loads.sum() == 5000 and len(e.loads) == 257


def test_single_bin_has_zero_gap():
    assert run_bins(1, 100, 2).gap == 0


def test_two_choices_beat_one_on_paired_seeds():
    bins, balls = 1 << 12, 1 << 16
    wins = sum(run_bins(bins, balls, 2, s).gap <= run_bins(bins, balls, 1, s).gap
               for s in range(100))
    assert wins >= 95


def test_bins_thresholds():
    e1 = run_bins(1 << 10, 1 << 15, 1, seed=0)
    assert e1.max_load <= one_choice_threshold(1 << 10, 1 << 15, 4)
    e2 = run_bins(1 << 10, 1 << 15, 2, seed=0)
    assert e2.gap <= two_choice_gap_threshold(1 << 10)
    assert two_choice_gap_threshold(1 << 16) == pytest.approx(4 + 5)


def test_bins_validation():
    with pytest.raises(ValueError):
        run_bins(0, 10)
    with pytest.raises(ValueError):
        run_bins(10, 10, 3)


# -- unbounded reference and post-processing ---------------------------

def test_heap_ancestry():
    assert is_heap_ancestor(1, 5) and is_heap_ancestor(2, 5) and is_heap_ancestor(0, 1)
    assert not is_heap_ancestor(3, 5) and not is_heap_ancestor(5, 5) and not is_heap_ancestor(0, 0)


@pytest.mark.parametrize("p", [DERIVED_T1, DERIVED_T2], ids=["t1", "t2"])
def test_post_processed_unbounded_equals_bounded(p, backend):
    n = 3000 if backend == "cython" else 500
    rng = np.random.default_rng(0)
    for seed in range(3):
        wl = rng.integers(0, p.N, n)
        v, _, _ = run_oracle_pair(p, wl, seed=seed, backend=backend, check_every=n // 5)
        assert v.ok, v.to_dict()


def test_read_holes_trip_the_fullness_check_but_not_equality():
    # ReadPath leaves a dummy where the block was; the bounded tree only
    # refills it on the next eviction through that bucket, so G can see a
    # bucket that pushed blocks up yet holds fewer than Z
    p = MODERATE_T1
    verdicts = [run_oracle_pair(p, np.random.default_rng(s).integers(0, p.N, 3000), seed=s)[0]
                for s in range(6)]
    assert all(v.equal for v in verdicts)
    assert any(v.errors or v.underfull for v in verdicts)


def test_oracle_negative_control():
    wl = np.random.default_rng(1).integers(0, 1024, 500)
    v, _, _ = run_oracle_pair(MODERATE_T1, wl, seed=0, desync=1)
    assert not v.ok


def test_oracle_empty_workload():
    v, _, _ = run_oracle_pair(MODERATE_T1, [], seed=0)
    assert v.ok and v.accesses == 0


def test_post_process_reports_missing_ancestor():
    inf = InfiniteOram(manual(16, 64, 2, 2, 8, "t1"), seed=0)
    inf.init()
    addr = next(iter(inf.buckets[4]))
    # claim the block lives in a bucket that is not above leaf 4
    s_z = {3: frozenset([addr])}
    pp = post_process(s_z, inf)
    assert any(f"block {addr}" in e for e in pp.errors)


def test_set_equality_survives_tight_configs():
    # with Z and M near their floors G can raise its fullness error, but
    # the post-processed state still coincides with the bounded one
    for p in (manual(1024, 256, 2, 6, 17, "t1"), manual(1024, 256, 1, 6, 16, "t2")):
        for seed in range(4):
            wl = np.random.default_rng(seed).integers(0, p.N, 800)
            v, _, _ = run_oracle_pair(p, wl, seed=seed)
            assert v.equal, v.diff


@pytest.mark.parametrize("p", [DERIVED_T1, DERIVED_T2], ids=["t1", "t2"])
def test_stash_equals_max_subtree_excess(p):
    # stash after post-processing is the largest excess over root-containing subtrees
    for seed in range(6):
        wl = list(range(p.N)) * 2 if seed % 2 else np.random.default_rng(seed).integers(0, p.N, 2000)
        v, _, inf = run_oracle_pair(p, wl, seed=seed)
        assert v.ok
        assert v.stash_processed == max(0, max_excess(inf))


def test_overfull_root_gives_positive_excess():
    inf = InfiniteOram(manual(64, 64, 1, 2, 16, "t1"), seed=0)
    inf.init()
    inf.buckets[1] |= {1000, 1001, 1002}
    assert max_excess(inf) >= 2


# -- subtree usage -----------------------------------------------------

def _random_inf(L, Z, M, seed, n):
    N = min(M * (1 << L), 64)
    inf = InfiniteOram(manual(N, 64, Z, L, M, "t1"), seed=seed)
    inf.init()
    rng = np.random.default_rng(seed)
    for a in rng.integers(0, N, n).tolist():
        inf.access(a)
    return inf


def test_subtree_count_small_trees():
    # connected root subtrees of a complete binary tree: a(0)=1, a(h)=(1+a(h-1))^2
    a = 1
    for L in range(4):
        assert sum(1 for _ in enumerate_subtrees(L)) == a
        a = (1 + a) ** 2


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(2, 8), st.integers(0, 10 ** 6),
       st.integers(0, 60))
def test_dp_matches_brute_force(L, Z, M, seed, n):
    inf = _random_inf(L, Z, M, seed, n)
    assert max_excess(inf) == max_excess_brute(inf)


def test_subtree_usage_root_only():
    inf = _random_inf(3, 2, 4, 0, 10)
    X, C = subtree_usage(inf, [1])
    assert C == 2 and X == len(inf.buckets[1])
    X, C = subtree_usage(inf, [1, 2, 3])
    assert C == 6


@pytest.mark.parametrize("bad", [[2], [1, 4], [1, 99], []])
def test_subtree_usage_rejects_malformed(bad):
    inf = _random_inf(3, 2, 4, 0, 0)
    with pytest.raises(ValueError):
        subtree_usage(inf, bad)


def test_internal_load_is_small():
    p = manual(1 << 12, 64, 3, 8, 24, "t1")
    loads = []
    for seed in range(10):
        inf = InfiniteOram(p, seed=seed)
        inf.init()
        for a in np.random.default_rng(seed).integers(0, p.N, 3000).tolist():
            inf.access(a)
        loads.append(internal_load(inf))
    mean, sd = float(np.mean(loads)), float(np.std(loads, ddof=1))
    # expected internal load is at most half a block per bucket
    assert mean <= 0.5 + 3 * sd / math.sqrt(len(loads))


# -- security ----------------------------------------------------------

def test_identical_workloads_pass():
    p = manual(1024, 256, 3, 5, 40, "t1")
    wl = list(range(200))
    rep = security_test(p, wl, wl, samples=10)
    assert rep.passed and rep.p_two_sample == 1.0
    assert rep.trace_length > 0


def test_distinct_workloads_same_view():
    p = manual(1024, 256, 4, 6, 20, "t2")
    rep = security_test(p, list(range(300)), [7] * 300, samples=20)
    assert rep.passed, rep.to_dict()


def test_unequal_lengths_rejected():
    with pytest.raises(ValueError):
        security_test(MODERATE_T1, [1, 2], [1], samples=1)


def test_two_sample_detects_shift():
    a = np.full(16, 100)
    b = a.copy()
    b[0] += 200
    assert two_sample_p(a, b) < 1e-6
