"""Product combination, group swapping, and the selection threshold."""

from types import SimpleNamespace

import numpy as np
import pytest

import multiknock as mk
from multiknock import (
    FilterStatistics,
    GroupPartition,
    group_swap,
    osff_product,
    sign_symmetry_test,
    threshold,
)


def site(dataset_id, names, z, zt):
    return SimpleNamespace(dataset_id=dataset_id, group_names=tuple(names),
                           Z=np.asarray(z, float), Ztilde=np.asarray(zt, float))


# ---------------------------------------------------------------- threshold

def test_threshold_worked_example_plain():
    # W = [3, -1, 2, -2, 5], q = 0.5. Candidates 1, 2, 3, 5:
    #   t=1: 2 negatives / 3 positives > 1/2; t=2: 1/3 <= 1/2 -> tau = 2.
    res = threshold(np.array([3.0, -1.0, 2.0, -2.0, 5.0]), q=0.5)
    assert res.tau == 2.0
    assert res.selected == (0, 2, 4)
    assert res.plus is False


def test_threshold_worked_example_plus():
    # Same W with the +1 offset: t=2 gives (1+1)/3 > 1/2; t=3 gives
    # (1+0)/2 <= 1/2 -> tau = 3.
    res = threshold(np.array([3.0, -1.0, 2.0, -2.0, 5.0]), q=0.5, plus=True)
    assert res.tau == 3.0
    assert res.selected == (0, 4)
    assert res.plus is True


def test_threshold_no_feasible_candidate_selects_nothing():
    res = threshold(np.array([-1.0, -2.0, -3.0]), q=0.2)
    assert res.tau == np.inf
    assert res.selected == ()
    res = threshold(np.zeros(4), q=0.2)
    assert res.tau == np.inf
    assert res.selected == ()


def test_threshold_single_positive_entry():
    w = np.array([5.0])
    assert threshold(w, q=0.2).selected == (0,)
    # The +1 offset makes a lone positive unselectable at q < 1/1.
    assert threshold(w, q=0.2, plus=True).selected == ()


def test_threshold_zero_entries_never_selected():
    res = threshold(np.array([0.0, 3.0, -1.0]), q=0.9)
    assert res.tau == 3.0
    assert res.selected == (1,)


def test_threshold_validation():
    with pytest.raises(mk.DataError, match="q must lie"):
        threshold(np.array([1.0]), q=0.0)
    with pytest.raises(mk.DataError, match="q must lie"):
        threshold(np.array([1.0]), q=1.0)
    with pytest.raises(mk.DataError, match="finite"):
        threshold(np.array([np.inf]), q=0.2)
    with pytest.raises(mk.DimensionError):
        threshold(np.ones((2, 2)), q=0.2)


def oracle_threshold(w, q, plus):
    """Literal scan over every positive magnitude, smallest first."""

    offset = 1 if plus else 0
    for t in sorted({abs(v) for v in w if v != 0}):
        neg = sum(1 for v in w if v <= -t)
        pos = sum(1 for v in w if v >= t)
        if (offset + neg) / max(pos, 1) <= q:
            return t, {m for m, v in enumerate(w) if v >= t}
    return np.inf, set()


@pytest.mark.parametrize("q", [0.1, 0.2, 0.33])
def test_threshold_matches_brute_force(q, rng):
    for _ in range(200):
        m = int(rng.integers(1, 31))
        w = rng.standard_normal(m)
        w[rng.random(m) < 0.3] = 0.0
        w[rng.random(m) < 0.2] *= 10.0
        # Inject ties in magnitude across signs.
        if m >= 4:
            w[1] = -w[0]
        plain = threshold(w, q=q)
        plus = threshold(w, q=q, plus=True)
        t0, s0 = oracle_threshold(w, q, False)
        t1, s1 = oracle_threshold(w, q, True)
        assert plain.tau == t0 and set(plain.selected) == s0
        assert plus.tau == t1 and set(plus.selected) == s1
        assert set(plus.selected) <= set(plain.selected)


def test_threshold_accepts_filter_statistics():
    stats = FilterStatistics(W=np.array([3.0, -1.0, 2.0, -2.0, 5.0]),
                             group_names=("a", "b", "c", "d", "e"),
                             site_ids=("s1",))
    res = threshold(stats, q=0.5)
    assert res.selected == (0, 2, 4)
    assert res.selected_names() == ("a", "c", "e")
    assert res.group_names == stats.group_names


def test_filter_statistics_validation():
    with pytest.raises(mk.DataError, match="finite"):
        FilterStatistics(W=np.array([np.nan]), group_names=("a",), site_ids=())
    with pytest.raises(mk.DimensionError, match="name"):
        FilterStatistics(W=np.zeros(2), group_names=("a",), site_ids=())
    stats = FilterStatistics(W=np.zeros(2), group_names=("a", "b"), site_ids=())
    with pytest.raises(ValueError):
        stats.W[0] = 1.0


# ------------------------------------------------------- product combination

def test_product_of_two_sites_matches_manual():
    a = site("s1", ("g0", "g1", "g2"), [3.0, 0.5, 0.0], [1.0, 2.0, 0.0])
    b = site("s2", ("g0", "g1", "g2"), [2.0, 1.0, 4.0], [0.5, 3.0, 4.0])
    combined = osff_product([a, b])
    want = np.array([(3.0 - 1.0) * (2.0 - 0.5),
                     (0.5 - 2.0) * (1.0 - 3.0),
                     0.0])
    assert np.array_equal(combined.W, want)
    assert combined.group_names == ("g0", "g1", "g2")
    assert combined.site_ids == ("s1", "s2")
    assert combined.combination == "product"


def test_product_aligns_groups_by_name():
    a = site("s1", ("g0", "g1"), [3.0, 1.0], [1.0, 0.0])
    b = site("s2", ("g1", "g0"), [5.0, 2.0], [1.0, 1.0])  # permuted names
    combined = osff_product([a, b])
    # g0: (3-1)*(2-1) = 2; g1: (1-0)*(5-1) = 4.
    assert np.array_equal(combined.W, np.array([2.0, 4.0]))


def test_product_invariant_to_input_order():
    a = site("s1", ("g0", "g1"), [3.0, 1.0], [1.0, 0.0])
    b = site("s2", ("g1", "g0"), [5.0, 2.0], [1.0, 1.0])
    first = osff_product([a, b])
    second = osff_product([b, a], name_order=("g0", "g1"))
    assert np.array_equal(first.W, second.W)
    assert first.site_ids == second.site_ids == ("s1", "s2")


def test_product_name_order_controls_output_layout():
    a = site("s1", ("g0", "g1"), [3.0, 1.0], [1.0, 0.0])
    combined = osff_product([a], name_order=("g1", "g0"))
    assert combined.group_names == ("g1", "g0")
    assert np.array_equal(combined.W, np.array([1.0, 2.0]))


def test_product_sign_flip_is_exact():
    rng = np.random.default_rng(7)
    names = tuple(f"g{m}" for m in range(6))
    sites = [
        site(f"s{k}", names, rng.random(6) * 3, rng.random(6) * 3)
        for k in range(3)
    ]
    base = osff_product(sites)
    flipped_site = site(
        "s1", names,
        np.where(np.arange(6) == 2, sites[1].Ztilde, sites[1].Z),
        np.where(np.arange(6) == 2, sites[1].Z, sites[1].Ztilde),
    )
    flipped = osff_product([sites[0], flipped_site, sites[2]])
    assert flipped.W[2] == -base.W[2]
    mask = np.arange(6) != 2
    assert np.array_equal(flipped.W[mask], base.W[mask])


def test_product_alignment_errors():
    a = site("s1", ("g0", "g1"), [1.0, 2.0], [0.0, 0.0])
    b = site("s2", ("g0", "gX"), [1.0, 2.0], [0.0, 0.0])
    with pytest.raises(mk.AlignmentError, match=r"\['g1', 'gX'\]"):
        osff_product([a, b])
    with pytest.raises(mk.AlignmentError, match="unique"):
        osff_product([a], name_order=("g0", "g0"))
    with pytest.raises(mk.DataError, match="at least one"):
        osff_product([])


# ----------------------------------------------------------------- swapping

def test_group_swap_exchanges_only_requested_groups(rng):
    part = GroupPartition(groups=((0, 1), (2,)), p=4, names=("a", "b"))
    arr = rng.standard_normal((5, 8))
    out = group_swap(arr, [0], part)
    assert np.array_equal(out[:, [0, 1]], arr[:, [4, 5]])
    assert np.array_equal(out[:, [4, 5]], arr[:, [0, 1]])
    untouched = [2, 3, 6, 7]
    assert np.array_equal(out[:, untouched], arr[:, untouched])


def test_group_swap_is_an_involution(rng):
    part = GroupPartition.contiguous(3, 2)
    arr = rng.standard_normal(12)
    out = group_swap(group_swap(arr, [0, 2], part), [0, 2], part)
    assert np.array_equal(out, arr)


def test_group_swap_validation(rng):
    part = GroupPartition.contiguous(2, 2)
    with pytest.raises(mk.DimensionError, match="2p"):
        group_swap(np.zeros(6), [0], part)
    with pytest.raises(mk.DataError, match="out of range"):
        group_swap(np.zeros(8), [5], part)


# ------------------------------------------------------------- sign symmetry

def test_sign_symmetry_balanced_signs_cover_half():
    def gen(rep):
        sign = 1.0 if rep % 2 == 0 else -1.0
        return np.array([sign, -sign]), np.array([True, True])

    summary = sign_symmetry_test(40, gen)
    assert summary.replications == 40
    assert np.all(summary.nonzero == 40)
    assert np.allclose(summary.fraction_positive, 0.5)
    assert np.all(summary.covers_half)
    assert summary.worst_deviation() == 0.0


def test_sign_symmetry_detects_biased_group():
    def gen(rep):
        return np.array([1.0, 1.0 if rep % 2 else -1.0]), np.array([True, True])

    summary = sign_symmetry_test(60, gen)
    assert summary.fraction_positive[0] == 1.0
    assert not summary.covers_half[0]
    assert summary.covers_half[1]


def test_sign_symmetry_ignores_masked_and_zero_entries():
    def gen(rep):
        # Group 0 carries signal (masked out); group 2 is always zero.
        return np.array([4.0, 1.0 if rep % 2 else -1.0, 0.0]), \
            np.array([False, True, True])

    summary = sign_symmetry_test(30, gen)
    assert summary.nonzero[0] == 0 and summary.nonzero[2] == 0
    assert np.isnan(summary.fraction_positive[0])
    assert np.isnan(summary.fraction_positive[2])
    assert summary.covers_half[0] and summary.covers_half[2]  # vacuous
    assert summary.nonzero[1] == 30


def test_sign_symmetry_requires_positive_replications():
    def gen(rep):  # pragma: no cover - never called
        return np.zeros(1), np.ones(1, dtype=bool)

    with pytest.raises(mk.DataError, match="positive"):
        sign_symmetry_test(0, gen)
