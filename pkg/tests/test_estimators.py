from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import pytest

from _support import matrix, node_local_sample, stats_from_counts
from losstomo.classifier import DataClass, classify_node
from losstomo.equations import ComponentTerm, LikelihoodEquation, search_bound
from losstomo.errors import CompleteExclusionError, InvalidGroupingError, NoInformationError
from losstomo.estimators import (
    Method,
    estimate_node,
    estimate_tree,
    solve_chained,
    solve_chained_partition,
    solve_grouped,
    solve_partition_only,
    solve_perfect,
    strip_singletons,
)
from losstomo.oracle import GridSpec, exact_loglik, grid_mle, pooled_partition_loglik
from losstomo.simulator import simulate_tree
from losstomo.statistics import NodeStats
from losstomo.topology import LinkParams, MulticastTree

PAIR = stats_from_counts("ab", {"ab": 25, "a": 25, "b": 15}, n=100)
CHAIN = stats_from_counts("abc", {"ab": 80, "bc": 60, "a": 220, "b": 260, "c": 190}, n=1000)
TWO_PAIRS = stats_from_counts(
    "abcd", {"ab": 100, "a": 200, "b": 150, "cd": 80, "c": 120, "d": 160}, n=1000
)


def expected_counts(A, betas, n) -> NodeStats:
    """Noise-free stats: every pattern count equals its model expectation exactly."""
    d = len(betas)
    patterns = {}
    for mask in range(1, 1 << d):
        p = Fraction(A)
        for j, b in enumerate(betas):
            p *= Fraction(b) if mask >> j & 1 else 1 - Fraction(b)
        count = p * n
        assert count.denominator == 1
        patterns[mask] = int(count)
    return NodeStats("k", tuple("abcdefgh"[:d]), n, patterns)


def test_two_descendant_closed_form():
    est = solve_perfect(PAIR)
    assert est.A_hat == pytest.approx(0.8, abs=1e-12)
    assert est.method is Method.PERFECT_POLY and est.residual <= 1e-10


def test_lossless_fixed_point():
    stats = stats_from_counts("abc", {"abc": 50}, n=50)
    assert solve_perfect(stats).A_hat == 1.0
    assert estimate_node(stats).A_hat == 1.0


def test_grouped_example_and_identity():
    est = solve_grouped(PAIR, (("a",), ("b",)))
    assert est.A_hat == pytest.approx(0.8, abs=1e-12)
    assert est.method is Method.GROUPED


def test_invalid_groupings():
    with pytest.raises(InvalidGroupingError):
        solve_grouped(PAIR, (("a", "b"), ()))
    with pytest.raises(InvalidGroupingError):
        solve_grouped(PAIR, (("a",), ("a", "b")))
    with pytest.raises(InvalidGroupingError):
        solve_grouped(TWO_PAIRS, (("a", "b"), ("c", "d")))


def test_grouped_form_is_exact_on_noise_free_data():
    stats = expected_counts(Fraction(4, 5), [Fraction(1, 2), Fraction(1, 2), Fraction(1, 4), Fraction(3, 4)], 3200)
    assert solve_perfect(stats).A_hat == pytest.approx(0.8, abs=1e-12)
    children = stats.children
    for size in range(1, len(children)):
        for g1 in itertools.combinations(children, size):
            g2 = tuple(c for c in children if c not in g1)
            assert solve_grouped(stats, (g1, g2)).A_hat == pytest.approx(0.8, abs=1e-12)


def test_chained_agrees_with_perfect_without_missing_terms():
    rng = np.random.default_rng(5)
    for _ in range(30):
        stats, _, _ = node_local_sample(rng, n=2000)
        if classify_node(stats).data_class is not DataClass.PERFECT:
            continue
        assert solve_chained(stats, ()).A_hat == pytest.approx(solve_perfect(stats).A_hat, abs=1e-12)


def test_three_chain_matches_oracle():
    cls = classify_node(CHAIN)
    assert cls.data_class is DataClass.CHAINED_ONLY
    est = solve_chained(CHAIN, cls.missing)
    # these counts put the maximizer above one
    grid = grid_mle(exact_loglik(cls.data_class, CHAIN), GridSpec(), lo=CHAIN.gamma_hat, hi=3.0)
    assert est.A_hat == pytest.approx(grid.maximizer, abs=1e-4)
    assert "saturated" in est.flags
    # hand-written form of the same equation; removed terms enter as -(-u)^|p| prod g
    n = 1000
    a, b, c = 300 / n, 400 / n, 250 / n
    u = 1 / est.A_hat
    lhs = 1 - CHAIN.gamma_hat * u
    rhs = (1 - a * u) * (1 - b * u) * (1 - c * u) - u**2 * a * c + u**3 * a * b * c
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_grouped_chain_relation():
    # k1 = {b}, k2 = {a, c}: (n_ab + n_bc) / n = (n_a + n_c) n_b / (n^2 A)
    est = solve_grouped(CHAIN, (("b",), ("a", "c")))
    assert est.A_hat == pytest.approx((300 + 250) * 400 / (1000 * (80 + 60)), abs=1e-12)


def test_partition_single_component():
    stats = stats_from_counts("abc", {"ab": 250, "a": 250, "b": 150, "c": 50}, n=1000)
    cls = classify_node(stats)
    assert cls.data_class is DataClass.PARTITION_ONLY
    reduced, parts, stripped = strip_singletons(stats, cls.partition)
    assert stripped == ("c",)
    est = solve_partition_only(reduced, parts)
    assert est.A_hat == pytest.approx(0.8, abs=1e-12)
    assert est.A_hat == pytest.approx(solve_grouped(reduced).A_hat, abs=1e-12)
    assert est.diagnostics["exact_root"] == pytest.approx(0.8, abs=1e-10)


def test_partition_two_pairs():
    cls = classify_node(TWO_PAIRS)
    est = solve_partition_only(TWO_PAIRS, cls.partition)
    assert est.A_hat == pytest.approx(123000 / 180000, abs=1e-12)
    assert "below-observed-rate" in est.flags  # gamma_k is 0.81 here
    d = est.diagnostics
    assert d["closed_form"] == est.A_hat
    assert d["exact_residual"] <= 1e-10
    grid = grid_mle(pooled_partition_loglik(TWO_PAIRS, cls.partition), GridSpec(), lo=0.5, hi=1.0)
    assert d["pooled_partition_mle"] == pytest.approx(grid.maximizer, abs=1e-6)


def test_partition_only_rejects_chained_components():
    stats = stats_from_counts("abcde", {"ab": 2, "bc": 2, "de": 1, "a": 3}, n=20)
    cls = classify_node(stats)
    with pytest.raises(ValueError):
        solve_partition_only(stats, cls.partition)


def test_chained_partition_reduces_to_other_solvers():
    # every component perfect: the same equation as the exact partition root
    cls = classify_node(TWO_PAIRS)
    exact = solve_partition_only(TWO_PAIRS, cls.partition).diagnostics["exact_root"]
    assert solve_chained_partition(TWO_PAIRS, cls.partition, cls.missing).A_hat == pytest.approx(exact, abs=1e-12)
    # one chained component only
    cls = classify_node(CHAIN)
    both = solve_chained_partition(CHAIN, cls.partition, cls.missing).A_hat
    assert both == pytest.approx(solve_chained(CHAIN, cls.missing).A_hat, abs=1e-12)


def test_singleton_stripping_follows_pair_relation():
    stats = stats_from_counts("abc", {"ab": 120, "a": 280, "b": 180, "c": 90}, n=1000)
    est = estimate_node(stats)
    assert est.stripped_singletons == ("c",)
    assert est.A_hat == pytest.approx(400 * 300 / (1000 * 120), abs=1e-12)


def test_dispatch():
    assert estimate_node(PAIR).method is Method.PERFECT_POLY
    wide = expected_counts(Fraction(4, 5), [Fraction(1, 2)] * 5, 4000)
    assert estimate_node(wide, grouping_threshold=5).method is Method.GROUPED
    assert estimate_node(wide).method is Method.PERFECT_POLY
    assert estimate_node(CHAIN).method is Method.CHAINED_POLY
    assert estimate_node(TWO_PAIRS).method is Method.PARTITION_POOLED
    mixed = stats_from_counts("abcde", {"ab": 20, "bc": 20, "de": 10, "a": 30, "e": 5}, n=200)
    est = estimate_node(mixed)
    assert est.method is Method.CHAINED_PARTITION_POLY
    assert est.data_class is DataClass.CHAINED_PARTITION


def test_complete_exclusion_and_no_information():
    excl = stats_from_counts("abc", {"a": 5, "b": 3, "c": 1}, n=20)
    with pytest.raises(CompleteExclusionError):
        estimate_node(excl)
    with pytest.raises(CompleteExclusionError):
        solve_perfect(excl)
    with pytest.raises(NoInformationError):
        estimate_node(stats_from_counts("ab", {}, n=20))


def _terms(stats, cls):
    out = []
    for comp in cls.partition.components:
        pos = {c: i for i, c in enumerate(comp)}
        removed = tuple(tuple(sorted(pos[m] for m in s)) for s in cls.missing.for_component(comp))
        out.append(ComponentTerm(stats.union_count(comp) / stats.n, tuple(stats.n_j(c) / stats.n for c in comp), removed))
    return out


def test_estimates_respect_observed_rate_and_are_unique_roots():
    rng = np.random.default_rng(17)
    seen = set()
    for _ in range(400):
        stats, _, _ = node_local_sample(rng, n=500)
        if stats.nk1 == 0:
            continue
        cls = classify_node(stats)
        if cls.data_class is DataClass.COMPLETE_EXCLUSION:
            continue
        est = estimate_node(stats)
        seen.add(cls.data_class)
        if cls.data_class in (DataClass.PERFECT, DataClass.CHAINED_ONLY):
            assert est.A_hat >= stats.gamma_hat * (1 - 1e-12)
        root = est.diagnostics.get("exact_root", est.A_hat)
        eq = LikelihoodEquation(_terms(stats, cls))
        upper = search_bound(eq.terms)
        grid = np.linspace(upper * 1e-4, upper, 5001)
        signs = np.sign(eq(grid))
        signs = signs[signs != 0]
        assert np.count_nonzero(np.diff(signs)) <= 1
        assert abs(eq(1 / root)) <= 1e-10
    assert len(seen) == 4


def test_tree_estimates_two_leaves():
    tree = MulticastTree([("0", "1"), ("1", "2"), ("1", "3")])
    obs = simulate_tree(tree, LinkParams({"1": 0.9, "2": 0.9, "3": 0.9}), 100_000, seed=12)
    result = estimate_tree(obs, tree)
    assert not result.failures
    for link in ("1", "2", "3"):
        assert abs(result.links[link].pass_rate - 0.9) < 0.02


def test_lossless_tree():
    tree = MulticastTree([("0", "1"), ("1", "2"), ("1", "3"), ("3", "4"), ("3", "5")])
    obs = simulate_tree(tree, LinkParams({c: 1.0 for c in tree.links}), 200, seed=1)
    result = estimate_tree(obs, tree)
    assert all(l.pass_rate == 1.0 for l in result.links.values())


def test_failed_node_does_not_stop_the_others():
    tree = MulticastTree([("0", "1"), ("1", "2"), ("1", "3"), ("2", "4"), ("2", "5")])
    # receivers 4 and 5 never see the same probe; 3 overlaps both
    rows = ["110", "101", "100", "010", "001", "000", "110", "101"]
    obs = matrix(["3", "4", "5"], rows, source="0")
    result = estimate_tree(obs, tree)
    assert result.failed_nodes == ["2"]
    assert isinstance(result.failures["2"], CompleteExclusionError)
    assert "1" in result.nodes
    assert "unavailable" in result.links["4"].flags
    assert "unavailable" in result.links["2"].flags
    assert result.links["3"].pass_rate > 0
