from __future__ import annotations

import math

import numpy as np
import pytest

from _support import node_local_sample, stats_from_counts
from losstomo.classifier import DataClass
from losstomo.errors import CapExceededError, NoInformationError
from losstomo.estimators import solve_perfect
from losstomo.oracle import (
    GridSpec,
    exact_loglik,
    exhaustive_subset_counts,
    grid_mle,
    loglik_profile,
    observation_probability,
    pattern_loglik,
)
from losstomo.simulator import ObservationMatrix
from losstomo.topology import MulticastTree

PAIR = stats_from_counts("ab", {"ab": 25, "a": 25, "b": 15}, n=100)


def test_quadratic_maximum():
    r = grid_mle(lambda a: -(a - 0.3137) ** 2)
    assert abs(r.maximizer - 0.3137) <= r.spacing
    assert not r.at_boundary


def test_monotone_function_reports_boundary():
    r = grid_mle(lambda a: a)
    assert r.maximizer == 1.0 and r.at_boundary


def test_all_minus_infinity():
    with pytest.raises(NoInformationError):
        grid_mle(lambda a: np.full_like(a, -np.inf))


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        GridSpec(resolution=10)
    with pytest.raises(ValueError):
        GridSpec(rounds=0)


def test_perfect_pair_example():
    r = grid_mle(exact_loglik(DataClass.PERFECT, PAIR))
    assert abs(r.maximizer - 0.8) <= max(r.spacing, 1e-8)


def test_observation_probability_is_union_probability():
    # with A fixed, pi(A) is P(at least one child sees the probe)
    pi = observation_probability(PAIR, [("a", "b")])
    A = 0.8
    ba, bb = 0.5 / A, 0.4 / A
    assert pi(A) == pytest.approx(A * (1 - (1 - ba) * (1 - bb)), abs=1e-15)


def test_exact_loglik_below_domain_is_minus_inf():
    loglik = exact_loglik(None, PAIR)
    assert loglik.floor == 0.5
    assert loglik(0.49) == -math.inf
    assert math.isfinite(loglik(0.9))
    with pytest.raises(NoInformationError):
        exact_loglik(None, stats_from_counts("ab", {}, n=10))


def test_node_likelihood_and_full_pattern_likelihood_agree_on_A():
    # profiling the betas out of the full pattern likelihood gives the node likelihood's maximizer
    rng = np.random.default_rng(2)
    stats, _, _ = node_local_sample(rng, n=3000, max_d=3)
    while stats.count(stats.children) == 0:
        stats, _, _ = node_local_sample(rng, n=3000, max_d=3)
    A = solve_perfect(stats).A_hat
    betas = [stats.gamma(c) / A for c in stats.children]
    best = pattern_loglik(stats, A, betas)
    for dA in (-0.01, 0.01):
        b = [stats.gamma(c) / (A + dA) for c in stats.children]
        assert pattern_loglik(stats, A + dA, b) < best


def test_profile_points():
    pts = loglik_profile(lambda a: -a, 0.0, 1.0, 11)
    assert len(pts) == 11 and pts[0] == (0.0, -0.0) and pts[-1][0] == 1.0


def test_exhaustive_counts_cap():
    edges = [("0", "1")] + [("1", str(i)) for i in range(2, 16)]
    tree = MulticastTree(edges)
    obs = ObservationMatrix(tree.receivers, np.ones((2, 14), dtype=bool), (("0", 0, 2),))
    with pytest.raises(CapExceededError):
        exhaustive_subset_counts(obs, tree, "1")
