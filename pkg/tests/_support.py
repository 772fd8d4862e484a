"""Shared generators for the test suite."""

from __future__ import annotations

import numpy as np

from losstomo.simulator import ObservationMatrix
from losstomo.statistics import NodeStats
from losstomo.topology import Link, GeneralTopology, LinkParams, MulticastTree

CHILD_NAMES = "abcdefgh"

# filled by acceptance tests, printed by conftest
ACCEPTANCE_DETAILS: dict[int, str] = {}


def stats_from_counts(children, counts, n, **kw) -> NodeStats:
    """NodeStats from ``{"ab": count}`` style exact reach patterns."""
    return NodeStats.from_pattern_counts("k", tuple(children), {tuple(k): v for k, v in counts.items()}, n=n, **kw)


def stats_from_matrix(values: np.ndarray, node="k") -> NodeStats:
    values = np.asarray(values, dtype=bool)
    n, d = values.shape
    masks = values.astype(np.int64) @ (1 << np.arange(d, dtype=np.int64))
    uniq, counts = np.unique(masks[masks > 0], return_counts=True)
    return NodeStats(node, tuple(CHILD_NAMES[:d]), n, {int(m): int(c) for m, c in zip(uniq, counts)})


def node_local_sample(rng: np.random.Generator, n: int = 1000, max_d: int = 5):
    """Simulate one node: the probe reaches it with rate A, then child j with beta_j.

    The beta scale is drawn so that sparse intersections, and hence every
    data class, occur with useful frequency.
    """
    d = int(rng.integers(2, max_d + 1))
    A = float(rng.uniform(0.5, 1.0))
    scale = float(rng.choice([0.5, 0.15, 0.05, 0.03]))
    betas = np.clip(scale * np.exp(rng.normal(0.0, 0.5, d)), 1e-3, 0.99)
    reach = rng.random(n) < A
    seen = (rng.random((n, d)) < betas) & reach[:, None]
    return stats_from_matrix(seen), A, betas


def random_tree(rng: np.random.Generator, max_fanout: int = 6, max_internal: int = 6) -> MulticastTree:
    """Random tree: a source, one root link, then internal nodes with 1..max_fanout children."""
    edges = [("0", "1")]
    frontier = ["1"]
    next_id = 2
    internal = 0
    while frontier:
        v = frontier.pop(0)
        if internal >= max_internal or (internal > 0 and rng.random() < 0.4):
            continue
        internal += 1
        for _ in range(int(rng.integers(1, max_fanout + 1))):
            c = str(next_id)
            next_id += 1
            edges.append((v, c))
            frontier.append(c)
    if len(edges) == 1:
        edges.append(("1", "2"))
    return MulticastTree(edges)


def random_params(rng, tree, lo=0.5, hi=1.0) -> LinkParams:
    return LinkParams({c: float(rng.uniform(lo, hi)) for c in tree.links})


def binary_tree() -> MulticastTree:
    """Source 0, root link to 1, then two levels of binary branching."""
    return MulticastTree([("0", "1"), ("1", "2"), ("1", "3"), ("2", "4"), ("2", "5"), ("3", "6"), ("3", "7")])


BINARY_RATES = LinkParams({"1": 0.9, "2": 0.8, "3": 0.85, "4": 0.9, "5": 0.75, "6": 0.95, "7": 0.7})


def two_source_topology(rate: float | None = 0.9) -> GeneralTopology:
    """Sources s1, s2 merge at joint node c; d below c is shared."""
    rows = [
        ("l1", "s1", "a"), ("l2", "s2", "b"), ("l3", "a", "c"), ("l4", "b", "c"),
        ("l5", "a", "r1"), ("l6", "b", "r2"), ("l7", "c", "d"), ("l8", "d", "r3"),
        ("l9", "d", "r4"), ("l10", "c", "r5"),
    ]
    return GeneralTopology([Link(i, p, c, rate) for i, p, c in rows], ["s1", "s2"])


def matrix(receivers, rows, source="s") -> ObservationMatrix:
    data = np.array([[ch == "1" for ch in r] for r in rows], dtype=bool).reshape(len(rows), len(receivers))
    return ObservationMatrix(tuple(receivers), data, ((source, 0, len(rows)),))
