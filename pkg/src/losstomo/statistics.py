"""Sufficient statistics of the observations below one internal node.

For node ``k`` with child subtrees ``d_k`` every probe is reduced to its
reach pattern: the set of children ``j`` such that at least one receiver
below ``j`` saw the probe.  Patterns are stored as bitmasks over the
ordered children together with their multiplicities, which is all that
intersection counts ``I(x)`` and union counts need.
"""

from __future__ import annotations

import itertools
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import CapExceededError, NoInformationError, TopologyError

__all__ = [
    "DEFAULT_MAX_ENUMERATION",
    "MultiSourceNodeStats",
    "NodeStats",
    "ReachIndicators",
    "format_stats",
    "intersection_counts",
    "node_stats",
    "pool_stats",
    "pooled_stats",
    "reach_indicators",
]

DEFAULT_MAX_ENUMERATION = 16


@dataclass(frozen=True, eq=False)
class ReachIndicators:
    """``values[i, j]`` is True iff a receiver below ``children[j]`` saw probe ``i``."""

    node: str
    children: tuple[str, ...]
    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _probe_rows(obs, topology, node, source):
    if source is not None:
        return obs.data[obs.rows_for(source)]
    reaching = topology.sources_of(node)
    slices = [obs.data[start:stop] for s, start, stop in obs.blocks if s in reaching]
    if not slices:
        return np.zeros((0, len(obs.receivers)), dtype=bool)
    return np.vstack(slices) if len(slices) > 1 else slices[0]


def reach_indicators(obs, topology, node: str, source: str | None = None) -> ReachIndicators:
    """Per-probe reach indicators of every child subtree of ``node``.

    With a general topology and no ``source``, probes of every source that
    can reach ``node`` are used.
    """
    children = topology.children(node)
    if not children:
        raise ValueError(f"node {node} is a leaf and has no descendants")
    rows = _probe_rows(obs, topology, node, source)
    index = {r: i for i, r in enumerate(obs.receivers)}
    values = np.zeros((rows.shape[0], len(children)), dtype=bool)
    for j, child in enumerate(children):
        cols = [index[r] for r in sorted(topology.receivers_below(child)) if r in index]
        if cols:
            values[:, j] = rows[:, cols].any(axis=1)
    return ReachIndicators(node, tuple(children), values)


@dataclass(frozen=True, eq=False)
class NodeStats:
    """Intersection statistics over the descendants of one node.

    Attributes
    ----------
    node : str
    children : tuple of str
        ``d_k`` in a fixed order; bit ``j`` of a pattern refers to
        ``children[j]``.
    n : int
        Probes considered, including those no receiver below ``node`` saw.
    patterns : mapping of int to int
        Nonzero reach pattern -> number of probes with exactly that pattern.
    max_enumeration : int
        Largest fan-out for which the full subset table is built.
    """

    node: str
    children: tuple[str, ...]
    n: int
    patterns: Mapping[int, int]
    max_enumeration: int = DEFAULT_MAX_ENUMERATION
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(self.children)})
        if any(m <= 0 or m >= (1 << len(self.children)) for m in self.patterns):
            raise ValueError("pattern masks must be nonzero subsets of the children")
        if sum(self.patterns.values()) > self.n:
            raise ValueError("more observed probes than probes sent")

    @classmethod
    def from_pattern_counts(cls, node, children, counts: Mapping[Iterable[str], int], n: int, **kw):
        """Build from ``{members: count}`` of exact reach patterns.

        >>> s = NodeStats.from_pattern_counts("k", ["a", "b"], {("a", "b"): 1, ("a",): 1, ("b",): 1}, n=4)
        >>> s.count({"a"}), s.count({"a", "b"}), s.nk1
        (2, 1, 3)
        """
        children = tuple(children)
        index = {c: i for i, c in enumerate(children)}
        patterns: dict[int, int] = {}
        for members, count in counts.items():
            mask = 0
            for m in ((members,) if isinstance(members, str) else members):
                mask |= 1 << index[m]
            if count:
                patterns[mask] = patterns.get(mask, 0) + int(count)
        return cls(node, children, int(n), patterns, **kw)

    @property
    def fanout(self) -> int:
        return len(self.children)

    def mask(self, subset: Iterable[str]) -> int:
        m = 0
        for c in subset:
            m |= 1 << self._index[c]
        return m

    def members(self, mask: int) -> tuple[str, ...]:
        return tuple(c for i, c in enumerate(self.children) if mask >> i & 1)

    @cached_property
    def _arrays(self):
        masks = np.fromiter(self.patterns.keys(), dtype=object, count=len(self.patterns))
        counts = np.fromiter(self.patterns.values(), dtype=np.int64, count=len(self.patterns))
        if self.fanout <= 62:
            masks = masks.astype(np.int64)
        return masks, counts

    @cached_property
    def nk1(self) -> int:
        """Probes seen by at least one receiver below the node."""
        return int(sum(self.patterns.values()))

    @cached_property
    def subset_table(self) -> np.ndarray:
        """``table[mask] = I(members(mask))`` for every subset, by superset summation."""
        d = self.fanout
        if d > self.max_enumeration:
            raise CapExceededError(
                f"node {self.node}: fan-out {d} exceeds the enumeration cap {self.max_enumeration}"
            )
        table = np.zeros(1 << d, dtype=np.int64)
        masks, counts = self._arrays
        if len(counts):
            np.add.at(table, masks.astype(np.int64), counts)
        for i in range(d):
            view = table.reshape(-1, 2, 1 << i)
            view[:, 0, :] += view[:, 1, :]
        table[0] = self.nk1
        table.setflags(write=False)
        return table

    def count_mask(self, mask: int) -> int:
        if mask == 0:
            return self.nk1
        if self.fanout <= self.max_enumeration:
            return int(self.subset_table[mask])
        masks, counts = self._arrays
        return int(counts[(masks & mask) == mask].sum())

    def count(self, subset: Iterable[str]) -> int:
        """I(x): probes seen below every member of ``subset``."""
        return self.count_mask(self.mask(subset))

    def union_count_mask(self, mask: int) -> int:
        masks, counts = self._arrays
        return int(counts[(masks & mask) != 0].sum())

    def union_count(self, subset: Iterable[str]) -> int:
        """Probes seen below at least one member of ``subset``."""
        return self.union_count_mask(self.mask(subset))

    def n_j(self, child: str) -> int:
        return self.count((child,))

    @property
    def gamma_hat(self) -> float:
        return self.nk1 / self.n if self.n else 0.0

    def gamma(self, child: str) -> float:
        return self.n_j(child) / self.n

    def gammas(self) -> np.ndarray:
        return np.array([self.n_j(c) / self.n for c in self.children])

    def alpha_hat(self) -> dict[str, float]:
        if self.nk1 == 0:
            raise NoInformationError(f"node {self.node}: no probe observed")
        return {c: self.n_j(c) / self.nk1 for c in self.children}

    def subset_counts(self) -> dict[frozenset, int]:
        """All ``2^d - 1`` nonempty subset counts (subject to the cap)."""
        table = self.subset_table
        return {
            frozenset(self.members(m)): int(table[m]) for m in range(1, 1 << self.fanout)
        }

    def pair_count(self, a: str, b: str) -> int:
        return self.count_mask((1 << self._index[a]) | (1 << self._index[b]))

    def restrict(self, keep: Iterable[str]) -> NodeStats:
        """Statistics of the same probes seen through a subset of children."""
        keep = tuple(c for c in self.children if c in set(keep))
        remap = [(self._index[c], i) for i, c in enumerate(keep)]
        patterns: dict[int, int] = {}
        for mask, count in self.patterns.items():
            new = 0
            for old, i in remap:
                if mask >> old & 1:
                    new |= 1 << i
            if new:
                patterns[new] = patterns.get(new, 0) + count
        return NodeStats(self.node, keep, self.n, patterns, self.max_enumeration)

    def canonical_subsets(self, max_size: int | None = None):
        """Nonempty subsets by size, then by child order."""
        top = self.fanout if max_size is None else min(max_size, self.fanout)
        for size in range(1, top + 1):
            yield from itertools.combinations(self.children, size)


def intersection_counts(
    ind: ReachIndicators,
    max_enumeration: int = DEFAULT_MAX_ENUMERATION,
    grouping_fallback: bool = True,
) -> NodeStats:
    """Reduce reach indicators to :class:`NodeStats`.

    Beyond ``max_enumeration`` children the full subset table is not
    built; counts are then computed on demand from the patterns, unless
    ``grouping_fallback`` is False, in which case the cap is an error.
    """
    values = np.asarray(ind.values, dtype=bool)
    d = values.shape[1]
    if d < 1:
        raise ValueError("a node needs at least one descendant")
    if d > max_enumeration and not grouping_fallback:
        raise CapExceededError(f"node {ind.node}: fan-out {d} exceeds cap {max_enumeration}")
    if d <= 62:
        weights = np.left_shift(np.int64(1), np.arange(d, dtype=np.int64))
        masks = values.astype(np.int64) @ weights
        uniq, counts = np.unique(masks, return_counts=True)
        patterns = {int(m): int(c) for m, c in zip(uniq, counts) if m}
    else:
        patterns = {}
        for row in values:
            m = int.from_bytes(np.packbits(row[::-1]).tobytes(), "big") >> (-d % 8)
            if m:
                patterns[m] = patterns.get(m, 0) + 1
    stats = NodeStats(ind.node, ind.children, values.shape[0], patterns, max_enumeration)
    if d <= max_enumeration:
        stats.subset_table  # noqa: B018 - eager full enumeration within the cap
    return stats


def node_stats(obs, topology, node, source=None, max_enumeration=DEFAULT_MAX_ENUMERATION) -> NodeStats:
    return intersection_counts(reach_indicators(obs, topology, node, source), max_enumeration)


@dataclass(frozen=True, eq=False)
class MultiSourceNodeStats:
    """Per-source (individual) and pooled (global) statistics of one node."""

    node: str
    per_source: Mapping[str, NodeStats]
    pooled: NodeStats

    @property
    def sources(self) -> tuple[str, ...]:
        return tuple(self.per_source)

    def n_i(self, source: str) -> int:
        return self.per_source[source].nk1

    def gamma(self, source: str) -> float:
        return self.per_source[source].gamma_hat

    def pooled_alpha(self) -> dict[str, float]:
        """Sum over sources of n_j(s,1) divided by the sum of n_i(s,1)."""
        return self.pooled.alpha_hat()


def pool_stats(node: str, per_source: Mapping[str, NodeStats]) -> MultiSourceNodeStats:
    """Pool per-source statistics over their disjoint probe sets."""
    if not per_source:
        raise TopologyError("unreachable", f"node {node} is reached by no source")
    first = next(iter(per_source.values()))
    patterns: dict[int, int] = {}
    for stats in per_source.values():
        if stats.children != first.children:
            raise ValueError("per-source statistics disagree on the children")
        for mask, count in stats.patterns.items():
            patterns[mask] = patterns.get(mask, 0) + count
    pooled = NodeStats(
        node, first.children, sum(s.n for s in per_source.values()), patterns, first.max_enumeration
    )
    return MultiSourceNodeStats(node, dict(per_source), pooled)


def pooled_stats(obs, topology, node: str, max_enumeration=DEFAULT_MAX_ENUMERATION) -> MultiSourceNodeStats:
    """Individual statistics for each source reaching ``node``, and their pool."""
    reaching = [s for s in obs.sources if s in topology.sources_of(node)]
    if not reaching:
        raise TopologyError("unreachable", f"node {node} is reached by no probing source")
    per_source = {
        s: node_stats(obs, topology, node, source=s, max_enumeration=max_enumeration)
        for s in reaching
    }
    return pool_stats(node, per_source)


def _fmt_subset(members) -> str:
    return "{" + ",".join(members) + "}"


def format_stats(stats: NodeStats) -> str:
    """Debug dump: header line then one ``I {..} = count`` line per subset."""
    lines = [f"stats {stats.node} n={stats.n} nk1={stats.nk1}"]
    limit = None if stats.fanout <= stats.max_enumeration else 2
    for members in stats.canonical_subsets(limit):
        lines.append(f"I {_fmt_subset(members)} = {stats.count(members)}")
    return "\n".join(lines) + "\n"
