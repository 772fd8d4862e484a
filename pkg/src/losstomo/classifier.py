"""Classification of a node's observation into data classes.

The pairwise intersection graph (edge ``i-j`` iff ``I({i, j}) > 0``) splits
the descendants into exclusive components.  A multi-member component is
*perfect* when some probe was seen below all of its members, otherwise
*chained*.  Since ``I`` is antitone, a positive count for the whole
component implies every sub-count is positive.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import CapExceededError, NoInformationError
from .statistics import NodeStats

__all__ = [
    "Classification",
    "DataClass",
    "MissingTerms",
    "PartitionStructure",
    "classify_node",
    "format_classification",
    "intersection_graph",
    "missing_terms",
]


class DataClass(str, enum.Enum):
    PERFECT = "perfect"
    CHAINED_ONLY = "chained-only"
    PARTITION_ONLY = "partition-only"
    CHAINED_PARTITION = "chained-partition"
    COMPLETE_EXCLUSION = "complete-exclusion"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class PartitionStructure:
    """Exclusive components of the descendants with a kind per component.

    ``kinds[i]`` is ``"perfect"`` or ``"chained"`` for multi-member
    components and ``"singleton"`` for single descendants.
    """

    components: tuple[tuple[str, ...], ...]
    kinds: tuple[str, ...]

    @property
    def singletons(self) -> tuple[tuple[str, ...], ...]:
        return tuple(c for c in self.components if len(c) == 1)

    @property
    def multi_member(self) -> tuple[tuple[str, ...], ...]:
        return tuple(c for c in self.components if len(c) > 1)

    def kind_of(self, component) -> str:
        return self.kinds[self.components.index(tuple(component))]

    def without_singletons(self) -> PartitionStructure:
        keep = [(c, k) for c, k in zip(self.components, self.kinds) if len(c) > 1]
        return PartitionStructure(tuple(c for c, _ in keep), tuple(k for _, k in keep))


@dataclass(frozen=True)
class MissingTerms:
    """Zero-count subsets of size two or more, per component.

    Only subsets lying inside a single component are listed; subsets that
    straddle components are zero by exclusivity and are accounted for by
    the partition itself.
    """

    by_component: tuple[tuple[tuple[str, ...], frozenset], ...]

    @property
    def subsets(self) -> frozenset:
        out = set()
        for _, terms in self.by_component:
            out |= terms
        return frozenset(out)

    def for_component(self, component) -> frozenset:
        for comp, terms in self.by_component:
            if comp == tuple(component):
                return terms
        return frozenset()

    def __len__(self) -> int:
        return sum(len(t) for _, t in self.by_component)


@dataclass(frozen=True)
class Classification:
    data_class: DataClass
    partition: PartitionStructure
    missing: MissingTerms


def intersection_graph(stats: NodeStats) -> np.ndarray:
    """Boolean adjacency over ``stats.children``: ``I({i, j}) > 0``."""
    d = stats.fanout
    adj = np.zeros((d, d), dtype=bool)
    for i, j in itertools.combinations(range(d), 2):
        if stats.count_mask((1 << i) | (1 << j)) > 0:
            adj[i, j] = adj[j, i] = True
    return adj


def missing_terms(stats: NodeStats, component) -> frozenset:
    """Zero-count subsets (size >= 2) of ``component``, pruned by antitonicity.

    A subset is recorded without counting as soon as one of its subsets
    one element smaller is already known to be zero.  Returns the empty
    set for a perfect component.
    """
    component = tuple(component)
    if len(component) < 2 or stats.count(component) > 0:
        return frozenset()
    if len(component) > stats.max_enumeration:
        raise CapExceededError(
            f"node {stats.node}: chained component of {len(component)} exceeds the cap"
        )
    zero: set[frozenset] = set()
    for size in range(2, len(component) + 1):
        for subset in itertools.combinations(component, size):
            fs = frozenset(subset)
            if size > 2 and any(fs - {m} in zero for m in subset):
                zero.add(fs)
            elif stats.count(subset) == 0:
                zero.add(fs)
    return frozenset(zero)


def _components(stats: NodeStats, adj: np.ndarray) -> list[tuple[str, ...]]:
    n_comp, labels = connected_components(csr_matrix(adj), directed=False)
    groups: dict[int, list[str]] = {}
    for child, label in zip(stats.children, labels):
        groups.setdefault(int(label), []).append(child)
    order = sorted(groups.values(), key=lambda g: stats.children.index(g[0]))
    return [tuple(g) for g in order]


def classify_node(stats: NodeStats) -> Classification:
    """Assign the node's observation to exactly one :class:`DataClass`."""
    if stats.nk1 == 0:
        raise NoInformationError(f"node {stats.node}: no probe observed below the node")
    comps = _components(stats, intersection_graph(stats))
    kinds = []
    for comp in comps:
        if len(comp) == 1:
            kinds.append("singleton")
        else:
            kinds.append("perfect" if stats.count(comp) > 0 else "chained")
    partition = PartitionStructure(tuple(comps), tuple(kinds))
    missing = MissingTerms(
        tuple((c, missing_terms(stats, c)) for c, k in zip(comps, kinds) if k == "chained")
    )
    multi = [k for k in kinds if k != "singleton"]
    if not multi:
        cls = DataClass.COMPLETE_EXCLUSION
    elif len(comps) == 1:
        cls = DataClass.PERFECT if kinds[0] == "perfect" else DataClass.CHAINED_ONLY
    elif "chained" in multi:
        cls = DataClass.CHAINED_PARTITION
    else:
        cls = DataClass.PARTITION_ONLY
    return Classification(cls, partition, missing)


def _fmt_set(members) -> str:
    return "{" + ",".join(members) + "}"


def format_classification(node: str, result: Classification, children=None) -> str:
    """One report line: ``<node> <class> components=[...] m_e=[...]``."""
    order = {c: i for i, c in enumerate(children or [])}

    def key(s):
        return (len(s), sorted(order.get(m, 0) for m in s), sorted(s))

    comps = ",".join(_fmt_set(c) for c in result.partition.components)
    terms = sorted(result.missing.subsets, key=key)
    me = ",".join(_fmt_set(sorted(t, key=lambda m: order.get(m, 0))) for t in terms)
    return f"{node} {result.data_class} components=[{comps}] m_e=[{me}]"
