"""Joint and shared nodes of multi-source topologies.

A joint node ``i`` (several parents) is probed by every source in
``S(i)``.  The pass rate ``x`` of the subtree below ``i`` is common to all
sources, so it is estimated from the pooled ratios ``alpha_j`` and turned
into per-source path rates ``A(s, i) = gamma_i(s) / x``.

A general topology is then cut into regions, one rooted at each source
and one at each joint node; every region is a tree that the tree
estimators handle.
"""

from __future__ import annotations

import enum
import math
import warnings
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .classifier import Classification, DataClass, classify_node
from .equations import ComponentTerm, LikelihoodEquation, search_bound, solve_equation
from .errors import (
    CompleteExclusionError,
    InconsistentObservationError,
    LossTomographyError,
    NoInformationError,
)
from .estimators import DEFAULT_TOL, Estimate, LinkEstimate, estimate_tree
from .simulator import ObservationMatrix
from .statistics import DEFAULT_MAX_ENUMERATION, MultiSourceNodeStats, pool_stats, pooled_stats
from .topology import GeneralTopology, MulticastTree, node_sort_key

__all__ = [
    "GeneralEstimate",
    "JointEstimate",
    "MultiObsClass",
    "Region",
    "Decomposition",
    "classify_joint",
    "decompose",
    "estimate_general",
    "estimate_joint",
    "reject_inconsistent",
    "solve_joint_identical_others",
    "solve_joint_perfect",
]

VIRTUAL_PREFIX = "^"


class MultiObsClass(str, enum.Enum):
    """(individual, global) observation class of a joint node."""

    PERFECT_PERFECT = "perfect/perfect"
    OTHERS_PERFECT = "others/perfect"
    OTHERS_IDENTICAL = "others/identical-others"
    OTHERS_OTHERS = "others/others"

    def __str__(self) -> str:
        return self.value

    @property
    def estimable(self) -> bool:
        return self in (MultiObsClass.PERFECT_PERFECT, MultiObsClass.OTHERS_IDENTICAL)


@dataclass(frozen=True)
class JointEstimate:
    node: str
    x_hat: float
    path_rates: Mapping[str, float]
    method: str
    obs_class: MultiObsClass
    reference: str
    residual: float
    iterations: int
    flags: tuple[str, ...] = ()


def _active(ms: MultiSourceNodeStats) -> MultiSourceNodeStats:
    keep = {}
    for s, stats in ms.per_source.items():
        if stats.n == 0:
            warnings.warn(f"node {ms.node}: source {s} sent no probes and is ignored", stacklevel=3)
        else:
            keep[s] = stats
    if len(keep) == len(ms.per_source):
        return ms
    return pool_stats(ms.node, keep)


def _signature(c: Classification):
    return c.data_class, c.partition, c.missing


def _individual_classes(ms: MultiSourceNodeStats) -> dict[str, Classification]:
    out = {}
    for s, stats in ms.per_source.items():
        if stats.nk1 == 0:
            raise NoInformationError(f"node {ms.node}: no probe from source {s} observed below it")
        out[s] = classify_node(stats)
    return out


def classify_joint(ms: MultiSourceNodeStats) -> MultiObsClass:
    """Class of the (individual, global) observation pair of a joint node.

    Individual observations are "identical" when their data class,
    partition structure and missing-term pattern are equal; the global
    observation must share that signature too.
    """
    ms = _active(ms)
    individual = _individual_classes(ms)
    if all(c.data_class is DataClass.PERFECT for c in individual.values()):
        return MultiObsClass.PERFECT_PERFECT
    pooled = classify_node(ms.pooled)
    if pooled.data_class is DataClass.PERFECT:
        return MultiObsClass.OTHERS_PERFECT
    signatures = {_signature(c) for c in individual.values()}
    if len(signatures) == 1 and _signature(pooled) in signatures:
        return MultiObsClass.OTHERS_IDENTICAL
    return MultiObsClass.OTHERS_OTHERS


def _joint_from_terms(ms, terms, method, obs_class, tol) -> JointEstimate:
    result = solve_equation(LikelihoodEquation(terms), search_bound(terms), tol)
    x = result.root
    rates = {s: ms.gamma(s) / x for s in ms.sources}
    reference = sorted(ms.sources, key=lambda s: (-ms.n_i(s), node_sort_key(s)))[0]
    flags = ("saturated",) if any(a > 1.0 for a in rates.values()) or x > 1.0 else ()
    return JointEstimate(
        ms.node, x, rates, method, obs_class, reference, result.residual, result.iterations, flags
    )


def _check_pooled(ms: MultiSourceNodeStats) -> None:
    pooled = ms.pooled
    if pooled.nk1 == 0:
        raise NoInformationError(f"node {ms.node}: no probe observed below the node")
    if sum(pooled.n_j(c) for c in pooled.children) <= pooled.nk1:
        raise CompleteExclusionError(
            f"node {ms.node}: descendants never observe a probe jointly; send more probes"
        )


def solve_joint_perfect(ms: MultiSourceNodeStats, tol: float = DEFAULT_TOL) -> JointEstimate:
    """Root of ``1 - x = prod_j (1 - alpha_j x)`` with pooled ``alpha_j``.

    The reference source is the one with the most probes observed below
    the node; every path rate follows from ``A(s, i) = gamma_i(s) / x``.
    """
    ms = _active(ms)
    _check_pooled(ms)
    alpha = ms.pooled_alpha()
    terms = [ComponentTerm(1.0, tuple(alpha[c] for c in ms.pooled.children))]
    return _joint_from_terms(ms, terms, "joint-perfect-poly", MultiObsClass.PERFECT_PERFECT, tol)


def _component_terms(ms: MultiSourceNodeStats, cls: Classification):
    pooled = ms.pooled
    nk1 = pooled.nk1
    terms = []
    for comp in cls.partition.components:
        pos = {c: i for i, c in enumerate(comp)}
        removed = tuple(
            sorted(tuple(sorted(pos[m] for m in p)) for p in cls.missing.for_component(comp))
        )
        terms.append(
            ComponentTerm(
                pooled.union_count(comp) / nk1,
                tuple(pooled.n_j(c) / nk1 for c in comp),
                removed,
            )
        )
    return terms


def solve_joint_identical_others(
    ms: MultiSourceNodeStats, tol: float = DEFAULT_TOL
) -> JointEstimate:
    """Shared-subtree rate when every source sees the same correlation pattern.

    Summing the per-source equations
    ``1 - x = prod_j (1 - alpha_j x) - me_s(x)`` over identical ``me_s``
    leaves the single-source form in the pooled ``alpha_j``.  Partitioned
    patterns use one term per exclusive component.
    """
    ms = _active(ms)
    individual = _individual_classes(ms)
    signatures = {_signature(c) for c in individual.values()}
    if len(signatures) != 1:
        raise ValueError(f"node {ms.node}: individual observations are not identical")
    cls = next(iter(individual.values()))
    if cls.data_class is DataClass.COMPLETE_EXCLUSION:
        raise CompleteExclusionError(
            f"node {ms.node}: every source sees mutually exclusive descendants; send more probes"
        )
    _check_pooled(ms)
    terms = _component_terms(ms, cls)
    return _joint_from_terms(
        ms, terms, "joint-identical-others-poly", MultiObsClass.OTHERS_IDENTICAL, tol
    )


def reject_inconsistent(ms: MultiSourceNodeStats, obs_class: MultiObsClass | None = None):
    """Raise the structured error for classes that admit no estimate."""
    ms = _active(ms)
    obs_class = obs_class or classify_joint(ms)
    if obs_class.estimable:
        raise ValueError(f"node {ms.node}: class {obs_class} is estimable, nothing to reject")
    individual = {s: c.data_class.value for s, c in _individual_classes(ms).items()}
    raise InconsistentObservationError(ms.node, obs_class.value, individual)


def estimate_joint(ms: MultiSourceNodeStats, tol: float = DEFAULT_TOL) -> JointEstimate:
    obs_class = classify_joint(ms)
    if obs_class is MultiObsClass.PERFECT_PERFECT:
        return solve_joint_perfect(ms, tol)
    if obs_class is MultiObsClass.OTHERS_IDENTICAL:
        return solve_joint_identical_others(ms, tol)
    reject_inconsistent(ms, obs_class)


@dataclass
class Region:
    """One tree of a decomposition, with its derived observations.

    ``root`` is a source or a joint node; a joint node's region hangs
    below a virtual root ``^i`` whose link is lossless by construction.
    ``leaf_path_rates`` carries path rates for leaves that are joint
    nodes.  ``obs`` is None for a blocked region.
    """

    root: str
    tree: MulticastTree
    obs: ObservationMatrix | None
    leaf_path_rates: dict[str, float] = field(default_factory=dict)
    virtual_link: str | None = None

    @property
    def blocked(self) -> bool:
        return self.obs is None


@dataclass
class Decomposition:
    regions: list[Region]
    joint: dict[str, JointEstimate]
    failures: dict[str, LossTomographyError]

    @property
    def blocked(self) -> list[str]:
        return [r.root for r in self.regions if r.blocked]


def _region_edges(topology: GeneralTopology, root: str, cuts: set[str]):
    edges = []
    order = [root]
    for v in order:
        if v in cuts and v != root:
            continue
        for c in topology.children(v):
            edges.append((v, c, topology.link_between[(v, c)]))
            order.append(c)
    return edges


def _leaf_columns(obs: ObservationMatrix, topology, leaves, rows):
    index = {r: i for i, r in enumerate(obs.receivers)}
    block = np.zeros((rows.shape[0], len(leaves)), dtype=bool)
    for j, leaf in enumerate(leaves):
        cols = [index[r] for r in sorted(topology.receivers_below(leaf), key=node_sort_key) if r in index]
        if cols:
            block[:, j] = rows[:, cols].any(axis=1)
    return block


def decompose(
    topology: GeneralTopology,
    obs: ObservationMatrix,
    *,
    tol: float = DEFAULT_TOL,
    max_enumeration: int = DEFAULT_MAX_ENUMERATION,
) -> Decomposition:
    """Cut the topology into trees at its joint nodes.

    Every joint node with descendants is estimated first.  Its region's
    observations are the probes (from the sources reaching it) seen below
    it, padded with unseen probes up to the estimated number of probes
    that reached it, ``sum_s n_i(s,1) / x``.  In the region above, the
    joint node is a leaf whose path rate is its observed rate divided by
    ``x``.  A joint node that cannot be estimated blocks its own region;
    the other regions are still produced.
    """
    cuts = {v for v in topology.joint_nodes if topology.children(v)}
    joint: dict[str, JointEstimate] = {}
    failures: dict[str, LossTomographyError] = {}
    for i in sorted(cuts, key=node_sort_key):
        try:
            ms = pooled_stats(obs, topology, i, max_enumeration=max_enumeration)
            joint[i] = estimate_joint(ms, tol)
        except LossTomographyError as exc:
            failures[i] = exc

    regions = []
    roots = [s for s in topology.sources] + sorted(cuts, key=node_sort_key)
    for root in roots:
        edges = _region_edges(topology, root, cuts)
        virtual = None
        if root in cuts:
            virtual = VIRTUAL_PREFIX + root
            edges = [(virtual, root, virtual)] + edges
        tree = MulticastTree(
            [(p, c) for p, c, _ in edges], link_ids={c: lid for _, c, lid in edges}
        )
        if root in cuts and root not in joint:
            regions.append(Region(root, tree, None, virtual_link=virtual))
            continue
        leaves = tree.receivers
        if root in cuts:
            est = joint[root]
            reaching = [s for s in obs.sources if s in topology.sources_of(root)]
            rows = np.vstack([obs.data[obs.rows_for(s)] for s in reaching])
            seen = _leaf_columns(obs, topology, [root], rows)[:, 0]
            rows = rows[seen]
            total = max(int(round(rows.shape[0] / est.x_hat)), rows.shape[0])
            block = _leaf_columns(obs, topology, leaves, rows)
            pad = np.zeros((total - rows.shape[0], len(leaves)), dtype=bool)
            data = np.vstack([block, pad])
            source_name = virtual
        else:
            rows = obs.data[obs.rows_for(root)] if root in obs.sources else np.zeros((0, obs.data.shape[1]), bool)
            data = _leaf_columns(obs, topology, leaves, rows)
            source_name = root
        region_obs = ObservationMatrix(leaves, data, ((source_name, 0, data.shape[0]),))
        overrides = {}
        n = data.shape[0]
        for j, leaf in enumerate(leaves):
            if leaf in cuts and leaf in joint and n:
                overrides[leaf] = float(data[:, j].sum()) / n / joint[leaf].x_hat
        regions.append(Region(root, tree, region_obs, overrides, virtual))
    return Decomposition(regions, joint, failures)


@dataclass
class GeneralEstimate:
    decomposition: Decomposition
    nodes: dict[tuple[str, str], Estimate]
    links: dict[str, LinkEstimate]
    failures: dict[tuple[str, str], LossTomographyError]

    @property
    def joint(self) -> dict[str, JointEstimate]:
        return self.decomposition.joint


def estimate_general(
    obs: ObservationMatrix,
    topology: GeneralTopology,
    *,
    grouping_threshold: int | None = None,
    tol: float = DEFAULT_TOL,
    max_enumeration: int = DEFAULT_MAX_ENUMERATION,
) -> GeneralEstimate:
    """Estimate every link of a general topology through its decomposition.

    Node estimates are keyed by ``(region root, node)`` since a node's
    path rate depends on where its region starts.  Links into a blocked
    joint node, and links inside a blocked region, carry a ``blocked``
    flag and no value.
    """
    dec = decompose(topology, obs, tol=tol, max_enumeration=max_enumeration)
    nodes: dict[tuple[str, str], Estimate] = {}
    links: dict[str, LinkEstimate] = {}
    failures: dict[tuple[str, str], LossTomographyError] = {}
    blocked = set(dec.blocked)
    for region in dec.regions:
        ids = region.tree.link_ids
        if region.blocked:
            for child in region.tree.links:
                if ids[child] != region.virtual_link:
                    links[ids[child]] = LinkEstimate(ids[child], math.nan, math.nan, ("blocked",))
            continue
        est = estimate_tree(
            region.obs,
            region.tree,
            grouping_threshold=grouping_threshold,
            tol=tol,
            max_enumeration=max_enumeration,
            leaf_path_rates=region.leaf_path_rates,
        )
        for k, e in est.nodes.items():
            nodes[(region.root, k)] = e
        for k, exc in est.failures.items():
            failures[(region.root, k)] = exc
        for child, link in est.links.items():
            lid = ids[child]
            if lid == region.virtual_link:
                continue
            if child in blocked:
                link = LinkEstimate(lid, math.nan, math.nan, ("blocked",))
            links[lid] = LinkEstimate(lid, link.pass_rate, link.raw_ratio, link.flags)
    order = {link.id: i for i, link in enumerate(topology.links)}
    links = dict(sorted(links.items(), key=lambda kv: order.get(kv[0], len(order))))
    return GeneralEstimate(dec, nodes, links, failures)
