"""Class-matched estimation of path and link pass rates on a tree.

Each data class has its own likelihood equation; :func:`estimate_node`
classifies a node's observation and dispatches to the matching solver.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .classifier import Classification, DataClass, MissingTerms, PartitionStructure, classify_node
from .equations import ComponentTerm, LikelihoodEquation, search_bound, solve_equation
from .errors import (
    CompleteExclusionError,
    InvalidGroupingError,
    LossTomographyError,
    NoInformationError,
)
from .statistics import DEFAULT_MAX_ENUMERATION, NodeStats, node_stats

__all__ = [
    "DEFAULT_TOL",
    "Estimate",
    "LinkEstimate",
    "Method",
    "TreeEstimate",
    "balanced_grouping",
    "estimate_node",
    "estimate_tree",
    "solve_chained",
    "solve_chained_partition",
    "solve_grouped",
    "solve_partition_only",
    "solve_perfect",
    "strip_singletons",
]

DEFAULT_TOL = 1e-10


class Method(str, enum.Enum):
    PERFECT_POLY = "perfect-poly"
    GROUPED = "grouped-closed-form"
    CHAINED_POLY = "chained-poly"
    PARTITION_POOLED = "partition-pooled"
    CHAINED_PARTITION_POLY = "chained-partition-poly"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Estimate:
    """Estimated pass rate ``A_hat`` of the path from the source to ``node``."""

    node: str
    A_hat: float
    method: Method
    residual: float
    iterations: int
    data_class: DataClass | None = None
    stripped_singletons: tuple[str, ...] = ()
    flags: tuple[str, ...] = ()
    diagnostics: Mapping[str, float] = field(default_factory=dict)

    @property
    def saturated(self) -> bool:
        return self.A_hat > 1.0


@dataclass(frozen=True)
class LinkEstimate:
    link: str
    pass_rate: float
    raw_ratio: float
    flags: tuple[str, ...] = ()

    @property
    def loss_rate(self) -> float:
        return 1.0 - self.pass_rate


@dataclass
class TreeEstimate:
    nodes: dict[str, Estimate]
    links: dict[str, LinkEstimate]
    path_rates: dict[str, float]
    failures: dict[str, LossTomographyError]

    @property
    def failed_nodes(self) -> list[str]:
        return list(self.failures)


def _check_information(stats: NodeStats) -> None:
    if stats.nk1 == 0:
        raise NoInformationError(f"node {stats.node}: no probe observed below the node")
    if sum(stats.n_j(c) for c in stats.children) <= stats.nk1:
        raise CompleteExclusionError(
            f"node {stats.node}: descendants never observe a probe jointly; "
            "send more probes to break the tie"
        )


def _term(stats: NodeStats, component: Sequence[str], removed: Iterable = ()) -> ComponentTerm:
    component = tuple(component)
    pos = {c: i for i, c in enumerate(component)}
    idx = tuple(
        sorted(tuple(sorted(pos[m] for m in subset)) for subset in removed)
    )
    return ComponentTerm(
        stats.union_count(component) / stats.n,
        tuple(stats.n_j(c) / stats.n for c in component),
        idx,
    )


def _flags(stats: NodeStats, A: float) -> tuple[str, ...]:
    flags = []
    if A > 1.0:
        flags.append("saturated")
    if A < stats.gamma_hat:
        flags.append("below-observed-rate")
    return tuple(flags)


def _solve_terms(stats, terms, method, tol, **extra) -> Estimate:
    result = solve_equation(LikelihoodEquation(terms), search_bound(terms), tol)
    A = 1.0 / result.root
    flags = _flags(stats, A)
    return Estimate(stats.node, A, method, result.residual, result.iterations, flags=flags, **extra)


def solve_perfect(stats: NodeStats, tol: float = DEFAULT_TOL) -> Estimate:
    """Root of ``1 - g_k/A = prod_j (1 - g_j/A)`` over all descendants.

    The maximum likelihood estimate when the observation is perfect.

    >>> s = NodeStats.from_pattern_counts(
    ...     "k", "ab", {("a", "b"): 25, ("a",): 25, ("b",): 15}, n=100)
    >>> round(solve_perfect(s).A_hat, 12)
    0.8
    """
    _check_information(stats)
    return _solve_terms(stats, [_term(stats, stats.children)], Method.PERFECT_POLY, tol)


def balanced_grouping(stats: NodeStats, members: Sequence[str] | None = None):
    """Split ``members`` into two groups, alternating in decreasing ``n_j`` order."""
    members = tuple(stats.children if members is None else members)
    ranked = sorted(members, key=lambda c: -stats.n_j(c))
    return tuple(ranked[0::2]), tuple(ranked[1::2])


def _grouped_terms(stats, g1, g2):
    c1, c2 = stats.union_count(g1), stats.union_count(g2)
    both = c1 + c2 - stats.union_count(tuple(g1) + tuple(g2))
    return c1, c2, both


def solve_grouped(stats: NodeStats, grouping=None, tol: float = DEFAULT_TOL) -> Estimate:
    """Closed form after merging the descendants into two virtual ones.

    ``A = g1 g2 / (g1 + g2 - g_k)`` where ``g1``, ``g2`` are the rates at
    which each group observes a probe.
    """
    if stats.nk1 == 0:
        raise NoInformationError(f"node {stats.node}: no probe observed below the node")
    g1, g2 = balanced_grouping(stats) if grouping is None else (tuple(grouping[0]), tuple(grouping[1]))
    if not g1 or not g2:
        raise InvalidGroupingError("both groups must be nonempty")
    if set(g1) & set(g2) or set(g1) | set(g2) != set(stats.children):
        raise InvalidGroupingError("groups must partition the descendants")
    c1, c2, both = _grouped_terms(stats, g1, g2)
    if both <= 0:
        raise InvalidGroupingError(
            f"node {stats.node}: groups {g1} and {g2} never observe a probe jointly"
        )
    A = c1 * c2 / (stats.n * both)
    n = stats.n
    residual = abs((1 - c1 / (n * A)) * (1 - c2 / (n * A)) - (1 - stats.nk1 / (n * A)))
    flags = _flags(stats, A)
    return Estimate(
        stats.node, A, Method.GROUPED, residual, 0, flags=flags,
        diagnostics={"group1": "+".join(g1), "group2": "+".join(g2)},
    )


def solve_chained(stats: NodeStats, missing, tol: float = DEFAULT_TOL) -> Estimate:
    """Root of the perfect equation with the terms of ``missing`` removed.

    ``missing`` is a :class:`MissingTerms` or an iterable of subsets of the
    descendants whose intersection count is zero.
    """
    _check_information(stats)
    subsets = missing.subsets if isinstance(missing, MissingTerms) else missing
    term = _term(stats, stats.children, subsets)
    return _solve_terms(stats, [term], Method.CHAINED_POLY, tol)


def _pooled_partition_loglik(stats, components):
    parts = [
        (stats.union_count(c), np.array([stats.n_j(m) / stats.n for m in c])) for c in components
    ]

    def loglik(A):
        total = 0.0
        for observed, gammas in parts:
            pi = A * (1.0 - np.prod(1.0 - gammas / A))
            if not 0.0 < pi < 1.0:
                return -math.inf
            total += observed * math.log(pi) + (stats.n - observed) * math.log1p(-pi)
        return total

    lower = max(float(g.max()) for _, g in parts)
    return loglik, lower


def solve_partition_only(
    stats: NodeStats, parts: PartitionStructure, tol: float = DEFAULT_TOL
) -> Estimate:
    """Pooled closed form over exclusive, internally perfect components.

    Each multi-member component is split into two groups with observation
    counts ``c1``, ``c2`` and joint count ``o``; the estimate is
    ``sum(c1 c2) / (n sum(o))``.  Diagnostics carry the exact root of the
    partition likelihood equation (``exact_root``) and the maximizer of the
    sum of per-component binomial likelihoods (``pooled_partition_mle``).
    """
    if stats.nk1 == 0:
        raise NoInformationError(f"node {stats.node}: no probe observed below the node")
    multi = [c for c, k in zip(parts.components, parts.kinds) if len(c) > 1]
    if not multi:
        raise CompleteExclusionError(
            f"node {stats.node}: every component is a single descendant; send more probes"
        )
    if any(k == "chained" for k in parts.kinds):
        raise ValueError("solve_partition_only needs internally perfect components")
    num = den = 0
    for comp in multi:
        g1, g2 = balanced_grouping(stats, comp)
        c1, c2, both = _grouped_terms(stats, g1, g2)
        num += c1 * c2
        den += both
    A = num / (stats.n * den)

    n = stats.n
    grouped_residual = 0.0
    for comp in multi:
        g1, g2 = balanced_grouping(stats, comp)
        c1, c2, _ = _grouped_terms(stats, g1, g2)
        grouped_residual += (1 - c1 / (n * A)) * (1 - c2 / (n * A)) - (
            1 - stats.union_count(comp) / (n * A)
        )

    exact = _solve_terms(stats, [_term(stats, c) for c in parts.components], Method.PARTITION_POOLED, tol)
    loglik, lower = _pooled_partition_loglik(stats, multi)
    opt = minimize_scalar(
        lambda a: -loglik(a), bounds=(lower, 1.0), method="bounded", options={"xatol": 1e-12}
    )
    flags = _flags(stats, A)
    return Estimate(
        stats.node, A, Method.PARTITION_POOLED, abs(grouped_residual), exact.iterations, flags=flags,
        diagnostics={
            "closed_form": A,
            "exact_root": exact.A_hat,
            "exact_residual": exact.residual,
            "pooled_partition_mle": float(opt.x),
        },
    )


def solve_chained_partition(
    stats: NodeStats, parts: PartitionStructure, missing: MissingTerms, tol: float = DEFAULT_TOL
) -> Estimate:
    """Root of the summed per-component equations, chained components
    carrying their removed terms."""
    _check_information(stats)
    terms = [_term(stats, c, missing.for_component(c)) for c in parts.components]
    return _solve_terms(stats, terms, Method.CHAINED_PARTITION_POLY, tol)


def strip_singletons(stats: NodeStats, parts: PartitionStructure):
    """Drop single-descendant components; they cancel from the equation.

    Returns ``(reduced_stats, reduced_parts, stripped)``.
    """
    stripped = tuple(c[0] for c in parts.singletons)
    if not stripped:
        return stats, parts, ()
    keep = [m for c in parts.multi_member for m in c]
    return stats.restrict(keep), parts.without_singletons(), stripped


def estimate_node(
    stats: NodeStats,
    grouping_threshold: int | None = None,
    tol: float = DEFAULT_TOL,
    classification: Classification | None = None,
) -> Estimate:
    """Classify the node's observation and apply the matching estimator.

    ``grouping_threshold``: perfect nodes with at least this many
    descendants use the grouped closed form instead of the polynomial root.
    """
    cls = classification or classify_node(stats)
    dc = cls.data_class
    if dc is DataClass.COMPLETE_EXCLUSION:
        raise CompleteExclusionError(
            f"node {stats.node}: observations of all descendants are mutually exclusive; "
            "no estimate exists, send more probes to break the tie"
        )
    if dc is DataClass.PERFECT:
        if grouping_threshold is not None and stats.fanout >= grouping_threshold:
            est = solve_grouped(stats, tol=tol)
        else:
            est = solve_perfect(stats, tol)
        stripped = ()
    elif dc is DataClass.CHAINED_ONLY:
        est = solve_chained(stats, cls.missing, tol)
        stripped = ()
    else:
        reduced, rparts, stripped = strip_singletons(stats, cls.partition)
        if dc is DataClass.PARTITION_ONLY:
            est = solve_partition_only(reduced, rparts, tol)
        else:
            est = solve_chained_partition(reduced, rparts, cls.missing, tol)
    return Estimate(
        est.node, est.A_hat, est.method, est.residual, est.iterations, dc, stripped,
        est.flags, est.diagnostics,
    )


def estimate_tree(
    obs,
    tree,
    *,
    grouping_threshold: int | None = None,
    tol: float = DEFAULT_TOL,
    max_enumeration: int = DEFAULT_MAX_ENUMERATION,
    leaf_path_rates: Mapping[str, float] | None = None,
) -> TreeEstimate:
    """Estimate every internal node's path rate and every link's pass rate.

    A failing node is recorded in ``failures`` and does not stop the
    others.  Leaf path rates are the empirical reception rates unless
    given in ``leaf_path_rates``.  Link rates are ratios of path rates,
    clamped to 1 with a ``clamped`` flag.
    """
    nodes: dict[str, Estimate] = {}
    failures: dict[str, LossTomographyError] = {}
    paths: dict[str, float] = {tree.root: 1.0}
    overrides = dict(leaf_path_rates or {})
    for k in tree.internal_nodes:
        try:
            stats = node_stats(obs, tree, k, max_enumeration=max_enumeration)
            est = estimate_node(stats, grouping_threshold, tol)
        except LossTomographyError as exc:
            failures[k] = exc
            continue
        nodes[k] = est
        paths[k] = est.A_hat
    rows = obs.data[obs.rows_for(tree.root)] if tree.root in obs.sources else obs.data
    n = rows.shape[0]
    col = {r: i for i, r in enumerate(obs.receivers)}
    for leaf in tree.receivers:
        if leaf in overrides:
            paths[leaf] = float(overrides[leaf])
        elif n:
            paths[leaf] = float(rows[:, col[leaf]].sum()) / n

    links: dict[str, LinkEstimate] = {}
    for child in tree.links:
        parent = tree.parent[child]
        if child not in paths or parent not in paths or paths[parent] <= 0:
            links[child] = LinkEstimate(child, math.nan, math.nan, ("unavailable",))
            continue
        raw = paths[child] / paths[parent]
        flags = ()
        value = raw
        if raw > 1.0:
            value, flags = 1.0, ("clamped",)
        links[child] = LinkEstimate(child, value, raw, flags)
    return TreeEstimate(nodes, links, paths, failures)
