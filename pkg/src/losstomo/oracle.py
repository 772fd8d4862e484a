"""Brute-force references for testing the estimators and the statistics.

Nothing here is used by the estimators themselves.  Log-likelihoods are
built by explicit subset enumeration rather than the product form the
solvers use, and maximized on a refined grid.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from .classifier import Classification, DataClass, classify_node
from .errors import CapExceededError, NoInformationError
from .statistics import NodeStats

__all__ = [
    "GridResult",
    "GridSpec",
    "SubsetCounts",
    "exact_loglik",
    "exhaustive_subset_counts",
    "grid_mle",
    "joint_loglik",
    "loglik_profile",
    "observation_probability",
    "pattern_loglik",
    "pooled_partition_loglik",
]

ORACLE_CAP = 12


@dataclass(frozen=True)
class GridSpec:
    resolution: int = 10_000
    rounds: int = 3

    def __post_init__(self):
        if self.resolution < 1000:
            raise ValueError("grid resolution must be at least 1000")
        if self.rounds < 1:
            raise ValueError("at least one grid round is needed")


@dataclass(frozen=True)
class GridResult:
    maximizer: float
    value: float
    spacing: float
    at_boundary: bool


def _evaluate(loglik, grid: np.ndarray) -> np.ndarray:
    with np.errstate(all="ignore"):
        try:
            values = np.asarray(loglik(grid), dtype=float)
            if values.shape != grid.shape:
                raise ValueError
        except (TypeError, ValueError):
            values = np.array([float(loglik(float(a))) for a in grid])
    return np.where(np.isnan(values), -np.inf, values)


def grid_mle(
    loglik: Callable, spec: GridSpec = GridSpec(), lo: float = 0.0, hi: float = 1.0
) -> GridResult:
    """Maximize ``loglik`` over ``[lo, hi]`` on a grid refined around the incumbent.

    Each round lays ``spec.resolution`` points over the current window and
    narrows the window to two spacings either side of the best point.
    ``at_boundary`` reports a maximizer within one final spacing of ``lo``
    or ``hi``, so a monotone log-likelihood is never mistaken for an
    interior optimum.

    >>> r = grid_mle(lambda a: -(a - 0.7) ** 2)
    >>> abs(r.maximizer - 0.7) <= r.spacing, r.at_boundary
    (True, False)
    """
    a, b = float(lo), float(hi)
    best = value = spacing = None
    for _ in range(spec.rounds):
        grid = np.linspace(a, b, spec.resolution)
        values = _evaluate(loglik, grid)
        if not np.isfinite(values).any():
            if best is None:
                raise NoInformationError("log-likelihood is -inf on the whole grid")
            break
        i = int(np.argmax(values))
        best, value = float(grid[i]), float(values[i])
        spacing = (b - a) / (spec.resolution - 1)
        a, b = max(lo, best - 2 * spacing), min(hi, best + 2 * spacing)
    at_boundary = best - lo <= spacing or hi - best <= spacing
    return GridResult(best, value, spacing, at_boundary)


def _allowed_subsets(components, missing: frozenset):
    for comp in components:
        for size in range(1, len(comp) + 1):
            for subset in itertools.combinations(comp, size):
                if frozenset(subset) not in missing:
                    yield subset


def observation_probability(stats: NodeStats, components, missing=frozenset()):
    """``pi(A)``: probability a probe is seen below the node, given ``A``.

    Inclusion-exclusion over the subsets whose joint observation is
    possible (inside one component and not a missing term), with the
    conditional rates ``beta_j = gamma_j / A``.
    """
    gamma = {c: stats.n_j(c) / stats.n for c in stats.children}
    terms = []
    for subset in _allowed_subsets(components, frozenset(missing)):
        sign = 1.0 if len(subset) % 2 else -1.0
        terms.append((sign * math.prod(gamma[c] for c in subset), len(subset) - 1))

    def pi(A):
        A = np.asarray(A, dtype=float)
        total = np.zeros_like(A)
        for coef, power in terms:
            total = total + coef / A**power
        return total

    return pi


def _structure(stats, data_class, parts, missing):
    if data_class is None or parts is None:
        cls = classify_node(stats)
        data_class = data_class or cls.data_class
        parts = parts or cls.partition
        missing = cls.missing.subsets if missing is None else missing
    if missing is None:
        missing = frozenset()
    elif hasattr(missing, "subsets"):
        missing = missing.subsets
    else:
        missing = frozenset(frozenset(m) for m in missing)
    return data_class, parts, missing


def _domain(stats, components) -> float:
    multi = [c for c in components if len(c) > 1] or list(components)
    return max(stats.n_j(c) / stats.n for comp in multi for c in comp)


def exact_loglik(
    data_class: DataClass | None,
    stats: NodeStats,
    parts=None,
    missing=None,
):
    """Log-likelihood in ``A`` of the probes seen below the node.

    ``L(A) = n_k log pi(A) + (n - n_k) log(1 - pi(A))`` with ``pi`` from
    :func:`observation_probability`.  Components and missing terms come
    from ``parts`` / ``missing`` or from classifying ``stats``.  ``L`` is
    ``-inf`` where some ``beta_j`` would exceed one.
    """
    if stats.n == 0 or stats.nk1 == 0:
        raise NoInformationError(f"node {stats.node}: no probe observed below the node")
    data_class, parts, missing = _structure(stats, data_class, parts, missing)
    components = parts.components if hasattr(parts, "components") else parts
    pi = observation_probability(stats, components, missing)
    floor = _domain(stats, components)
    n, nk = stats.n, stats.nk1

    def loglik(A):
        A = np.asarray(A, dtype=float)
        with np.errstate(all="ignore"):
            p = pi(A)
            out = nk * np.log(p) + ((n - nk) * np.log1p(-p) if n > nk else 0.0)
        ok = (A >= floor) & (p > 0) & (p < 1 if n > nk else p <= 1)
        out = np.where(ok, out, -np.inf)
        return out if out.ndim else float(out)

    loglik.floor = floor
    return loglik


def pooled_partition_loglik(stats: NodeStats, parts):
    """Sum of per-component binomial log-likelihoods in ``A``.

    Component ``j`` contributes ``n_kj log pi_j + (n - n_kj) log(1 - pi_j)``.
    """
    components = [c for c in (parts.components if hasattr(parts, "components") else parts) if len(c) > 1]
    if not components:
        raise NoInformationError(f"node {stats.node}: no multi-member component")
    pieces = [(stats.union_count(c), observation_probability(stats, [c])) for c in components]
    floor = _domain(stats, components)
    n = stats.n

    def loglik(A):
        A = np.asarray(A, dtype=float)
        out = np.zeros_like(A)
        ok = A >= floor
        with np.errstate(all="ignore"):
            for nkj, pi in pieces:
                p = pi(A)
                out = out + nkj * np.log(p) + (n - nkj) * np.log1p(-p)
                ok &= (p > 0) & (p < 1)
        out = np.where(ok, out, -np.inf)
        return out if out.ndim else float(out)

    return loglik


def joint_loglik(ms, classification: Classification | None = None):
    """Log-likelihood of a joint node's shared-subtree rate ``x``.

    The pooled observation's likelihood in ``A`` evaluated at
    ``A = gamma_pooled / x``.
    """
    pooled = ms.pooled
    cls = classification or classify_node(pooled)
    inner = exact_loglik(cls.data_class, pooled, cls.partition, cls.missing.subsets)
    g = pooled.gamma_hat

    def loglik(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return inner(g / x)

    return loglik


def pattern_loglik(stats: NodeStats, A: float, betas: Sequence[float]) -> float:
    """Full reach-pattern log-likelihood of a node under the tree model.

    A probe reaches the node with probability ``A`` and then, independently,
    each child subtree ``j`` with probability ``beta_j``.
    """
    betas = np.asarray(betas, dtype=float)
    if not 0 < A <= 1 or np.any((betas <= 0) | (betas > 1)):
        return -math.inf
    total = 0.0
    none = 1 - A + A * float(np.prod(1 - betas))
    unseen = stats.n - stats.nk1
    if unseen:
        if none <= 0:
            return -math.inf
        total += unseen * math.log(none)
    for mask, count in stats.patterns.items():
        p = A
        for j, b in enumerate(betas):
            p *= b if mask >> j & 1 else 1 - b
        if p <= 0:
            return -math.inf
        total += count * math.log(p)
    return total


@dataclass(frozen=True)
class SubsetCounts:
    node: str
    children: tuple[str, ...]
    n: int
    counts: dict

    def count(self, subset) -> int:
        return self.counts[frozenset(subset)]


def exhaustive_subset_counts(obs, tree, node: str, source: str | None = None) -> SubsetCounts:
    """Every intersection count below ``node`` by scanning each probe.

    No pattern compression and no pruning; meant to check the statistics
    module on small fan-outs.
    """
    children = tuple(tree.children(node))
    if len(children) > ORACLE_CAP:
        raise CapExceededError(f"node {node}: fan-out {len(children)} over the oracle cap")
    if source is not None:
        rows = obs.data[obs.rows_for(source)]
    else:
        reach = tree.sources_of(node)
        picked = [obs.data[a:b] for s, a, b in obs.blocks if s in reach]
        rows = np.vstack(picked) if picked else np.zeros((0, len(obs.receivers)), dtype=bool)
    position = {r: i for i, r in enumerate(obs.receivers)}
    below = [[position[r] for r in tree.receivers_below(c) if r in position] for c in children]
    counts = {}
    for size in range(1, len(children) + 1):
        for subset in itertools.combinations(range(len(children)), size):
            total = 0
            for row in rows:
                if all(any(row[i] for i in below[j]) for j in subset):
                    total += 1
            counts[frozenset(children[j] for j in subset)] = total
    return SubsetCounts(node, children, rows.shape[0], counts)


def loglik_profile(loglik, lo: float, hi: float, points: int = 201):
    """``(A, L(A))`` pairs on an even grid, for plotting."""
    grid = np.linspace(lo, hi, points)
    return list(zip(grid.tolist(), _evaluate(loglik, grid).tolist()))
