"""Probing topologies: multicast trees and multi-source general networks.

Node and link identifiers are strings.  Numeric identifiers sort
numerically (``"2" < "10"``) wherever an ordering is needed, see
:func:`node_sort_key`.

Text format, one record per line::

    # comment
    source <node>
    link <id> <parent> <child> [<pass_rate>]
"""

from __future__ import annotations

import enum
import math
from collections import deque
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

from .errors import FormatError, TopologyError

__all__ = [
    "GeneralTopology",
    "Link",
    "LinkParams",
    "MulticastTree",
    "NodeKind",
    "classify_nodes",
    "format_topology",
    "load_topology",
    "node_sort_key",
    "parse_topology",
    "save_topology",
    "subtree_receivers",
    "validate_tree",
]


def node_sort_key(node: str):
    """Sort key placing numeric ids first, in numeric order."""
    return (0, int(node), "") if node.isdigit() else (1, 0, node)


def _sorted(nodes: Iterable[str]) -> list[str]:
    return sorted(nodes, key=node_sort_key)


class LinkParams(Mapping):
    """Immutable per-link pass rates, each in (0, 1].

    A pass rate of exactly zero is rejected: it makes every receiver below
    the link unobservable.
    """

    def __init__(self, rates: Mapping[str, float]):
        checked = {}
        for link, rate in rates.items():
            rate = float(rate)
            if not (math.isfinite(rate) and 0.0 < rate <= 1.0):
                raise ValueError(f"pass rate of link {link} must lie in (0, 1], got {rate!r}")
            checked[str(link)] = rate
        self._rates = checked

    def __getitem__(self, link: str) -> float:
        return self._rates[link]

    def __iter__(self) -> Iterator[str]:
        return iter(self._rates)

    def __len__(self) -> int:
        return len(self._rates)

    def __repr__(self) -> str:
        return f"LinkParams({self._rates!r})"

    def __eq__(self, other) -> bool:
        if isinstance(other, LinkParams):
            return self._rates == other._rates
        return NotImplemented

    def __hash__(self):
        return hash(tuple(sorted(self._rates.items())))

    def loss_rate(self, link: str) -> float:
        return 1.0 - self._rates[link]


def validate_tree(tree: "MulticastTree") -> None:
    """Check every multicast-tree invariant, raising on the first violation.

    Raises :class:`TopologyError` whose ``kind`` is one of ``multi-parent``,
    ``cycle``, ``multi-root``, ``root-with-multiple-children`` or
    ``childless-internal-node``.
    """
    parents: dict[str, list[str]] = {}
    children: dict[str, list[str]] = {}
    nodes: set[str] = set()
    for parent, child in tree.edges:
        nodes.update((parent, child))
        parents.setdefault(child, []).append(parent)
        children.setdefault(parent, []).append(child)

    for node in _sorted(parents):
        if len(parents[node]) > 1:
            raise TopologyError("multi-parent", f"node {node} has parents {parents[node]}")

    roots = [v for v in _sorted(nodes) if v not in parents]
    if not roots:
        raise TopologyError("cycle", "every node has a parent")
    if len(roots) > 1:
        raise TopologyError("multi-root", f"roots {roots}")

    root = roots[0]
    seen = {root}
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for c in children.get(v, ()):
            if c in seen:
                raise TopologyError("cycle", f"node {c} reached twice")
            seen.add(c)
            queue.append(c)
    if seen != nodes:
        unreachable = _sorted(nodes - seen)
        raise TopologyError("cycle", f"nodes {unreachable} lie on a cycle detached from the root")

    if len(children.get(root, ())) != 1:
        raise TopologyError(
            "root-with-multiple-children",
            f"root {root} has {len(children.get(root, ()))} children",
        )

    if tree.declared_receivers is not None:
        declared = set(tree.declared_receivers)
        for node in _sorted(nodes):
            if node == root:
                continue
            if node not in children and node not in declared:
                raise TopologyError("childless-internal-node", f"node {node} has no children")
            if node in children and node in declared:
                raise TopologyError(
                    "childless-internal-node", f"receiver {node} is not a leaf"
                )


class MulticastTree:
    """A single-source multicast tree.

    Built from ``(parent, child)`` edges.  Link ids coincide with child node
    ids; ``link_ids`` optionally maps each child to the id the link carried
    in its source file.

    Parameters
    ----------
    edges : iterable of (parent, child)
    receivers : iterable of node ids, optional
        When given, checked against the leaves of the tree.
    link_ids : mapping, optional
    validate : bool
        Run :func:`validate_tree` on construction (default).
    """

    def __init__(
        self,
        edges: Iterable[tuple[str, str]],
        *,
        receivers: Iterable[str] | None = None,
        link_ids: Mapping[str, str] | None = None,
        validate: bool = True,
    ):
        self.edges = tuple((str(p), str(c)) for p, c in edges)
        self.declared_receivers = None if receivers is None else tuple(receivers)
        self.link_ids = dict(link_ids) if link_ids else {c: c for _, c in self.edges}
        if validate:
            validate_tree(self)

    def __repr__(self) -> str:
        return f"MulticastTree(root={self.root!r}, links={len(self.edges)})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, MulticastTree):
            return NotImplemented
        return set(self.edges) == set(other.edges)

    def __hash__(self):
        return hash(frozenset(self.edges))

    @cached_property
    def parent(self) -> dict[str, str]:
        return {c: p for p, c in self.edges}

    @cached_property
    def _children(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, list[str]] = {}
        for p, c in self.edges:
            out.setdefault(p, []).append(c)
        return {p: tuple(_sorted(cs)) for p, cs in out.items()}

    @cached_property
    def nodes(self) -> tuple[str, ...]:
        found = {v for e in self.edges for v in e}
        return tuple(_sorted(found))

    @cached_property
    def root(self) -> str:
        roots = [v for v in self.nodes if v not in self.parent]
        return roots[0]

    @property
    def links(self) -> tuple[str, ...]:
        return tuple(v for v in self.nodes if v != self.root)

    def children(self, node: str) -> tuple[str, ...]:
        return self._children.get(node, ())

    @cached_property
    def receivers(self) -> tuple[str, ...]:
        return tuple(v for v in self.nodes if v != self.root and not self.children(v))

    @cached_property
    def internal_nodes(self) -> tuple[str, ...]:
        """Non-root nodes with at least one child, in topological order."""
        return tuple(v for v in self.topological_order() if v != self.root and self.children(v))

    def topological_order(self) -> list[str]:
        order = [self.root]
        for v in order:
            order.extend(self.children(v))
        return order

    @cached_property
    def _receivers_below(self) -> dict[str, frozenset[str]]:
        below: dict[str, frozenset[str]] = {}
        for v in reversed(self.topological_order()):
            kids = self.children(v)
            below[v] = frozenset().union(*(below[c] for c in kids)) if kids else frozenset((v,))
        return below

    def receivers_below(self, node: str) -> frozenset[str]:
        try:
            return self._receivers_below[node]
        except KeyError:
            raise KeyError(f"unknown node {node!r}") from None

    def path_to(self, node: str) -> list[str]:
        """Links (child ids) on the path from the root down to ``node``."""
        path = []
        while node != self.root:
            path.append(node)
            node = self.parent[node]
        return path[::-1]

    def sources_of(self, node: str) -> frozenset[str]:
        return frozenset((self.root,))

    @property
    def sources(self) -> tuple[str, ...]:
        return (self.root,)


def subtree_receivers(tree: MulticastTree, node: str) -> frozenset[str]:
    """Receivers attached to the subtree below link ``node``; ``{node}`` for a leaf."""
    return tree.receivers_below(node)


@dataclass(frozen=True)
class Link:
    id: str
    parent: str
    child: str
    pass_rate: float | None = None


class NodeKind(str, enum.Enum):
    SINGLE = "single"
    JOINT = "joint"
    SHARED = "shared"


class GeneralTopology:
    """A directed acyclic probing network with one or more sources.

    Every source has exactly one child, and the part of the network reached
    from any one source is a tree, so each probe has a unique route.  A
    node may still have several parents when routes of different sources
    merge (a joint node).
    """

    def __init__(self, links: Sequence[Link], sources: Iterable[str], *, validate: bool = True):
        self.links = tuple(links)
        self.sources = tuple(_sorted(set(sources)))
        if validate:
            self._validate()

    def __repr__(self) -> str:
        return f"GeneralTopology(sources={list(self.sources)}, links={len(self.links)})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, GeneralTopology):
            return NotImplemented
        return self.links == other.links and self.sources == other.sources

    def __hash__(self):
        return hash((self.links, self.sources))

    @cached_property
    def link_by_id(self) -> dict[str, Link]:
        return {link.id: link for link in self.links}

    @cached_property
    def link_between(self) -> dict[tuple[str, str], str]:
        return {(link.parent, link.child): link.id for link in self.links}

    @cached_property
    def nodes(self) -> tuple[str, ...]:
        found = set(self.sources)
        for link in self.links:
            found.update((link.parent, link.child))
        return tuple(_sorted(found))

    @cached_property
    def _parents(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, list[str]] = {}
        for link in self.links:
            out.setdefault(link.child, []).append(link.parent)
        return {c: tuple(_sorted(ps)) for c, ps in out.items()}

    @cached_property
    def _children(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, list[str]] = {}
        for link in self.links:
            out.setdefault(link.parent, []).append(link.child)
        return {p: tuple(_sorted(cs)) for p, cs in out.items()}

    def parents(self, node: str) -> tuple[str, ...]:
        return self._parents.get(node, ())

    def children(self, node: str) -> tuple[str, ...]:
        return self._children.get(node, ())

    @cached_property
    def receivers(self) -> tuple[str, ...]:
        return tuple(v for v in self.nodes if v not in self.sources and not self.children(v))

    def topological_order(self) -> list[str]:
        indegree = {v: len(self.parents(v)) for v in self.nodes}
        ready = deque(v for v in self.nodes if indegree[v] == 0)
        order = []
        while ready:
            v = ready.popleft()
            order.append(v)
            for c in self.children(v):
                indegree[c] -= 1
                if indegree[c] == 0:
                    ready.append(c)
        if len(order) != len(self.nodes):
            raise TopologyError("cycle", "directed cycle in the network")
        return order

    @cached_property
    def _reach(self) -> dict[str, frozenset[str]]:
        reach: dict[str, set[str]] = {v: set() for v in self.nodes}
        for s in self.sources:
            for v in self.source_tree_nodes(s):
                reach[v].add(s)
        return {v: frozenset(ss) for v, ss in reach.items()}

    def sources_of(self, node: str) -> frozenset[str]:
        """S(i): the sources whose probes can reach ``node``."""
        return self._reach[node]

    def source_tree_nodes(self, source: str) -> list[str]:
        """Nodes reached by ``source`` in breadth-first order."""
        order = [source]
        for v in order:
            order.extend(self.children(v))
        return order

    @cached_property
    def _receivers_below(self) -> dict[str, frozenset[str]]:
        below: dict[str, frozenset[str]] = {}
        for v in reversed(self.topological_order()):
            kids = self.children(v)
            below[v] = frozenset().union(*(below[c] for c in kids)) if kids else frozenset((v,))
        return below

    def receivers_below(self, node: str) -> frozenset[str]:
        try:
            return self._receivers_below[node]
        except KeyError:
            raise KeyError(f"unknown node {node!r}") from None

    @cached_property
    def joint_nodes(self) -> tuple[str, ...]:
        return tuple(v for v in self.nodes if len(self.parents(v)) >= 2)

    def is_tree(self) -> bool:
        return len(self.sources) == 1 and not self.joint_nodes

    def link_params(self) -> LinkParams | None:
        """Pass rates keyed by link id, or ``None`` if any link lacks one."""
        if any(link.pass_rate is None for link in self.links):
            return None
        return LinkParams({link.id: link.pass_rate for link in self.links})

    def as_tree(self) -> MulticastTree:
        if not self.is_tree():
            raise TopologyError("not-a-tree", "topology has several sources or a joint node")
        return MulticastTree(
            [(link.parent, link.child) for link in self.links],
            link_ids={link.child: link.id for link in self.links},
        )

    def tree_params(self) -> LinkParams | None:
        """Pass rates keyed by child node, matching :meth:`as_tree`."""
        if any(link.pass_rate is None for link in self.links):
            return None
        return LinkParams({link.child: link.pass_rate for link in self.links})

    def _validate(self) -> None:
        seen_ids = set()
        for link in self.links:
            if link.id in seen_ids:
                raise TopologyError("duplicate-link", f"link id {link.id} used twice")
            seen_ids.add(link.id)
            if link.parent == link.child:
                raise TopologyError("cycle", f"self loop on {link.parent}")
            if link.pass_rate is not None and not (0.0 < link.pass_rate <= 1.0):
                raise TopologyError("invalid-pass-rate", f"link {link.id}: {link.pass_rate}")
        if len(self.link_between) != len(self.links):
            raise TopologyError("duplicate-link", "two links join the same pair of nodes")
        if not self.sources:
            raise TopologyError("no-source", "at least one source is required")
        for s in self.sources:
            if self.parents(s):
                raise TopologyError("source-with-parent", f"source {s} has parents")
            if len(self.children(s)) != 1:
                raise TopologyError(
                    "source-with-multiple-children",
                    f"source {s} has {len(self.children(s))} children",
                )
        for v in self.nodes:
            if v not in self.sources and not self.parents(v):
                raise TopologyError("orphan", f"node {v} has no parent and is not a source")
        self.topological_order()
        for s in self.sources:
            seen = set()
            for v in self.source_tree_nodes(s):
                if v in seen:
                    raise TopologyError("multi-path", f"source {s} reaches node {v} twice")
                seen.add(v)


def classify_nodes(general: GeneralTopology) -> dict[str, NodeKind]:
    """Label every node single, joint (two or more parents) or shared
    (one parent but reached by two or more sources)."""
    kinds = {}
    for v in general.nodes:
        if len(general.parents(v)) >= 2:
            kinds[v] = NodeKind.JOINT
        elif len(general.sources_of(v)) >= 2:
            kinds[v] = NodeKind.SHARED
        else:
            kinds[v] = NodeKind.SINGLE
    return kinds


def parse_topology(text: str) -> GeneralTopology:
    links = []
    sources = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] == "source" and len(tokens) == 2:
            sources.append(tokens[1])
        elif tokens[0] == "link" and len(tokens) in (4, 5):
            rate = None
            if len(tokens) == 5:
                try:
                    rate = float(tokens[4])
                except ValueError:
                    raise FormatError(f"line {lineno}: bad pass rate {tokens[4]!r}") from None
            links.append(Link(tokens[1], tokens[2], tokens[3], rate))
        else:
            raise FormatError(f"line {lineno}: cannot parse {raw!r}")
    try:
        return GeneralTopology(links, sources)
    except TopologyError as exc:
        raise FormatError(f"invalid topology: {exc}") from exc


def format_topology(topology: GeneralTopology | MulticastTree, params: Mapping[str, float] | None = None) -> str:
    """Serialize to the text format.  Floats use ``repr`` so parsing the
    output reproduces the same values bit for bit."""
    lines = []
    if isinstance(topology, MulticastTree):
        lines.append(f"source {topology.root}")
        for parent, child in topology.edges:
            rate = None if params is None else params.get(child)
            lines.append(_link_line(topology.link_ids.get(child, child), parent, child, rate))
    else:
        lines.extend(f"source {s}" for s in topology.sources)
        for link in topology.links:
            rate = link.pass_rate if params is None else params.get(link.id)
            lines.append(_link_line(link.id, link.parent, link.child, rate))
    return "\n".join(lines) + "\n"


def _link_line(link_id, parent, child, rate) -> str:
    if rate is None:
        return f"link {link_id} {parent} {child}"
    return f"link {link_id} {parent} {child} {float(rate)!r}"


def load_topology(path: str | Path) -> GeneralTopology:
    return parse_topology(Path(path).read_text())


def save_topology(topology, path: str | Path, params=None) -> None:
    Path(path).write_text(format_topology(topology, params))
