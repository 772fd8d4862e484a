from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _support import binary_tree, random_tree, two_source_topology
from losstomo.errors import FormatError, TopologyError
from losstomo.topology import (
    GeneralTopology,
    Link,
    LinkParams,
    MulticastTree,
    NodeKind,
    classify_nodes,
    format_topology,
    parse_topology,
    subtree_receivers,
    validate_tree,
)


def _kind(edges, **kw):
    with pytest.raises(TopologyError) as info:
        MulticastTree(edges, **kw)
    return info.value.kind


def test_smallest_legal_tree():
    tree = MulticastTree([("r", "a"), ("a", "leaf")])
    validate_tree(tree)
    assert tree.root == "r"
    assert tree.receivers == ("leaf",)
    assert tree.internal_nodes == ("a",)


def test_root_with_two_children_is_rejected():
    assert _kind([("r", "a"), ("r", "b")]) == "root-with-multiple-children"


def test_back_edge_is_a_cycle():
    assert _kind([("r", "a"), ("a", "leaf"), ("leaf", "r")]) == "cycle"


def test_detached_cycle():
    assert _kind([("r", "a"), ("x", "y"), ("y", "x")]) == "cycle"


def test_multi_parent_and_multi_root():
    assert _kind([("r", "a"), ("a", "c"), ("b", "c"), ("r2", "b")]) == "multi-parent"
    assert _kind([("r", "a"), ("r2", "b")]) == "multi-root"


def test_childless_internal_node_needs_declared_receivers():
    assert _kind([("r", "a"), ("a", "b"), ("a", "c")], receivers=["b"]) == "childless-internal-node"
    MulticastTree([("r", "a"), ("a", "b"), ("a", "c")], receivers=["b", "c"])


def test_subtree_receivers_examples():
    tree = binary_tree()
    assert subtree_receivers(tree, "5") == {"5"}
    assert subtree_receivers(tree, "2") == {"4", "5"}
    assert subtree_receivers(tree, "1") == {"4", "5", "6", "7"}
    with pytest.raises(KeyError):
        subtree_receivers(tree, "nope")


def test_receiver_sets_partition_below_every_node():
    rng = np.random.default_rng(11)
    for _ in range(50):
        tree = random_tree(rng)
        for k in tree.internal_nodes:
            parts = [tree.receivers_below(c) for c in tree.children(k)]
            assert frozenset().union(*parts) == tree.receivers_below(k)
            assert sum(len(p) for p in parts) == len(tree.receivers_below(k))
        covered = [r for leaf in tree.receivers for r in subtree_receivers(tree, leaf)]
        assert sorted(covered) == sorted(tree.receivers)


def test_link_params_range():
    with pytest.raises(ValueError):
        LinkParams({"1": 0.0})
    with pytest.raises(ValueError):
        LinkParams({"1": 1.5})
    p = LinkParams({"1": 1.0, "2": 0.25})
    assert p.loss_rate("2") == 0.75


def test_classify_nodes_examples():
    kinds = classify_nodes(two_source_topology())
    assert kinds["c"] is NodeKind.JOINT
    assert kinds["d"] is NodeKind.SHARED and kinds["r3"] is NodeKind.SHARED
    assert kinds["a"] is NodeKind.SINGLE and kinds["r1"] is NodeKind.SINGLE
    tree_only = parse_topology(format_topology(binary_tree()))
    assert set(classify_nodes(tree_only).values()) == {NodeKind.SINGLE}


def test_classify_nodes_invariant_under_relabeling():
    topo = two_source_topology()
    rename = {v: f"n{i}" for i, v in enumerate(reversed(topo.nodes))}
    relabeled = GeneralTopology(
        [Link(l.id, rename[l.parent], rename[l.child], l.pass_rate) for l in topo.links],
        [rename[s] for s in topo.sources],
    )
    before = classify_nodes(topo)
    after = classify_nodes(relabeled)
    assert all(after[rename[v]] is kind for v, kind in before.items())


def test_sources_of():
    topo = two_source_topology()
    assert topo.sources_of("c") == {"s1", "s2"}
    assert topo.sources_of("r1") == {"s1"}
    assert topo.joint_nodes == ("c",)


@pytest.mark.parametrize(
    "text,kind",
    [
        ("source s\nsource t\nlink 1 s a\nlink 2 t a\nlink 3 a s\n", "source-with-parent"),
        ("source s\nlink 1 s a\nlink 2 s b\n", "source-with-multiple-children"),
        ("link 1 a b\n", "no-source"),
        ("source s\nlink 1 s a\nlink 1 a b\n", "duplicate-link"),
        ("source s\nlink 1 s a\nlink 2 a b\nlink 3 a c\nlink 4 b d\nlink 5 c d\n", "multi-path"),
        ("source s\nlink 1 s a\nlink 2 x b\n", "orphan"),
        ("source s\nlink 1 s a 0\n", "invalid-pass-rate"),
    ],
)
def test_general_topology_errors(text, kind):
    with pytest.raises(FormatError) as info:
        parse_topology(text)
    assert isinstance(info.value.__cause__, TopologyError)
    assert info.value.__cause__.kind == kind


def test_parse_rejects_garbage():
    with pytest.raises(FormatError):
        parse_topology("source s\nlinky 1 s a\n")
    with pytest.raises(FormatError):
        parse_topology("source s\nlink 1 s a zero\n")


def test_comments_and_blank_lines():
    topo = parse_topology("# a comment\n\nsource 0  # the source\nlink 1 0 1 0.5\n")
    assert topo.sources == ("0",) and topo.links[0].pass_rate == 0.5


rates = st.floats(min_value=1e-9, max_value=1.0, allow_nan=False, exclude_min=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(rates, min_size=7, max_size=7))
def test_round_trip_is_bit_exact(values):
    tree = binary_tree()
    params = dict(zip(tree.links, values))
    text = format_topology(tree, params)
    topo = parse_topology(text)
    assert format_topology(topo) == text
    assert parse_topology(format_topology(topo)) == topo
    assert topo.tree_params() == LinkParams(params)
    assert topo.as_tree() == tree
