"""Multicast loss tomography with estimators matched to the observed data class.

Typical use::

    from losstomo import MulticastTree, LinkParams, simulate_tree, estimate_tree

    tree = MulticastTree([("0", "1"), ("1", "2"), ("1", "3")])
    obs = simulate_tree(tree, LinkParams({"1": 0.9, "2": 0.8, "3": 0.85}), 10_000, seed=1)
    result = estimate_tree(obs, tree)
"""

from __future__ import annotations

from .classifier import Classification, DataClass, PartitionStructure, classify_node
from .errors import (
    CapExceededError,
    CompleteExclusionError,
    DegenerateDataError,
    FormatError,
    InconsistentObservationError,
    InvalidGroupingError,
    LossTomographyError,
    NoInformationError,
    TopologyError,
)
from .estimators import (
    Estimate,
    LinkEstimate,
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
from .multisource import (
    MultiObsClass,
    classify_joint,
    decompose,
    estimate_general,
    estimate_joint,
)
from .simulator import ObservationMatrix, simulate_general, simulate_tree
from .statistics import NodeStats, intersection_counts, node_stats, pooled_stats
from .topology import GeneralTopology, Link, LinkParams, MulticastTree, parse_topology

__version__ = "0.1.0"
