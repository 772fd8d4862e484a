"""Exception hierarchy shared by every module."""

from __future__ import annotations


class LossTomographyError(Exception):
    """Base class for all errors raised by :mod:`losstomo`."""

    tag = "error"


class TopologyError(LossTomographyError):
    """A topology violates one of its structural invariants.

    ``kind`` names the first violated invariant, e.g. ``"cycle"`` or
    ``"multi-parent"``.
    """

    tag = "topology"

    def __init__(self, kind: str, message: str = ""):
        self.kind = kind
        super().__init__(f"{kind}: {message}" if message else kind)


class FormatError(LossTomographyError):
    """A topology, observation or statistics file could not be parsed."""

    tag = "format"


class NoInformationError(LossTomographyError):
    """No probe was observed below the node, so nothing can be estimated."""

    tag = "no-information"


class CompleteExclusionError(LossTomographyError):
    """The descendants' observations never intersect.

    The likelihood equation collapses and has no solution; more probes
    are needed to create intersections.
    """

    tag = "complete-exclusion"


class DegenerateDataError(LossTomographyError):
    """The likelihood equation has no sign change in the admissible range."""

    tag = "degenerate"


class InvalidGroupingError(LossTomographyError):
    """The two groups of a grouping transformation never observe a probe jointly."""

    tag = "invalid-grouping"


class CapExceededError(LossTomographyError):
    """Full subset enumeration was requested beyond the configured fan-out cap."""

    tag = "cap-exceeded"


class InconsistentObservationError(LossTomographyError):
    """Individual and global observations of a shared subtree disagree.

    Raised instead of producing an estimate for joint nodes whose data fall
    into the (others, perfect) or (others, others) classes.
    """

    tag = "inconsistent-observation"

    def __init__(self, node, obs_class, individual, recommendation="send more probes"):
        self.node = node
        self.obs_class = obs_class
        self.individual = dict(individual)
        self.recommendation = recommendation
        per_source = ", ".join(f"{s}={c}" for s, c in sorted(self.individual.items()))
        super().__init__(
            f"node {node}: observation class {obs_class} ({per_source}); {recommendation}"
        )
