"""Exception hierarchy.

Everything raised on bad *input data* derives from :class:`InputError`, which
the command line maps to exit status 2.
"""


class InputError(ValueError):
    """Invalid topology, configuration, or data file."""


class GraphMLParseError(InputError):
    """Malformed XML or GraphML."""


class EmptyTopologyError(InputError):
    """Fewer than two usable nodes."""


class TopologyError(InputError):
    """A topology invariant does not hold."""


class ConfigurationError(InputError):
    """Inconsistent run configuration (empty gateway set, bad case, ...)."""


class NoPathError(InputError):
    """No path between two nodes."""


class PlacementError(ValueError):
    """A placement violates one of the placement/assignment constraints."""


class SolverLimitError(ValueError):
    """Candidate set too large for exact search."""
