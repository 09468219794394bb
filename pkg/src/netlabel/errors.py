"""Exception hierarchy for netlabel.

Data-format problems raise subclasses of :class:`NetworkFormatError` with the
offending file line in the message; contract violations on in-memory objects
raise the remaining classes directly.
"""


class NetlabelError(Exception):
    """Base class for all library errors."""


class NetworkFormatError(NetlabelError):
    """Malformed node/edge/record file content."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnknownNodeInEdge(NetworkFormatError):
    """Edge references a node id absent from the node table."""


class DuplicateEdge(NetworkFormatError):
    """The same (src, dst, kind) edge appears more than once."""


class SelfLoopEdge(NetworkFormatError):
    """Edge with identical endpoints."""


class NonFiniteFeature(NetworkFormatError):
    """A feature value is NaN or infinite."""


class InconsistentFeatureArity(NetworkFormatError):
    """A node row carries a different number of features than the header."""


class AllLabelsRemoved(NetlabelError):
    """Rare-category filtering removed every labeled node."""


class EmptyLabelSet(NetlabelError):
    """An operation requiring labeled nodes received a network without any."""


class NoTrainingLabels(NetlabelError):
    """The training partition contains no labeled nodes."""


class InstanceTooLarge(NetlabelError):
    """Exhaustive enumeration was requested beyond the configuration guard."""


class NoProposableSite(NetlabelError):
    """A Markov chain has no free node to propose moves for."""


class DimensionMismatch(NetlabelError):
    """Array shapes are incompatible with the declared model dimensions."""


class EmptyCorpus(NetlabelError):
    """Mutual-information table construction received no usable documents."""


class SchemaMismatch(NetlabelError):
    """A raw record value contradicts the declared feature schema."""
