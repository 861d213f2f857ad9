"""Exception hierarchy shared by every logiclusters module."""


class LogiclustersError(Exception):
    """Base class; the CLI maps any subclass to exit status 1."""


class ParseError(LogiclustersError):
    """A document could not be read; ``location`` names the line or field."""

    def __init__(self, message, location=None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class ValidationError(LogiclustersError):
    """Structurally valid input that violates a domain invariant."""


class MappingError(LogiclustersError):
    """A hostname from the process registry has no node in the partition."""

    def __init__(self, host):
        self.host = host
        super().__init__(f"host {host!r} is not a member of any subnet")


class TransportError(LogiclustersError):
    """Connection level failure.  Usually worth retrying."""


class ProtocolError(LogiclustersError):
    """The peer spoke, but not the expected protocol."""


class RendezvousTimeout(LogiclustersError):
    def __init__(self, missing):
        self.missing = sorted(missing)
        super().__init__(
            "rendezvous deadline expired; missing ranks: "
            + ", ".join(str(r) for r in self.missing))


class EstimationError(LogiclustersError):
    """Raw timings cannot support a parameter estimate."""


class CompletenessError(LogiclustersError):
    def __init__(self, task_id):
        self.task_id = task_id
        super().__init__(f"no result for measurement task {task_id}")


class SpecError(LogiclustersError):
    """A synthetic scenario description is incomplete or inconsistent."""
