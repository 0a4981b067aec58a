"""Exception hierarchy shared by every engine."""


class DfpbError(Exception):
    """Base class. ``kind`` is the short tag printed by the CLI."""

    kind = "error"


class ValidationError(DfpbError, ValueError):
    kind = "validation"


class DomainError(DfpbError, ValueError):
    """An argument refers to something that does not exist (e.g. a district id)."""

    kind = "domain"


class InfeasibleError(DfpbError):
    kind = "infeasible"


class CapabilityError(DfpbError):
    """The requested engine cannot handle this input size."""

    kind = "capability"


class ApplicabilityError(DfpbError):
    """The instance does not satisfy an engine's structural preconditions."""

    kind = "applicability"
