"""Exception taxonomy for the harness.

Every error that a caller is expected to catch has its own class; checks
that report problems as data (typecheck, leakage audit, sanity ladder)
do not raise and are absent here.
"""

from __future__ import annotations


class SlotbenchError(Exception):
    """Base class for all harness errors."""


# --- configuration / binding ------------------------------------------------

class ParseError(SlotbenchError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class UnresolvedDefault(SlotbenchError):
    """A defaults entry names a document that cannot be resolved."""


class InvalidOverridePath(SlotbenchError):
    """An override directive targets a non-existent branch without the `+` prefix."""


class DuplicateComponent(SlotbenchError):
    """(family, name) already registered."""


class RejectedDescriptor(SlotbenchError):
    """A component descriptor omits a required capability declaration."""


# --- assumption ledger -------------------------------------------------------

class MissingDefault(SlotbenchError):
    """No framework default (and no null-default) for a NOT_SPECIFIED row."""


# --- control plane -----------------------------------------------------------

class AlreadyInitialized(SlotbenchError):
    pass


class OutOfOrder(SlotbenchError):
    """Phase transition attempted while a predecessor is incomplete."""


class RetriesExhausted(SlotbenchError):
    pass


class MissingArtifact(SlotbenchError):
    def __init__(self, slots):
        self.slots = list(slots)
        super().__init__(f"missing required artifact slot(s): {', '.join(self.slots)}")


class CorruptArtifact(SlotbenchError):
    def __init__(self, slot: str, reason: str = ""):
        self.slot = slot
        super().__init__(f"artifact {slot} is corrupt{': ' + reason if reason else ''}")


class SchemaViolation(SlotbenchError):
    pass


class NotARun(SlotbenchError):
    """Directory holds no run state and no reconcilable artifacts."""


# --- data pipeline -----------------------------------------------------------

class EmptyTrainSplit(SlotbenchError):
    pass


class UnknownChannel(SlotbenchError):
    pass


# --- trainer -----------------------------------------------------------------

class ShapeMismatch(SlotbenchError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class NonFiniteGradient(SlotbenchError):
    """Raised by the optimizer on NaN/inf gradients.

    Carries the slot families implicated for failure attribution.
    """

    def __init__(self, message: str, implicated=("model", "transform")):
        self.implicated = tuple(implicated)
        super().__init__(message)


# --- evaluation --------------------------------------------------------------

class EmptyEvaluation(SlotbenchError):
    pass


class DegenerateRange(SlotbenchError):
    """Ground-truth range is zero; nMAE is undefined at this scale."""


class IncompatibleBaseline(SlotbenchError):
    """Baseline model does not satisfy the task contract of the config."""


# --- repair ------------------------------------------------------------------

class WhitelistViolation(SlotbenchError):
    """A repair patch targets a path outside the mutable-slot whitelist."""
