"""Exception taxonomy shared across the audit pipeline."""

from __future__ import annotations


class AuditError(Exception):
    """Base class for all errors raised by this package."""


class IoFailure(AuditError):
    """A corpus, fixture, or run file could not be read or written."""


class MalformedRecord(AuditError):
    """A corpus or run record violates its schema.

    Carries the record id and the offending field so batch loaders can
    report precisely which line is broken.
    """

    def __init__(self, record_id: str, field: str, reason: str = ""):
        self.record_id = record_id
        self.field = field
        self.reason = reason
        detail = f": {reason}" if reason else ""
        super().__init__(f"record {record_id!r}, field {field!r}{detail}")


class VersionMismatch(AuditError):
    """A recorded-run document declares an unsupported format version."""


class ParseFailure(AuditError):
    """Source text could not be tokenized even with fragment tolerance."""


class MissingTemplate(AuditError):
    """No instruction template exists for the requested attack."""


class MissingSlot(AuditError):
    """A template placeholder could not be filled from the task."""


class MutationBrokeTheParse(AuditError):
    """An attack produced source that no longer parses.

    Pipeline drivers catch this and record the slot as FailedPerturbation;
    it must never silently drop the slot.
    """


class EmptyLlmResponse(AuditError):
    """An LLM-backed attack was given an empty rewrite response."""


class NoComments(AuditError):
    """A comment-targeting attack found nothing to retain or rewrite."""


class DomainError(AuditError):
    """Estimator arguments violate their mathematical preconditions."""


class MissingBaseline(AuditError):
    """Deltas were requested but the run contains no baseline rows."""


class EmptyRun(AuditError):
    """A report was requested over a run directory with no usable rows."""


class ConfigError(AuditError):
    """The audit configuration is invalid; maps to exit code 2."""


class StageFault(AuditError):
    """A pipeline stage failed; carries the stage name for resumption."""

    def __init__(self, stage: str, reason: str):
        self.stage = stage
        super().__init__(f"stage {stage!r} failed: {reason}")
