"""Exception types shared across the pipeline stages."""

from __future__ import annotations


class DocRefineError(Exception):
    """Base class for every error raised by this package."""


class IRFormatError(DocRefineError, ValueError):
    """A serialized IR payload is malformed. ``path`` addresses the bad field."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


class ValidationError(DocRefineError):
    """An IR produced by the pipeline violates its invariants (a bug)."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations[:5])
        more = f" (+{len(self.violations) - 5} more)" if len(self.violations) > 5 else ""
        super().__init__(f"IR failed validation: {lines}{more}")


class IngestError(DocRefineError):
    """The input document could not be read or parsed."""


# --- backend -------------------------------------------------------------


class BackendError(DocRefineError):
    """Base for model-call failures.

    Stages attach ``element_id`` or ``op_id`` before re-raising so the caller
    can tell which part of the document triggered the failure.
    """

    element_id: str | None = None
    op_id: int | None = None

    def __str__(self) -> str:
        base = super().__str__()
        ctx = []
        if self.element_id is not None:
            ctx.append(f"element={self.element_id}")
        if self.op_id is not None:
            ctx.append(f"op={self.op_id}")
        return f"{base} [{', '.join(ctx)}]" if ctx else base


class TransportError(BackendError):
    """Network / HTTP failure that persisted after all retries."""


class SchemaError(BackendError):
    """Model output did not validate against the declared schema, even after repair."""

    def __init__(self, message: str, raw_text: str = ""):
        self.raw_text = raw_text
        super().__init__(message)


class MockMiss(BackendError):
    """Mock backend has no scripted response for a request."""

    def __init__(self, stage_tag: str, digest: str):
        self.stage_tag = stage_tag
        self.digest = digest
        super().__init__(f"no mock script entry for stage {stage_tag} (digest {digest[:12]})")


# --- stages --------------------------------------------------------------


class UnresolvableTarget(DocRefineError):
    def __init__(self, target: str):
        self.target = target
        super().__init__(f"operation target {target!r} does not exist in the document")


class OpValidationError(DocRefineError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid operations: " + "; ".join(str(v) for v in self.violations))


class EmptyGeneration(BackendError):
    """Summarization returned blank text twice."""


class GuardViolation(DocRefineError):
    """An element that no operation targeted was modified. Always a bug."""


class DimensionMismatch(DocRefineError, ValueError):
    pass


class ZeroVector(DocRefineError, ValueError):
    pass


class PipelineError(DocRefineError):
    """A stage failed inside the closed loop; ``trace`` holds the iterations completed so far."""

    def __init__(self, message: str, trace):
        self.trace = trace
        super().__init__(message)
