"""Exception types shared across the package."""


class CurationError(Exception):
    """Base class for all package errors."""


class LengthNotMultipleOfThree(CurationError):
    pass


class InternalStopCodon(CurationError):
    pass


class EmptyTranslation(CurationError):
    pass


class InvalidSequence(CurationError):
    """Characters outside the expected alphabet (ambiguity codes, digits, ...)."""


class MalformedFasta(CurationError):
    pass


class DuplicateId(CurationError):
    pass


class EmptySequence(CurationError):
    pass


class WrongAlignmentKind(CurationError):
    pass


class EmptyReferenceSet(CurationError):
    pass


class UnknownReferenceId(CurationError):
    pass


class ActiveSitePositionOutOfRange(CurationError):
    pass


class UnannotatedRecord(CurationError):
    pass


class MissingScore(CurationError):
    pass


class NonNumericScore(CurationError):
    pass


class EmptyTable(CurationError):
    pass


class OrientationMismatch(CurationError):
    pass


class TooManyMutationsForProtectedSet(CurationError):
    pass


class ConfigError(CurationError):
    pass


class ManifestMismatch(CurationError):
    pass


class StageError(CurationError):
    """Wraps an error raised inside a pipeline stage with the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
