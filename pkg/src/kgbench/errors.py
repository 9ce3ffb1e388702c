"""Exception hierarchy for kgbench.

Every contract failure raises a named subclass of :class:`KgBenchError` so
callers (and the CLI) can distinguish usage errors from data errors.
"""


class KgBenchError(Exception):
    """Base class for all kgbench errors."""


class EmptyInputError(KgBenchError):
    """An operation received an empty collection where data is required."""


class UnknownLabelError(KgBenchError):
    """A label is missing from a frozen vocabulary."""


class DuplicateLabelError(KgBenchError):
    """A label occurs twice with conflicting ids."""


class SplitOverlapError(KgBenchError):
    """Train/dev/test splits share at least one triple."""


class MalformedLineError(KgBenchError):
    """A triple or dictionary file line does not have the expected fields."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class BadMagicError(KgBenchError):
    """Checkpoint file does not start with the expected magic bytes."""


class LengthMismatchError(KgBenchError):
    """Checkpoint payload length disagrees with its header."""


class NonFiniteValueError(KgBenchError):
    """A tensor contains NaN or infinite values."""


class EmptyReportError(KgBenchError):
    """An evaluation report was requested over zero ranks."""


class EmptyResultError(KgBenchError):
    """A filtering stage produced an empty result."""


class InfeasibleSplitError(KgBenchError):
    """Requested dev/test sizes cannot be met under the coverage guarantee."""


class UndeclaredRelationError(KgBenchError):
    """A dataset relation has no declaration in the ontology schema."""


class DimMismatchError(KgBenchError):
    """Parameter dimensions are inconsistent with the model tag."""


class UnknownModelError(KgBenchError):
    """Model tag is not one of the supported six."""


class UnknownPresetError(KgBenchError):
    """No published hyperparameter preset for this (model, dataset) pair."""


class InvalidKError(KgBenchError):
    """A count argument must be at least 1."""


class NonFiniteGradientError(KgBenchError):
    """A gradient contains NaN or infinite values."""


class EmptyTestSetError(KgBenchError):
    """Evaluation was requested on an empty test split."""


class UnseenEntityError(KgBenchError):
    """A triple references an id with no trained parameter row."""
