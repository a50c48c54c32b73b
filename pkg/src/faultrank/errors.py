"""Exception types shared across the toolkit."""


class FaultRankError(Exception):
    """Base class for all toolkit errors."""


class MalformedSourceError(FaultRankError):
    """Source file cannot be parsed (unbalanced braces)."""

    def __init__(self, path: str, offset: int, detail: str = "unbalanced braces"):
        self.path = path
        self.offset = offset
        super().__init__(f"{path}: {detail} at offset {offset}")


class RevisionOrderError(FaultRankError):
    """Revisions supplied out of order or non-consecutively."""


class UnresolvedReferenceError(FaultRankError):
    """A record references an entity that does not exist."""


class CorpusFormatError(FaultRankError):
    """A corpus file line could not be parsed."""

    def __init__(self, path: str, line_no: int, detail: str):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {detail}")


class GraphStoreError(FaultRankError):
    """A persisted graph store is corrupt or unreadable."""


class VocabularyError(FaultRankError):
    """A token id is outside the embedding vocabulary."""


class ShapeError(FaultRankError):
    """Tensor operands have incompatible shapes."""


class EmptySequenceError(FaultRankError):
    """An operation requiring a nonempty sequence received an empty one."""


class DegenerateInputError(FaultRankError):
    """An input record carries no usable content (e.g. a method with no tokens)."""


class NumericError(FaultRankError):
    """A computation produced or received a non-finite value."""


class PlanningError(FaultRankError):
    """Evaluation folds cannot be planned from the given reports."""


class EmptyEvaluationError(FaultRankError):
    """Metrics requested over an empty report set."""


class CheckpointError(FaultRankError):
    """A model checkpoint is missing, corrupt, or incompatible."""
