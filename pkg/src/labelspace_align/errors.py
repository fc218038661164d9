"""Exception types shared across the package."""


class LabelAlignError(Exception):
    """Base class for every error raised by this package."""


class MissingFileError(LabelAlignError):
    """A required file or directory does not exist."""


class BadMagicError(LabelAlignError):
    """A binary file does not start with the expected magic/version."""


class DimMismatchError(LabelAlignError):
    """Declared and actual shapes disagree."""


class NonFiniteEntryError(LabelAlignError):
    """A NaN or Inf appeared where only finite values are allowed."""


class NotNormalizedError(LabelAlignError):
    """A matrix declared unit-normalized has a row that is not."""


class EmptyPromptListError(LabelAlignError):
    """Prompt averaging was called with no vectors."""


class ZeroRowError(LabelAlignError):
    """A row to be normalized has zero L2 norm."""


class ZeroVectorError(LabelAlignError):
    """A cosine similarity was requested against a zero vector."""


class EmptyInputError(LabelAlignError):
    """An operation requiring at least one element received none."""


class UnknownDatasetError(LabelAlignError):
    """A dataset name is not among a unified space's sources."""


class IndexOutOfRangeError(LabelAlignError):
    """A label index is outside the target label space."""


class InvalidSpecError(LabelAlignError):
    """A synthetic-corpus specification violates its invariants."""


class HoldoutLeakError(LabelAlignError):
    """A concept meant to be held out appears in a training dataset."""


class EmptyCorpusError(LabelAlignError):
    """Sampling weights were requested for an empty corpus."""


class ChecksumMismatchError(LabelAlignError):
    """An artifact was produced against a different label space."""


class NonFiniteLossError(LabelAlignError):
    """Training produced a NaN/Inf loss; aborted without clipping."""


class EmptyLabelSpaceError(LabelAlignError):
    """Prediction was requested against an empty label space."""


class MalformedBoxError(LabelAlignError):
    """A bounding box does not satisfy x1 < x2 and y1 < y2."""


class LabelSpaceMismatchError(LabelAlignError):
    """Detections reference labels outside the evaluation label space."""
