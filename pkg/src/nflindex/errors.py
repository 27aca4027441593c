"""Module containing custom exceptions for the nflindex package."""
from __future__ import annotations
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from typing import Optional


class NflIndexError(Exception):
    """
    Base exception class for the nflindex package.
    """


class ConfigurationError(NflIndexError):
    """
    Exception raised for problems with the configuration.
    """


class CodecError(NflIndexError):
    """
    Exception raised for errors in the key codec.
    """


class DegenerateRange(CodecError):
    """
    Exception raised when a codec is fitted on keys whose maximum equals their minimum.

    The scale divisor would be zero, so no normalization can be derived from such a key set.
    """


class FlowError(NflIndexError):
    """
    Exception raised for errors when evaluating or training the normalizing flow.
    """


class ShapeMismatch(FlowError):
    """
    Exception raised when a feature vector does not have the dimensionality the flow was built for.
    """


class FlowDiverged(FlowError):
    """
    Exception raised when a training step produces a non-finite loss or gradient.

    The step is aborted before any parameter is touched.
    """


class FlowFileError(NflIndexError):
    """
    Exception raised for problems with flow parameter files.
    """


class BadMagic(FlowFileError):
    """
    Exception raised when a flow file does not start with the expected magic bytes.
    """


class TruncatedFile(FlowFileError):
    """
    Exception raised when a flow file ends before all declared fields were read.
    """


class VersionMismatch(FlowFileError):
    """
    Exception raised when a flow file was written with an unsupported format version.
    """
    def __init__(self, *args: object, version: Optional[int] = None) -> None:
        super().__init__(*args)
        self.version: Optional[int] = version


class ConflictError(NflIndexError):
    """
    Exception raised for errors when computing conflict metrics.
    """


class EmptyHistogram(ConflictError):
    """
    Exception raised when a tail conflict degree is requested for a histogram without occupied positions.
    """


class IndexOperationError(NflIndexError):
    """
    Exception raised for errors of index operations.

    Batch execution records these errors as per-operation outcomes instead of propagating them.
    """


class DuplicateKey(IndexOperationError):
    """
    Exception raised when bulk loading receives keys that are not strictly increasing.
    """


class AlreadyExists(IndexOperationError):
    """
    Exception raised when inserting a key that is already stored.
    """


class NotFound(IndexOperationError):
    """
    Exception raised when updating or deleting a key that is not stored.
    """


class OutOfKeySpace(IndexOperationError):
    """
    Exception raised when inserting a key outside the span of the bulk-loaded keys.
    """


class DepthExceeded(IndexOperationError):
    """
    Exception raised when modelling recurses deeper than the configured maximum depth.
    """


class IndexAuditError(IndexOperationError):
    """
    Exception raised by the structural audit when an index invariant does not hold.
    """
    def __init__(self, *args: object, path: str = '') -> None:
        super().__init__(*args)
        self.path: str = path


class WorkloadError(NflIndexError):
    """
    Exception raised for errors when generating datasets and operation streams.
    """


class FileFormatError(WorkloadError):
    """
    Exception raised when a binary key file cannot be interpreted.
    """


class InsufficientUnique(WorkloadError):
    """
    Exception raised when a generator cannot produce the requested number of unique keys.
    """


class ExhaustedInserts(WorkloadError):
    """
    Exception raised when a workload asks for more insertions than keys were reserved for inserting.
    """


class VerificationError(NflIndexError):
    """
    Exception raised when a differential check finds results that differ from the reference map.
    """
    def __init__(self, *args: object, mismatches: int = 0) -> None:
        super().__init__(*args)
        self.mismatches: int = mismatches
