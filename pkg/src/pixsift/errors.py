"""Exception taxonomy shared by all pixsift modules."""

from __future__ import annotations


class PixsiftError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(PixsiftError):
    """Caller supplied an impossible configuration or argument (CLI exit 2)."""


# --- manifest / record layer ---

class ParseError(PixsiftError):
    """Malformed JSON/NDJSON or a file that does not match the expected schema."""


class InvariantError(PixsiftError):
    """A data invariant was violated (duplicate id, non-finite score, ...)."""


class IoError(PixsiftError):
    """Filesystem-level failure while reading or writing an artifact."""


# --- stage engine ---

class MissingScoreError(PixsiftError):
    """A record lacks a score key that an operation requires."""


class ConfigError(UsageError):
    """Pipeline configuration references something that cannot be resolved."""


# --- dedup ---

class DimensionMismatch(PixsiftError):
    """Descriptor or feature vectors of unequal dimension were combined."""


class MissingRecordError(PixsiftError):
    """A descriptor set references an image_id with no matching record."""


# --- activation estimator ---

class MissingMapError(PixsiftError):
    """An expected (layer, token) attention map is absent."""


class DuplicateMapError(PixsiftError):
    """More than one attention map was supplied for one (layer, token) cell."""


class ShapeMismatch(PixsiftError):
    """Activation matrices of incompatible shape were combined."""


class KTooLarge(UsageError):
    """Requested top-K exceeds the number of available (layer, token) cells."""


class UnfittedError(PixsiftError):
    """Scoring was attempted with a separation table that has no top-k set."""


# --- evaluation statistics ---

class IncompleteVotesError(PixsiftError):
    """A (prompt, criterion) pair does not have exactly 3 distinct votes."""


class DomainError(UsageError):
    """A statistic was requested outside its valid domain (e.g. k > n)."""


# --- metrics ---

class DegenerateInput(PixsiftError):
    """Too few samples to estimate the requested moments."""


class NonPsdError(PixsiftError):
    """A covariance matrix is not positive semi-definite beyond jitter."""


class EmptyInput(PixsiftError):
    """An aggregate was requested over an empty score set."""


# --- caption client ---

class TransportError(PixsiftError):
    """HTTP transport failed after all retry attempts."""


class BadResponseError(PixsiftError):
    """The captioning endpoint returned a payload violating the wire schema."""


class EmptyCaptionError(PixsiftError):
    """The captioning endpoint returned an empty caption."""
