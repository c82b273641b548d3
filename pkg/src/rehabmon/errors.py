"""Exception types shared across the pipeline."""

from __future__ import annotations


class SequenceFormatError(ValueError):
    """Raised when an ingestion document or sequence value violates the schema."""


class IndeterminateResult(RuntimeError):
    """Raised when a pipeline stage cannot produce a defined answer.

    Examples: counting repetitions on a sequence shorter than the smoothing
    window, or scoring similarity when every angle is excluded from the
    calibration profile.
    """
