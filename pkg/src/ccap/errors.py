"""Exception hierarchy mapped to CLI exit codes."""

from __future__ import annotations


class CcapError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 1


class UsageError(CcapError):
    """Bad command-line arguments or malformed configuration."""

    exit_code = 1


class DataError(CcapError):
    """Unreadable, inconsistent, or contract-violating input data."""

    exit_code = 2


class TrainingError(CcapError):
    """A model or resampling stage failed to run to completion."""

    exit_code = 3
