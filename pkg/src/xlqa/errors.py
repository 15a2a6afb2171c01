"""Exception types shared across the package.

The CLI maps these onto exit codes: InputError -> 2, StateError -> 3.
"""


class XlqaError(Exception):
    """Base class for package errors."""


class InputError(XlqaError):
    """Malformed input data or invalid configuration."""


class StateError(XlqaError):
    """Corrupt or incompatible persisted state (checkpoints, logs)."""
