"""Error taxonomy shared by the library and the CLI.

Exit-code mapping used by the CLI: UsageError -> 1, DataError -> 2,
NumericalError -> 3. Anything else is a bug and propagates.
"""


class IgadError(Exception):
    """Base class for errors raised deliberately by this package."""

    exit_code = 1


class UsageError(IgadError):
    """Bad arguments, bad config keys, out-of-range options."""

    exit_code = 1


class DataError(IgadError):
    """Malformed or inconsistent input data (files, shapes, labels)."""

    exit_code = 2


class NumericalError(IgadError):
    """Non-finite values where the contract requires finite ones."""

    exit_code = 3
