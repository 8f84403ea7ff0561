"""Exception taxonomy shared across the toolkit.

Exit-code mapping for the CLI: usage errors exit 2 (argparse), DataError and
its subclasses exit 3, ContractViolation (internal invariant breach) exit 4.
"""


class ChatmineError(Exception):
    """Base class for all toolkit errors."""


class DataError(ChatmineError):
    """Bad or unusable input data (missing files, single-class labels, ...)."""


class ConfigError(DataError):
    """Invalid or inconsistent configuration (dim mismatches, bad paths)."""


class ContractViolation(ChatmineError):
    """An internal precondition was violated; indicates a caller bug."""
