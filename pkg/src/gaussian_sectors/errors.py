"""Exception hierarchy shared by all modules.

Each class carries an ``exit_code`` so the CLI can map failures onto its
documented process exit status without string matching.
"""


class SectorError(Exception):
    exit_code = 1


class DomainError(SectorError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""
    exit_code = 2


class ConfigError(SectorError, ValueError):
    exit_code = 2


class InvariantError(SectorError, ArithmeticError):
    """An internal mathematical invariant failed (e.g. a composite slipped into a prime table)."""
    exit_code = 3


class NumericError(SectorError, ArithmeticError):
    """A numerical procedure could not reach its requested tolerance."""
    exit_code = 3

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class DegenerateInputError(SectorError, ValueError):
    exit_code = 2


class UnsupportedPointError(DomainError):
    """A prediction was requested at (or too close to) a bifurcation point."""


class ResourceError(SectorError, MemoryError):
    exit_code = 4


class CacheError(SectorError, IOError):
    exit_code = 4


class CacheHeaderError(CacheError):
    pass


class CacheTruncatedError(CacheError):
    pass


class CacheMismatchError(CacheError):
    pass
