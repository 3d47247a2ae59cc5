"""Exception hierarchy shared by all modules."""


class BBLabError(Exception):
    """Base class for library errors."""


class AmbientMismatch(BBLabError, ValueError):
    """Operands live in different ambient spaces."""


class CapExceeded(BBLabError):
    """An exhaustive enumeration would exceed the configured cap."""

    def __init__(self, what, needed, cap):
        super().__init__(f"{what}: {needed} objects exceeds enumeration cap {cap}")
        self.what = what
        self.needed = needed
        self.cap = cap


class PreconditionError(BBLabError, ValueError):
    """An operation was called outside its domain."""


class NoCertifiedSubspace(BBLabError):
    """Spectral extraction could not certify a subspace inside 2A-2A."""


class PartitionError(BBLabError):
    """Random 4-partition did not reach the required retained count."""

    def __init__(self, msg, best):
        super().__init__(msg)
        self.best = best


class TheoremViolation(BBLabError, AssertionError):
    """A property guaranteed by a theorem failed; indicates a bug."""


class ParseError(BBLabError, ValueError):
    def __init__(self, msg, line=None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + msg)
        self.line = line
