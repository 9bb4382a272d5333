"""Exception types shared by all modules."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class SizeError(ValueError):
    """A problem instance exceeds a hard size cap (block count, pattern size, n)."""
