"""Exception types raised by shrinkcount."""


class ShrinkCountError(Exception):
    pass


class DomainError(ShrinkCountError, ValueError):
    """An argument lies outside the support or parameter space."""


class FamilyMismatch(ShrinkCountError, ValueError):
    pass


class UnsupportedPenalty(ShrinkCountError, ValueError):
    pass


class InvalidV(ShrinkCountError, ValueError):
    pass


class ParseError(ShrinkCountError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConstraintError(ParseError):
    pass


class ConfigError(ShrinkCountError, ValueError):
    """Raised with every validation problem found in a config, not just the first."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
