"""Exception hierarchy shared across the package."""


class ReinflectionError(Exception):
    """Base class for all package errors."""


class EmptyTag(ReinflectionError, ValueError):
    pass


class BadSchema(ReinflectionError, ValueError):
    pass


class EmptyForm(ReinflectionError, ValueError):
    pass


class ParseError(ReinflectionError, ValueError):
    def __init__(self, line, message="malformed row"):
        self.line = line
        super().__init__(f"line {line}: {message}")


class ConflictError(ReinflectionError, ValueError):
    pass


class UnknownLemma(ReinflectionError, KeyError):
    pass


class TooFewInstances(ReinflectionError, ValueError):
    pass


class SpecError(ReinflectionError, ValueError):
    pass


class ShapeMismatch(ReinflectionError, ValueError):
    pass


class IndexOutOfRange(ReinflectionError, IndexError):
    pass


class NonDeterministicLoss(ReinflectionError, RuntimeError):
    pass


class AllMasked(ReinflectionError, ValueError):
    pass


class EmptySplit(ReinflectionError, ValueError):
    pass


class LengthMismatch(ReinflectionError, ValueError):
    pass


class InstanceMismatch(ReinflectionError, ValueError):
    pass


class CheckpointError(ReinflectionError, IOError):
    pass
