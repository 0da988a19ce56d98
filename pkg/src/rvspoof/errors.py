"""Exception types shared across the package.

The CLI maps :class:`InputError` subclasses to exit code 2 and every other
:class:`RvSpoofError` to exit code 1.
"""


class RvSpoofError(Exception):
    """Base class for domain failures."""


class InputError(RvSpoofError):
    """Malformed or unusable input (bad names, unparsable files)."""


class ParseError(InputError):
    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}: "
        if line is not None:
            where += f"line {line}: "
        super().__init__(where + message)


class UnknownSensor(InputError):
    pass


class UnclassifiableFlow(RvSpoofError):
    pass


class CombinationUnsupported(RvSpoofError):
    pass


class DuplicateVector(ParseError):
    pass


class UnknownFlowReference(ParseError):
    pass


class IncompatibleTransform(RvSpoofError):
    pass


class NoRoute(RvSpoofError):
    pass


class TargetNotFound(RvSpoofError):
    pass


class NoAcceptedSamples(RvSpoofError):
    pass


class BudgetExhausted(RvSpoofError):
    def __init__(self, message, similarity, injected=()):
        super().__init__(message)
        self.similarity = similarity
        self.injected = tuple(injected)
