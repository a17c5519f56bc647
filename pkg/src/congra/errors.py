"""Exception hierarchy shared across the package."""


class CongraError(Exception):
    """Base class for all errors raised by this package."""


class GrammarSyntaxError(CongraError):
    def __init__(self, message, source, line, col):
        super().__init__(f"{source}:{line}:{col}: {message}")
        self.source = source
        self.line = line
        self.col = col


class GrammarValidationError(CongraError):
    """Raised when a loaded grammar fails validation; carries the diagnostics."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = "; ".join(str(d) for d in self.diagnostics)
        super().__init__(f"invalid grammar: {lines}")


class UnknownNameError(CongraError):
    pass


class EmptyInputError(CongraError):
    pass


class NoParseError(CongraError):
    """No candidate rooted in a root construction; carries partial edges."""

    def __init__(self, message, partials=()):
        super().__init__(message)
        self.partials = list(partials)


class UnresolvedPronounError(CongraError):
    pass


class SpecializeError(CongraError):
    """No template for the root schema, or a mandatory role is missing."""


class NTupleFormatError(CongraError):
    pass


class WorldFormatError(CongraError):
    pass


class NestedAmbiguityError(CongraError):
    """A nested definite descriptor grounded to more than one object."""

    def __init__(self, message, descriptor):
        super().__init__(message)
        self.descriptor = descriptor


class PlanError(CongraError):
    pass


class ContradictionError(CongraError):
    pass


class CodecError(CongraError):
    pass


class ProtocolError(CongraError):
    pass
