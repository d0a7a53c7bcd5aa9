"""Exception hierarchy shared by all modules."""


class DoobCondError(Exception):
    """Base class for every error raised by this package."""


class NonConvergence(DoobCondError):
    """A numerical routine exhausted its budget before meeting its tolerance."""


class Divergent(DoobCondError):
    """An improper integral was classified as divergent."""


class NonFinite(DoobCondError, ArithmeticError):
    """A function produced inf/nan, or an argument was outside a math domain."""


class DivisionByZero(NonFinite, ZeroDivisionError):
    pass


class ExprSyntaxError(DoobCondError, SyntaxError):
    """Malformed coefficient expression.

    ``offset`` is the 1-based character position of the offending token,
    matching the convention of the builtin :class:`SyntaxError`.
    """

    def __init__(self, msg, text, offset):
        SyntaxError.__init__(self, msg, ("<expr>", 1, offset, text))
        self.msg = msg
        self.text = text
        self.offset = offset

    def __str__(self):
        return f"{self.msg} at offset {self.offset}"


class UnknownIdentifier(ExprSyntaxError):
    pass


class AssumptionViolated(DoobCondError):
    """The diffusion does not converge to its left boundary."""


class OutOfDomain(DoobCondError, ValueError):
    pass


class ConfigInvalid(DoobCondError, ValueError):
    pass


class NoAcceptedPaths(DoobCondError):
    """Rejection sampling accepted no path at all."""


class UnsupportedPreset(DoobCondError, ValueError):
    pass


class EmptySample(DoobCondError, ValueError):
    pass
