"""Exception hierarchy.

Every error raised by the library derives from :class:`AnisofracError` so the
CLI can map it onto its exit-code contract. Config problems derive from
:class:`ConfigError`; numerical breakdowns from :class:`NumericalError`.
"""


class AnisofracError(Exception):
    """Base class for all library errors."""


class ConfigError(AnisofracError):
    """Invalid user input (expressions, config files, function specs)."""


class NumericalError(AnisofracError):
    """A computation could not produce a trustworthy number."""


class InvariantError(AnisofracError):
    """A mathematical precondition or invariant does not hold."""


# -- exponent expressions -------------------------------------------------


class ExpressionSyntaxError(ConfigError):
    def __init__(self, position, expected, src=""):
        self.position = position
        self.expected = tuple(sorted(expected))
        self.src = src
        super().__init__(
            f"syntax error at offset {position}: expected one of "
            f"{', '.join(self.expected)}"
        )


class UnknownIdentifier(ConfigError):
    def __init__(self, name, position):
        self.name = name
        self.position = position
        super().__init__(f"unknown identifier {name!r} at offset {position}")


class ExponentEvaluationError(NumericalError):
    """Division by zero, non-finite values or bad clamp bounds at evaluation."""


class ExponentOutOfRange(InvariantError):
    def __init__(self, component, pair, value):
        self.component = component
        self.pair = pair
        self.value = value
        super().__init__(
            f"exponent {component} takes value {value!r} at pair {pair}; "
            "values must be finite and exceed 1 + 1e-9"
        )


class SupercriticalOrder(InvariantError):
    """s * p_i(x, x) >= N, so the critical exponent is undefined."""


# -- meshes and quadrature ------------------------------------------------


class BadResolution(ConfigError):
    pass


class CollarTooSmall(ConfigError):
    pass


class NonFiniteIntegrand(NumericalError):
    pass


class AsymmetricKernel(InvariantError):
    pass


# -- norms ----------------------------------------------------------------


class BracketFailure(NumericalError):
    pass


# -- operators and solver -------------------------------------------------


class RExponentTooLarge(InvariantError):
    pass


class InvalidExponentOrdering(InvariantError):
    pass


class EmptyFamily(ConfigError):
    pass


class LambdaOutOfRange(InvariantError, ValueError):
    pass


class GeometryViolated(InvariantError):
    def __init__(self, message, witness=None):
        self.witness = witness
        super().__init__(message)


class ValleyNotFound(NumericalError):
    pass


class MaxIterExceeded(NumericalError):
    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


class BoundaryTrap(NumericalError):
    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


# -- configuration --------------------------------------------------------


class ConfigParseError(ConfigError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class ConfigValidationError(ConfigError):
    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")
