"""Exception types raised across the package."""


class KineticHJError(Exception):
    """Base class for all library errors."""


class InvalidSignal(KineticHJError, ValueError):
    pass


class InvalidDomain(KineticHJError, ValueError):
    pass


class DegenerateKernel(KineticHJError):
    pass


class ExpansionInvalid(KineticHJError):
    pass


class TimestepTooLarge(KineticHJError):
    pass


class SchemeFailure(KineticHJError):
    pass


class SupportMismatch(KineticHJError):
    pass


class SingularHamiltonian(KineticHJError):
    pass


class RootBracketError(KineticHJError):
    pass


class FormulaDomainError(KineticHJError, ValueError):
    pass


class NoPositiveRoot(KineticHJError):
    pass


class BoundaryDegenerate(KineticHJError):
    pass


class ConcentrationDetected(KineticHJError):
    pass


class Escaped(KineticHJError):
    pass


class AppendixViolation(KineticHJError, AssertionError):
    pass


class ConfigError(KineticHJError, ValueError):
    pass
