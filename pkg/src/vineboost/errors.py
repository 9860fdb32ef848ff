"""Exception hierarchy shared across the package."""


class VineBoostError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(VineBoostError, ValueError):
    """An argument lies outside its mathematical domain."""


class InterfaceError(VineBoostError, ValueError):
    """Shapes, labels or dimensions of inputs do not line up."""


class ConfigurationError(VineBoostError, ValueError):
    """A control/config object is inconsistent or infeasible for the data."""


class StructureError(VineBoostError, ValueError):
    """A vine tree sequence violates the regular-vine conditions."""


class EvaluationError(VineBoostError, ArithmeticError):
    """A numerical evaluation produced a non-finite or out-of-range result."""


class FitError(VineBoostError):
    """All candidate fits failed; carries per-candidate diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
