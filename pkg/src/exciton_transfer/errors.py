"""Exception and warning types raised across the package."""


class InvalidModelError(ValueError):
    """Parameters that do not describe a valid model."""


class ContractViolation(ValueError):
    """An input object breaks an invariant the callee relies on."""


class IntegrationFailure(RuntimeError):
    """Time integration lost trace, Hermiticity or positivity.

    Attributes
    ----------
    diagnostics : dict
        Time, trace, minimum eigenvalue and step statistics at failure.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ConvergenceError(RuntimeError):
    """A truncation or iterative procedure did not converge."""


class UndefinedRateError(ValueError):
    """The transfer-rate estimator has a vanishing denominator."""


class FitError(RuntimeError):
    """Nonlinear least squares failed; carries residual diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class CutoffWarning(UserWarning):
    """Population reached the highest Fock level kept."""


class TruncationWarning(UserWarning):
    """A series was cut off with non-negligible tail mass."""


class UnreliableScanWarning(UserWarning):
    """Sweep grid too coarse to resolve the resonance linewidth."""


class DegenerateSteadyStateWarning(UserWarning):
    """The generator has more than one stationary state."""
