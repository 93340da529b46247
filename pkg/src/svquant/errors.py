class DomainError(ValueError):
    """A function was evaluated outside its mathematical domain."""


class ConfigurationError(ValueError):
    """Inconsistent model, grid or instrument configuration."""


class SingularMatrixError(ArithmeticError):
    """Zero pivot in the tridiagonal solve."""


class ConvergenceError(RuntimeError):
    """Newton-Raphson did not reach the gradient tolerance.

    ``gradient_norm`` is the max-abs gradient at the last iterate and ``step``
    the time index being quantized, when known.
    """

    def __init__(self, message, gradient_norm=float("nan"), step=None):
        super().__init__(message)
        self.gradient_norm = gradient_norm
        self.step = step

    def __str__(self):
        msg = super().__str__()
        if self.step is not None:
            msg = f"time step {self.step}: {msg}"
        return f"{msg} (last gradient max-abs {self.gradient_norm:.3e})"


class InversionError(ValueError):
    """Option price outside the arbitrage bounds of the implied-vol model."""
