"""Exception hierarchy shared by the simulator modules."""


class DecBisectError(Exception):
    """Base class for all package errors."""


class ParameterError(DecBisectError, ValueError):
    """An argument is outside its admissible range."""


class DomainError(ParameterError):
    """A position or probability lies outside [0, 1]."""


class ContractViolation(DecBisectError):
    """A caller-side precondition that the callee can check was broken."""


class PreconditionError(ContractViolation):
    pass


class NumericalError(DecBisectError, ArithmeticError):
    """An iterative routine failed to converge."""


class GenerationError(DecBisectError):
    """Random graph generation gave up."""


class InvariantViolation(DecBisectError):
    """A theory diagnostic failed on a simulated trajectory.

    ``kind`` names the check (``"martingale"``, ``"lambda"``, ``"lemma5"``) and
    ``eff_iter`` / ``b`` locate the first failing row.
    """

    def __init__(self, kind, eff_iter, b, value, message=None):
        self.kind = kind
        self.eff_iter = eff_iter
        self.b = b
        self.value = value
        super().__init__(
            message
            or f"{kind} check failed at eff_iter={eff_iter}, b={b}: value={value!r}"
        )
