"""Exception hierarchy shared by the simulator modules."""


class ChemotaxError(Exception):
    """Base class for all simulator errors."""


class ParameterError(ChemotaxError, ValueError):
    """An argument is outside its admissible range."""


class DataIntegrityError(ChemotaxError):
    """A field or functional contains NaN or Inf."""


class ContractViolation(ChemotaxError):
    """A precondition of a discrete operator was violated (e.g. nonzero boundary flux)."""


class PositivityError(ChemotaxError):
    """A field that must stay positive (or nonnegative) did not."""

    def __init__(self, message, index=None, value=None):
        super().__init__(message)
        self.index = index
        self.value = value


class StepSizeError(ChemotaxError):
    """Requested time step exceeds the stability bound."""


class SolverError(ChemotaxError):
    """The iterative linear solver failed to reach its tolerance."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class ConfigError(ChemotaxError):
    """Configuration text failed validation; carries every violation found."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
