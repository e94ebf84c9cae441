class HetcovError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(HetcovError, ValueError):
    """One or more configuration problems; ``problems`` lists all of them."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class InsufficientPoints(HetcovError):
    pass


class ZeroMass(HetcovError):
    """The truncation level lies where the power CDF underflows to zero."""


class ConvergenceError(HetcovError):
    pass


class TailNotConverged(ConvergenceError):
    pass


class InversionUnstable(ConvergenceError):
    pass


class QuadratureNotConverged(ConvergenceError):
    pass


class InsufficientConditionalSamples(HetcovError):
    pass


class DegenerateSigma(HetcovError, ValueError):
    """A shadowing spread of zero makes the power law atomic (no density)."""
