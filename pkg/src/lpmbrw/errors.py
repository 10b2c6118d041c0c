"""Exception hierarchy shared by every module of the package."""


class LpmBrwError(Exception):
    """Base class for all package errors."""


class AssumptionViolated(LpmBrwError, ValueError):
    """A model specification breaks one of the standing assumptions A1-A3."""

    def __init__(self, assumption, message):
        self.assumption = assumption
        super().__init__(f"assumption {assumption} violated: {message}")


class OutOfDomain(LpmBrwError, ValueError):
    """The cumulant was requested outside the domain where m(theta) is finite."""


class NumericFailure(LpmBrwError, ArithmeticError):
    """A numerical routine produced non-finite values."""


class RequiresFiniteTheta0(LpmBrwError, ValueError):
    """The operation needs a finite tangency point theta0."""


class InvalidRegime(LpmBrwError, ValueError):
    """The requested theta is in a regime the operation does not cover."""


class InvalidMu(LpmBrwError, ValueError):
    """The last-generation law mu is not positively supported with finite mean."""


class PopulationCapExceeded(LpmBrwError, MemoryError):
    """A generation would hold more particles than the configured cap."""

    def __init__(self, generation, size, cap=None):
        self.generation = generation
        self.size = size
        self.cap = cap
        msg = f"generation {generation} would hold {size} particles"
        if cap is not None:
            msg += f" (cap {cap})"
        super().__init__(msg)


class TooFewSamples(LpmBrwError, ValueError):
    """Not enough observations for the requested statistic."""


class TooFewPoints(LpmBrwError, ValueError):
    """Not enough distinct generation counts for a regression."""


class DegenerateSample(LpmBrwError, ValueError):
    """The sample has zero spread, so scale-type estimates are undefined."""


class ConfigError(LpmBrwError, ValueError):
    """An experiment configuration is malformed."""
