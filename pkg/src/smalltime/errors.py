"""
Exception types raised across the smalltime package.

Each error derives from the builtin exception a caller would naturally catch
(``ValueError`` for bad input, ``NotImplementedError`` for unsupported model /
scheme combinations, ``RuntimeError`` for numerical failures), so code that only
knows about the builtins keeps working.
"""


class SmallTimeError(Exception):
    """Base class of every smalltime error."""


class UnsupportedModel(SmallTimeError, NotImplementedError):
    """The model has no representation for the requested quantity (e.g. no diffusion part)."""


class SchemeUnavailable(SmallTimeError, NotImplementedError):
    """The requested simulation scheme is not available for this model."""


class OutOfScope(SmallTimeError, NotImplementedError):
    """The model lies outside the hypotheses of the requested bound."""


class StepUnstable(SmallTimeError, RuntimeError):
    """A simulation step produced non-finite values."""


class QuadratureFailure(SmallTimeError, RuntimeError):
    """Numerical integration did not reach the requested tolerance."""


class StatisticalFailure(SmallTimeError, RuntimeError):
    """Monte Carlo noise made an estimate unusable."""


class MappingDomain(SmallTimeError, ValueError):
    """A simulated state left the domain of the mapping f."""


class NoArbViolation(SmallTimeError, ValueError):
    """An option price lies outside the no-arbitrage bounds."""


class DegenerateLimit(SmallTimeError, ValueError):
    """The Gaussian limit law is degenerate, so the requested check does not apply."""


class ShapeMismatch(SmallTimeError, ValueError):
    """Matrix or vector shapes do not conform."""


class ConfigError(SmallTimeError, ValueError):
    """A run configuration or model description is malformed."""
