"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration value violates its invariant.

    ``field`` names the offending field so callers can report it before any
    computation starts.
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class DomainError(ValueError):
    """Argument outside the mathematical domain of a function."""


class ShapeError(ValueError):
    """Array dimensions do not match what the model expects."""


class ModelLookupError(KeyError):
    """Unknown word, phone or vocabulary entry."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class UndefinedLikelihoodError(ValueError):
    """Likelihood requested for an empty observation sequence."""


class EmptyInputError(ValueError):
    """Decoder called on a feature matrix with no frames."""


class UndefinedMetricError(ZeroDivisionError):
    """Metric whose denominator is zero (no reference words, no speech)."""


class SearchSpaceError(ValueError):
    """Exhaustive search requested over too many hypotheses."""
