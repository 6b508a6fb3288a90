"""
Exception types shared by the services and agents
"""


class PhaseDiscriminationError(ValueError):
    """Base class for all domain errors raised by the services"""


class DomainError(PhaseDiscriminationError):
    """Physical parameters outside their valid range"""


class ArityError(PhaseDiscriminationError):
    """Operation requires a constellation of a different size"""


class TimeMismatchError(PhaseDiscriminationError):
    """Filter clock and update time disagree"""


class UnknownLabelError(PhaseDiscriminationError):
    """Label is not a member of the constellation"""


class ConfigError(PhaseDiscriminationError):
    """Experiment config could not be parsed or validated"""


class SchemaError(PhaseDiscriminationError):
    """Result file does not have the expected columns"""
