"""Exception types shared across the package."""


class LipcertError(Exception):
    """Base class for every error this package raises deliberately."""


class InvalidInputError(LipcertError):
    """A tensor argument violates a precondition (non-finite values, bad interval)."""


class ShapeError(LipcertError):
    """An argument's shape does not match the operator or network contract."""


class ConfigError(LipcertError):
    """A configuration value is out of range (negative radius, zero batch size)."""


class ModelFormatError(LipcertError):
    """A model manifest, weight blob, or input file is malformed; messages name the layer."""


class MaterializeCapError(LipcertError):
    """Refusing to materialize an operator larger than the configured entry cap."""


class NumericalError(LipcertError):
    """A numerical routine failed hard (strict-mode power-iteration non-convergence)."""
