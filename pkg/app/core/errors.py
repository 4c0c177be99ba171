class TorsionLabError(Exception):
    """Base class for every error raised by the workbench."""


class ConfigError(TorsionLabError, ValueError):
    pass


class DomainError(TorsionLabError, ValueError):
    """Numeric input outside the domain of an operation (non-positive scale, odd k, ...)."""


class InvalidGeneratorError(TorsionLabError, IndexError):
    pass


class ContractViolation(TorsionLabError, ValueError):
    """Shapes, annotations or symmetry do not match what the operation requires."""


class UnsupportedStructureError(TorsionLabError):
    """The closed-form path does not recognise the spectrum; use the heat-split path."""


class FitError(TorsionLabError):
    pass


class TheoremViolation(TorsionLabError):
    """A property the theory guarantees failed numerically."""


class ContourError(TorsionLabError):
    pass


class NumericalRankError(TorsionLabError):
    pass
