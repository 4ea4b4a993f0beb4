"""Exception types shared across heatlab modules."""


class HeatLabError(Exception):
    """Base class for all heatlab errors."""


class NonFinite(HeatLabError):
    """A matrix or field contains NaN/Inf where finite values are required."""


class ParamError(HeatLabError):
    """Constructor parameters violate a documented constraint."""


class DomainError(HeatLabError):
    """Evaluation requested outside a solution's validity domain."""


class BoundaryIndex(HeatLabError):
    """Stencil index too close to the grid boundary."""


class UnsupportedProfile(HeatLabError):
    """Profile lacks a property the operation needs (e.g. compact support)."""


class QuadratureUnderresolved(HeatLabError):
    """Successive node-count doublings failed to agree."""


class DivergentMass(HeatLabError):
    """Radial quadrature of a profile does not converge."""


class ConfigError(HeatLabError):
    """Malformed experiment configuration."""


class CheckFailure(HeatLabError):
    """An experiment check failed (report still written)."""


class SchemaMismatch(HeatLabError):
    """Reports with different schema versions cannot be merged."""
