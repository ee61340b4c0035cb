"""Exception hierarchy shared across the package."""


class ConfcoordError(Exception):
    """Base class for all package-specific errors."""


class JetCompatibilityError(ConfcoordError):
    """Arithmetic between jets with different center, dimension, or order."""


class JetDomainError(ConfcoordError):
    """Elementary function applied outside its domain (log/sqrt/pow of
    a non-positive value, division by a jet with zero value)."""


class JetOrderError(ConfcoordError):
    """Requested derivative order exceeds the truncation order of a jet."""


class DegenerateMetricError(ConfcoordError):
    """Metric evaluation produced a singular or badly conditioned matrix,
    or the wrong signature for the declared metric type."""


class DimensionError(ConfcoordError):
    """Operation not defined in the requested dimension."""


class AssemblyError(ConfcoordError):
    """Discrete operator assembly failed; the message names the node."""


class ConstructionFailure(ConfcoordError):
    """Prescribed-solution construction exhausted its shrink budget."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ChartFailure(ConfcoordError):
    """Coordinate chart construction failed (singular Jacobian, negative
    denominator solution, or propagated solver failure)."""


class InversionFailure(ConfcoordError):
    """Newton inversion of a chart diverged or left the chart domain."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class StabilityError(ConfcoordError):
    """Explicit time integration blew up."""


class ConfigError(ConfcoordError):
    """Scenario configuration is malformed or references unknown resources."""
