"""Exception hierarchy shared by every module."""


class StochHJError(Exception):
    """Base class for all package errors."""


class ParameterError(StochHJError, ValueError):
    """Invalid or inconsistent numerical parameters."""


class AlignmentError(ParameterError):
    """A path or lattice grid does not align with the Brownian grid."""


class HorizonError(ParameterError):
    """A requested time lies outside the sampled Brownian horizon."""


class InfeasibleError(StochHJError):
    """The lattice cannot connect the requested endpoints."""


class TruncationError(StochHJError):
    """A minimizer or localization ball reached the lattice boundary."""


class ResolutionError(ParameterError):
    """The grid does not resolve the oscillation scale of the forcing."""


class StatisticsError(StochHJError):
    """Too few samples for the requested statistic."""


class InvariantError(StochHJError):
    """A structural invariant was violated beyond tolerance."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


class StepSizeError(ParameterError):
    """A time step violates the stability (CFL) restriction."""
