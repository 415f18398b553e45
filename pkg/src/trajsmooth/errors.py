"""Exception types shared across the package."""


class TrajsmoothError(Exception):
    """Base class for all package errors."""


class ContractError(TrajsmoothError):
    """A caller violated a documented precondition (dimension mismatch, bad range, ...)."""


class SingularMatrixError(TrajsmoothError):
    """A covariance required to be invertible is numerically singular even after jitter."""


class InfeasibleAssignmentError(TrajsmoothError):
    """No feasible row-to-column assignment exists (some row has only forbidden entries)."""


class ConfigError(TrajsmoothError):
    """A configuration file or dict is malformed; message carries the field path."""


class SizeCapError(TrajsmoothError):
    """An exhaustive computation would exceed its configured size cap."""
