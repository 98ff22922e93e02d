"""Exception types shared across the package."""


class NCLaplaceError(Exception):
    """Base class for all package errors."""


class DomainError(NCLaplaceError):
    """Evaluation requested outside the surface's parameter interval."""


class SingularPointError(NCLaplaceError):
    """Classical operator evaluated at a point where the area density vanishes."""


class ConsistencyError(NCLaplaceError):
    """An internal identity that should hold to rounding was violated."""


class DegenerateMetricError(NCLaplaceError):
    """All eigenvalues of the quantized area density fell below threshold."""


class NotRevolutionSurfaceError(NCLaplaceError):
    """Operation requires a theta-independent metric (equal equatorial axes)."""


class DenseSizeError(NCLaplaceError):
    """Dense superoperator assembly refused above the size cap."""


class SolverConvergenceError(NCLaplaceError):
    """Eigenvalue solver did not converge to the requested tolerance."""


class ResolutionError(NCLaplaceError):
    """Finite-difference grid too coarse to resolve the requested eigenvalues."""


class ConfigError(NCLaplaceError):
    """Inconsistent or invalid run configuration."""
