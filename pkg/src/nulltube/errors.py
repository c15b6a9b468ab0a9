"""Exception hierarchy.

Every error carries an ``exit_code`` used by the CLI:
2 = configuration, 3 = domain/geometry, 4 = solver, 5 = verification failure.
"""


class NulltubeError(Exception):
    exit_code = 1


class ConfigurationError(NulltubeError):
    """Bad chart name, parameter, file schema or CLI configuration."""
    exit_code = 2


class ChartLoadError(ConfigurationError):
    """Malformed or inconsistent chart/surface/tube file."""


class DomainError(NulltubeError):
    """Point outside a chart's validity rectangle or angular patch."""
    exit_code = 3


class DegenerateMetricError(NulltubeError):
    """Assembled metric is numerically singular."""
    exit_code = 3


class StencilError(NulltubeError):
    """A finite-difference stencil does not fit inside the domain."""
    exit_code = 3


class DegenerateGraphError(NulltubeError):
    """|det B| too small: the graph parametrization degenerates."""
    exit_code = 3


class NotSpacelikeError(NulltubeError):
    """Induced metric of a surface is not positive definite."""
    exit_code = 3


class FrameDegeneracyError(NulltubeError):
    """Null-frame discriminant non-positive (tangent-to-null configuration)."""
    exit_code = 3


class PreconditionError(NulltubeError):
    """Operation preconditions violated (e.g. non-constant graph function)."""
    exit_code = 3


class SolverError(NulltubeError):
    """Root solver failed to converge."""
    exit_code = 4


class NoRootError(SolverError):
    """No sign change in the search bracket (no marginal surface there)."""


class NotReparametrizableError(SolverError):
    """|dh/ds̄| too small for the implicit reparametrization."""


class VerificationError(NulltubeError):
    """An asserted tolerance was not met."""
    exit_code = 5
