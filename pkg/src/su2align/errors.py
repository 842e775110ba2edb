"""Exception types raised across the library."""


class Su2AlignError(Exception):
    """Base class for all library-specific errors."""


class NonConvergence(Su2AlignError):
    """Jacobi eigensolver failed to reduce the off-diagonal norm in time."""


class DegenerateInput(Su2AlignError):
    """Observation set cannot constrain a rotation (e.g. empty input)."""


class SingularMobius(Su2AlignError):
    """Estimated Moebius transform has (near-)zero determinant."""


class AntipodalSingularity(Su2AlignError):
    """Cross-product aligner is undefined for (near-)antipodal vectors."""


class DegenerateFrame(Su2AlignError):
    """Two-point solver input has vanishing cross products; no unique
    solution exists. Use degenerate_two_point instead."""


class DegenerateAxes(Su2AlignError):
    """6D rotation-map input axes are (near-)parallel or (near-)zero."""


class EigGapTooSmall(Su2AlignError):
    """Smallest eigenvalue is not numerically simple; the eigenvector map
    (and its derivative) is ill-defined."""


class DegenerateAlgebraic(Su2AlignError):
    """Algebraic SU(2) projection hit a vanishing parameter vector."""


class ConfigError(Su2AlignError):
    """Benchmark experiment configuration is invalid."""
