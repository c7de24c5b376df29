"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid grid, problem, preconditioner, or run configuration."""


class GridMismatchError(ValueError):
    """Two fields (or a field and a solver object) live on different grids."""


class NotCoerciveError(RuntimeError):
    """A preconditioner turned out indefinite or degenerate where coercivity
    was required (e.g. the optimal-metric kind away from a minimizer)."""


class SolveError(RuntimeError):
    """An iterative inverse ran out of iterations; carries the residual it reached."""

    def __init__(self, message: str, achieved_residual: float | None = None):
        super().__init__(message)
        self.achieved_residual = achieved_residual


class LineSearchError(RuntimeError):
    """Backtracking exhausted its halvings without satisfying descent."""


class EigensolverError(RuntimeError):
    """The sparse eigensolver failed to reach the requested residual tolerance."""


class DivergenceError(RuntimeError):
    """Energy increased on an accepted step beyond round-off allowance."""
