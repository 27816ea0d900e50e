"""Exception types shared across the library."""


class InvalidMeshError(Exception):
    """A cell map has a nonpositive Jacobian determinant somewhere."""

    def __init__(self, cell, min_det):
        self.cell = cell
        self.min_det = min_det
        super().__init__(
            f"cell {cell} is invalid: min det J = {min_det:.6e} <= 0"
        )


class InvalidCoefficientError(Exception):
    """The diffusion tensor failed a symmetry or positivity check."""


class UnsupportedConfigurationError(Exception):
    """A requested problem configuration is outside what the library supports."""


class SolverFailureError(Exception):
    """A linear solve did not reach the requested residual."""

    def __init__(self, message, residual=None, iterations=None):
        self.residual = residual
        self.iterations = iterations
        if residual is not None:
            message = f"{message} (relative residual {residual:.3e})"
        super().__init__(message)
