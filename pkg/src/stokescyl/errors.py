"""Exception types raised across the package."""


class GridError(ValueError):
    """Invalid cross-section grid specification."""


class ConvergenceError(RuntimeError):
    """An iterative procedure exhausted its budget."""


class DegenerateModeError(ValueError):
    """The axial phase eta vanishes, so the mode problem has a nullspace."""


class ParameterError(ValueError):
    """Spectral parameters outside the admissible region."""


class SolverError(RuntimeError):
    """Linear solve failed or left a residual above tolerance."""


class SupportError(ValueError):
    """Forcing is not confined to the central part of the axial torus."""


class ConfigError(ValueError):
    """Invalid experiment configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
