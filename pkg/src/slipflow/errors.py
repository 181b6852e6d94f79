"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An operation was called outside its documented preconditions."""


class MeshGenerationError(ValueError):
    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class WallCrossingError(MeshGenerationError):
    def __init__(self, message, location):
        super().__init__(message)
        self.location = location


class CompatibilityError(ValueError):
    """Right-hand side of a Neumann-type problem does not have zero mean."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class ProfileVectorError(ValueError):
    def __init__(self, message, check):
        super().__init__(message)
        self.check = check


class SingularProblemError(RuntimeError):
    """Saddle-point system has a nontrivial kernel (e.g. rigid rotations)."""

    def __init__(self, message, kernel_dimension):
        super().__init__(message)
        self.kernel_dimension = kernel_dimension


class NonFiniteResidualError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history
