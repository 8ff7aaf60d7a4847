"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class ConfigurationError(ValueError):
    """Inconsistent or unusable configuration (folds, radii, oracle requests)."""


class DataIntegrityError(ValueError):
    """Input data is malformed: missing rows, non-finite values, wrong schema."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class SingularCorrectionError(ValueError):
    """The conditional residual derivative is too close to zero for some row."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class NumericFailureError(ArithmeticError):
    """Loss or gradient became non-finite during optimization."""

    def __init__(self, message, iteration):
        super().__init__(message)
        self.iteration = iteration
