class CoresetError(Exception):
    """Base exception for all coreset inference errors."""
    pass


class ShapeError(CoresetError, ValueError):
    """Raised when array shapes do not line up."""
    pass


class UnboundVariableError(CoresetError):
    """Raised when a tape variable has no binding at evaluation time."""
    pass


class NotOnTapeError(CoresetError):
    """Raised when a node or variable is not recorded on the tape being swept."""
    pass


class NotScalarError(CoresetError):
    """Raised when a gradient is requested for a non-scalar output."""
    pass


class NonFiniteError(CoresetError):
    """Raised when an input or intermediate value is NaN or infinite."""
    pass


class DegenerateWeightsError(NonFiniteError):
    """Raised when every importance log-weight is non-finite."""
    pass


class NonFiniteLossError(NonFiniteError):
    """Raised when a training loss turns non-finite."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message if iteration is None else f"{message} (iteration {iteration})")
        self.iteration = iteration


class ConfigurationError(CoresetError, ValueError):
    """Raised when an experiment or model configuration is invalid."""
    pass


class DatasetError(CoresetError):
    """Raised when a dataset cannot be loaded or used."""
    pass


class MalformedLineError(DatasetError):
    """Raised when a line of a sparse text file cannot be parsed."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class EmptyCandidatePoolError(CoresetError):
    """Raised when greedy selection has nothing to choose from."""
    pass


class ArtifactError(CoresetError):
    """Raised when a saved artifact cannot be read back."""
    pass


class MethodAlreadyRegisteredError(CoresetError):
    pass


class MethodResolutionError(CoresetError):
    pass


class InvalidLabelError(CoresetError, ValueError):
    """Raised when a class index lies outside [0, C)."""
    pass


class RunFailedError(CoresetError):
    """Raised after a multi-seed run wrote error reports for some of its seeds."""

    def __init__(self, message: str, errors):
        super().__init__(message)
        self.errors = list(errors)
