"""Exception types shared across the package."""


class FormatError(ValueError):
    """A binary or text file does not match its declared format."""

    def __init__(self, message, offset=None, path=None):
        self.offset = offset
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte offset {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class ConfigError(ValueError):
    """An experiment, training or solver configuration is invalid."""


class SolverDiverged(ArithmeticError):
    """An iterate became non-finite."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"solver diverged at iteration {iteration}")


class TrainingDiverged(ArithmeticError):
    """The training loss became non-finite."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"training diverged at step {step}")
