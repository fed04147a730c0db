"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(RuntimeError):
    """A precondition of an operation was violated by the caller."""


class CheckpointError(RuntimeError):
    """A checkpoint file does not match the parameter store it is loaded into."""


class DatasetParseError(ValueError):
    def __init__(self, path, line_no, reason):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no
        self.reason = reason


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss)."""
