from typing import Optional


class HorizonKitError(Exception):
    """Base error. `exit_code` is what the CLI returns when this escapes a command."""

    exit_code = 2


class AxisError(HorizonKitError):
    pass


class ToleranceError(HorizonKitError):
    pass


class EmptyInputError(HorizonKitError):
    pass


class DistributionError(HorizonKitError):
    pass


class DegenerateReferenceError(HorizonKitError):
    pass


class InsufficientHistoryError(HorizonKitError):
    def __init__(self, position: int, n_samples: int):
        self.position = position
        self.n_samples = n_samples
        super().__init__(f"Cycle position {position} has {n_samples} non-missing samples, need at least 2")


class DegenerateHistoryError(HorizonKitError):
    pass


class BurnInError(HorizonKitError):
    pass


class CoverageError(HorizonKitError):
    pass


class OrientationError(HorizonKitError):
    pass


class InputOrderError(HorizonKitError):
    pass


class ParameterError(HorizonKitError):
    pass


class ConfigError(HorizonKitError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class FormatError(HorizonKitError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IoError(HorizonKitError):
    exit_code = 3
