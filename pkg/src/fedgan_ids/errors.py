from __future__ import annotations


class FedGanError(Exception):
    """Base class for errors raised by this package."""


class ContractViolation(FedGanError, ValueError):
    """A precondition of an operation does not hold (shapes, time order, ranges)."""


class NumericalError(FedGanError, ArithmeticError):
    def __init__(self, message: str, *, layer_index: int) -> None:
        super().__init__(f"{message} (layer {layer_index})")
        self.layer_index = layer_index


class TrainingError(FedGanError):
    """A node cannot train, e.g. it holds no genuine samples."""


class AggregationError(FedGanError, ValueError):
    pass


class ConfigConflict(FedGanError, ValueError):
    """A config value rejected by a check that spans a whole model.

    `location` is the offending key path relative to that model.
    """

    def __init__(self, message: str, *, location: tuple[int | str, ...] = ()) -> None:
        super().__init__(message)
        self.location = location


class ConfigError(FedGanError):
    def __init__(self, message: str, *, key_path: str | None = None) -> None:
        super().__init__(f"{key_path}: {message}" if key_path else message)
        self.key_path = key_path


class DatasetFormatError(FedGanError, ValueError):
    def __init__(self, message: str, *, line_number: int | None = None) -> None:
        super().__init__(
            f"line {line_number}: {message}" if line_number is not None else message
        )
        self.line_number = line_number


class CheckpointError(FedGanError):
    pass


class SpecMismatchError(CheckpointError):
    def __init__(self, *, expected: str, found: str) -> None:
        super().__init__(
            f"Network spec hash mismatch: expected {expected}, found {found}."
        )
        self.expected = expected
        self.found = found
