"""
Exception hierarchy. Every error carries the CLI exit code it maps to.
"""

from __future__ import annotations


class RainCdfError(Exception):
    exit_code = 1


# ------------------------------------------
# Configuration / usage (exit 2)
# ------------------------------------------

class ConfigError(RainCdfError):
    exit_code = 2


# ------------------------------------------
# Data (exit 3)
# ------------------------------------------

class DataError(RainCdfError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, row: int, column: str, token: str):
        self.row = row
        self.column = column
        self.token = token
        super().__init__(f"row {row}, column {column}: malformed float token {token!r}")


class StructuralError(DataError):
    def __init__(self, row: int, message: str):
        self.row = row
        super().__init__(f"row {row}: {message}")


class SchemaError(DataError):
    pass


class ShapeError(DataError):
    pass


class CdfValidationError(DataError):
    def __init__(self, row: int, message: str):
        self.row = row
        super().__init__(f"prediction row {row}: {message}")


class SizeError(DataError):
    pass


class BuildError(DataError):
    pass


class TrainingError(DataError):
    pass


class InconsistencyError(DataError):
    pass


class ModelFormatError(DataError):
    pass


# ------------------------------------------
# Numerical (exit 4)
# ------------------------------------------

class NumericalError(RainCdfError):
    exit_code = 4


class RankError(NumericalError):
    pass


class DivergenceError(NumericalError):
    def __init__(self, iteration: int, loss: float):
        self.iteration = iteration
        self.loss = loss
        super().__init__(f"non-finite loss {loss} at iteration {iteration}")
