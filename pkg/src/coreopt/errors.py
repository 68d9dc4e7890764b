"""Exception hierarchy. All library errors derive from ``CoreError``."""


class CoreError(ValueError):
    pass


class InvalidDimensionError(CoreError):
    pass


class InvalidBudgetError(CoreError):
    pass


class InvalidInputError(CoreError):
    pass


class CorruptSketchError(CoreError):
    pass


class InvalidMatrixError(CoreError):
    pass


class InvalidSpectrumError(CoreError):
    pass


class InvalidShardError(CoreError):
    pass


class UnsupportedObjectiveError(CoreError):
    pass


class ConfigError(CoreError):
    """Invalid configuration; ``problems`` lists field-level diagnostics."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class InsufficientSamplesError(CoreError):
    pass


class DegenerateInputError(CoreError):
    pass


class NonConvergenceError(CoreError):
    pass


class LibsvmParseError(CoreError):
    def __init__(self, message, line, column):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")
