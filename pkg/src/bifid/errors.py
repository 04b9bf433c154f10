"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line front end:
2 for usage/configuration problems, 3 for bad data, 4 for numerical failure.
"""


class BifidError(Exception):
    exit_code = 3


class ParameterError(BifidError, ValueError):
    exit_code = 2


class DimensionError(BifidError, ValueError):
    pass


class EmptyInputError(BifidError, ValueError):
    pass


class StateError(BifidError, RuntimeError):
    pass


class PermutationError(BifidError, ValueError):
    pass


class ParseError(BifidError, ValueError):
    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class DegenerateDataError(BifidError, ValueError):
    pass


class UnsupportedNormalizationError(BifidError, ValueError):
    exit_code = 2


class DisconnectedGraphError(BifidError, RuntimeError):
    def __init__(self, n_null):
        super().__init__(
            f"graph appears disconnected: {n_null} near-zero eigenvalue(s)"
        )
        self.n_null = n_null


class NumericError(BifidError, FloatingPointError):
    exit_code = 4


class OptimizationError(BifidError, RuntimeError):
    exit_code = 4

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class SizeError(BifidError, ValueError):
    exit_code = 2


class SpecError(BifidError, ValueError):
    exit_code = 2


class RegistryError(BifidError, KeyError):
    exit_code = 2

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ComparisonError(BifidError, ValueError):
    pass
