"""Exception hierarchy shared by the simulation, identification and control modules."""


class LbmpcError(Exception):
    """Base class for all package errors."""


class ParameterError(LbmpcError, ValueError):
    """A numeric argument violates its documented range."""


class ConfigError(LbmpcError, ValueError):
    """A configuration document is malformed or inconsistent."""


class SimulationDivergenceError(LbmpcError, FloatingPointError):
    """Plant integration produced non-finite temperatures."""


class ParseError(LbmpcError, ValueError):
    """A data file line could not be parsed."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class SchemaError(LbmpcError, ValueError):
    """A data file parsed, but its content breaks the expected schema."""


class StructuralError(LbmpcError, ValueError):
    """Array shapes do not match the network or model structure."""


class TrainingError(LbmpcError, RuntimeError):
    """Network training could not proceed."""


class NumericalBreakdownError(LbmpcError, ArithmeticError):
    """RLS denominator lost positivity."""


class IdentificationError(LbmpcError, RuntimeError):
    """Identified parameters fall outside the physical sanity bands."""

    def __init__(self, message, theta=None):
        super().__init__(message)
        self.theta = theta


class AlignmentError(LbmpcError, ValueError):
    """Two scenario logs cannot be compared step by step."""


class StageError(LbmpcError, RuntimeError):
    """An experiment pipeline stage failed."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
