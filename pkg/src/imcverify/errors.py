"""Exception types shared across the package."""


class ParseError(ValueError):
    """Syntax error in a dynamics expression, with source position."""

    def __init__(self, message: str, line: int = 1, column: int = 0):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class StructureError(ValueError):
    """A declared noise-structure claim is violated syntactically."""


class EvaluationError(ArithmeticError):
    """Numeric evaluation failed (division by zero, sqrt of a negative, ...)."""


class InputError(ValueError):
    """Invalid configuration or input file content."""


class SpecificationError(ValueError):
    """Ill-formed verification specification (e.g. overlapping label sets)."""


class InvalidModelError(ValueError):
    """A transition row admits no valid adversary."""


class SoundnessError(RuntimeError):
    """Internal soundness violation; indicates a bug, never rescaled away."""
