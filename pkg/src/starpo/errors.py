"""Exception hierarchy shared across the package."""

from __future__ import annotations


class StarpoError(Exception):
    """Base class for every error raised by this package."""


class EmptyInput(StarpoError, ValueError):
    pass


class EmptyStep(StarpoError, ValueError):
    pass


class DimMismatch(StarpoError, ValueError):
    pass


class ParseError(StarpoError, ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class InvalidTrajectory(StarpoError, ValueError):
    def __init__(self, reason: str, line: int | None = None):
        msg = reason if line is None else f"line {line}: {reason}"
        super().__init__(msg)
        self.line = line
        self.reason = reason


class IoError(StarpoError, OSError):
    pass


class TooShort(StarpoError, ValueError):
    pass


class TooFewDeltas(StarpoError, ValueError):
    pass


class InsufficientSample(StarpoError, ValueError):
    pass


class InvalidLogProb(StarpoError, ValueError):
    pass


class ShapeMismatch(StarpoError, ValueError):
    pass


class DivergenceError(StarpoError, RuntimeError):
    def __init__(self, iteration: int):
        super().__init__(f"non-finite policy parameters at iteration {iteration}")
        self.iteration = iteration


class InvalidPuzzle(StarpoError, ValueError):
    pass


class IllegalAction(StarpoError, ValueError):
    pass


class NotTerminal(StarpoError, ValueError):
    pass


class DeadEnd(StarpoError, RuntimeError):
    pass


class InvalidParams(StarpoError, ValueError):
    pass


class DegenerateTest(StarpoError, ValueError):
    pass


class EmptyStudy(StarpoError, ValueError):
    pass


class SchemaError(StarpoError, ValueError):
    pass


class ConfigError(StarpoError, ValueError):
    pass
