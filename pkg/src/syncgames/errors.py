"""Exception types shared across the package."""


class SyncGamesError(Exception):
    """Base class for all package errors."""


class ParseError(SyncGamesError):
    """Sentence text does not conform to the grammar.

    Carries 1-based line/column of the first offending token.
    """

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{line}:{column}: {message}"
        super().__init__(message)


class FormulaError(SyncGamesError):
    """A formula is used outside its contract (unbound variable,
    quantifier where none is allowed, no textual form, ...)."""


class AlgebraError(SyncGamesError):
    """Invalid algebra construction or element/shape mismatch."""


class GameError(SyncGamesError):
    """Game description fails validation."""


class RoundingError(SyncGamesError):
    """Rounding precondition violated or input irrecoverable."""


class OptimizerError(SyncGamesError):
    """Optimizer misconfiguration or failure."""
