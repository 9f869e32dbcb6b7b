class ModelError(Exception):
    """Raised for malformed models and for errors found while exploring them."""


class ModelSyntaxError(ModelError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {message}")
        self.line = line
        self.col = col


class PolicyError(Exception):
    """Checkpoint, dimension or training failures."""


class VerificationError(Exception):
    """Raised when a property cannot be checked (unknown label, bad chain)."""


class EmptySelectionError(VerificationError):
    """A state filter matched no states of the chain."""
