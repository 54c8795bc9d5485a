class ModelError(ValueError):
    """A model, valuation or formula file failed validation."""


class LtlSyntaxError(ValueError):
    def __init__(self, message, position):
        super().__init__(f"{message} at position {position}")
        self.position = position


class ResourceLimit(RuntimeError):
    """A configurable size cap was exceeded."""


class BoundExceeded(ResourceLimit):
    """Explicit-state exploration left the stack or instance bound."""
