"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """An environment, algorithm or campaign configuration is invalid."""


class CompatibilityError(ValueError):
    """A mutation operator does not apply to the target algorithm."""


class VacuousMutationError(ValueError):
    """A mutation would leave the configuration unchanged."""


class CompositionError(ValueError):
    """Two operator instances cannot be combined into a higher-order mutant."""


class MutationParseError(ValueError):
    """An operator string does not follow the operator grammar."""

    def __init__(self, message: str, text: str, position: int):
        super().__init__(f"{message} at position {position} in {text!r}")
        self.text = text
        self.position = position


class TrainingDivergedError(RuntimeError):
    """A gradient or weight became non-finite during training."""
