"""Exception types shared across the package."""


class FormgateError(Exception):
    pass


class DimensionMismatchError(FormgateError, ValueError):
    """Raised when an input does not match a declared shape.

    ``where`` names the offending stream or argument.
    """

    def __init__(self, where: str, message: str):
        self.where = where
        super().__init__(f"{where}: {message}")


class OracleScaleError(FormgateError, ValueError):
    """Raised when the dense-tensor oracle is asked to run beyond test scale."""


class NumericalDivergenceError(FormgateError, RuntimeError):
    """Raised when training hits a non-finite loss or gradient.

    Carries the step index and the parameter block that went non-finite.
    """

    def __init__(self, step: int, block: str, message: str = ""):
        self.step = step
        self.block = block
        detail = f" ({message})" if message else ""
        super().__init__(f"non-finite value at step {step} in block '{block}'{detail}")


class ConfigError(FormgateError, ValueError):
    """Raised for malformed run configuration; names the offending key path."""

    def __init__(self, key_path: str, message: str):
        self.key_path = key_path
        super().__init__(f"config key '{key_path}': {message}")
