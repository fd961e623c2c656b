"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration: bad parameter values, shape/grid mismatches,
    unresolvable config references. CLI maps this to exit code 2."""


class GridMismatchError(ConfigurationError):
    """Two fields that must share a grid do not."""


class BlowUpError(RuntimeError):
    """A path produced non-finite coefficients or exceeded the energy cap.

    Carries the step index at which the blow-up was detected and, when the
    caller kept one, the partial trajectory up to the previous step.
    """

    def __init__(self, step: int, message: str = "", partial=None):
        self.step = step
        self.partial = partial
        super().__init__(message or f"blow-up detected at step {step}")
