"""Exception types shared across the package.

Every error carries a short machine-readable ``code`` so CLI output and
tests can match on the failure kind without parsing prose.
"""


class DieburstError(Exception):
    """Base class for all package errors."""

    code = "error"

    def __init__(self, message=None):
        super().__init__(message if message is not None else self.code)


class ConfigError(DieburstError):
    code = "config-error"


class DegenerateFaceError(DieburstError):
    code = "degenerate-face"


class InvalidLayoutError(DieburstError):
    code = "invalid-layout"


class UnsupportedLayoutError(DieburstError):
    code = "unsupported-layout"


class InvalidElementError(DieburstError):
    code = "invalid-element"


class InvalidShiftError(DieburstError):
    code = "invalid-shift"


class NoResonanceError(DieburstError):
    code = "no-resonance"


class FitFailedError(DieburstError):
    """Fit did not converge; ``best`` holds the best parameters seen."""

    code = "fit-failed"

    def __init__(self, message=None, best=None, residual_norm=None):
        super().__init__(message)
        self.best = best
        self.residual_norm = residual_norm


class EventOutOfWindowError(DieburstError):
    code = "event-out-of-window"


class InsufficientBaselineError(DieburstError):
    code = "insufficient-baseline"


class UnmappedChannelError(DieburstError):
    code = "unmapped-channel"


class DegenerateNormalizationError(DieburstError):
    code = "degenerate-normalization"
