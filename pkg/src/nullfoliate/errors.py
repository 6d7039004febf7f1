"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract, so new error conditions
should reuse one of the classes below rather than raising bare ValueErrors.
"""


class NullfoliateError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(NullfoliateError):
    """A parameter is outside its documented range, or a config key is unknown."""


class UnsupportedSpinError(NullfoliateError):
    """An operation would create or consume a spin weight outside {-2..2}."""


class UnsupportedMetricError(NullfoliateError):
    """A general (non conformal-round) metric reached a conformal-only code path."""


class OutOfDomainError(NullfoliateError):
    """An evaluation height left the data slab [1, s*]."""


class ConstraintError(NullfoliateError):
    """An input violates a mathematical precondition (e.g. non-mean-free source)."""


class DatasetError(NullfoliateError):
    """A dataset directory is malformed, truncated or contains non-finite data."""


class NonConvergenceError(NullfoliateError):
    """The Picard iteration exhausted max_iter without contracting below tol."""

    def __init__(self, message, delta_trace=None):
        super().__init__(message)
        self.delta_trace = list(delta_trace) if delta_trace is not None else []


class LapseBoundError(NullfoliateError):
    """|log Omega| exceeded the 1/10 bound that accepted solutions must satisfy."""


class BreakdownError(NullfoliateError):
    """Window halving underflowed; the foliation could not be continued.

    Carries the last v-level that was successfully covered.
    """

    def __init__(self, message, last_good_v):
        super().__init__(message)
        self.last_good_v = float(last_good_v)
