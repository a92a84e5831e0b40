"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid user-facing configuration (bad profile, interval, unit, ...)."""


class NonFiniteError(FloatingPointError):
    """A forward/backward pass or loss produced NaN or Inf."""
