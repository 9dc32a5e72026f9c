"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class DataError(ValueError):
    """Malformed dataset file or a record violating its invariants."""


class BudgetExceeded(RuntimeError):
    """Instance too large to enumerate exactly."""


class DegenerateEOSWarning(RuntimeWarning):
    """EOS probability is exactly 1, so the continuation average is undefined."""
