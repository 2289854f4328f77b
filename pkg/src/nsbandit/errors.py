"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid user-supplied configuration (maps to CLI exit code 2)."""


class ContractError(ValueError):
    """An operation was called outside its documented preconditions."""


class InternalError(RuntimeError):
    """A state invariant was violated (e.g. a covariance lost definiteness)."""
