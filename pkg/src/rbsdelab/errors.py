"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid arguments or configuration: bad grids, sweeps, modes, config keys."""


class NumericalAbort(RuntimeError):
    """A solve produced a non-finite value; the message carries level/node info."""
