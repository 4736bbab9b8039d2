"""Exception hierarchy. The CLI maps these onto exit codes."""


class ProxyReconError(Exception):
    pass


class DataError(ProxyReconError, ValueError):
    """Malformed, misaligned or incomplete input data."""


class NumericalError(ProxyReconError, ArithmeticError):
    """A computation could not produce a trustworthy answer."""


class SingularDesignError(NumericalError):
    pass


class RankError(NumericalError):
    def __init__(self, msg, rank=None):
        super().__init__(msg)
        self.rank = rank


class ConvergenceError(NumericalError):
    def __init__(self, msg, sweeps=None):
        super().__init__(msg)
        self.sweeps = sweeps


class ConfigError(ProxyReconError):
    """Invalid or incomplete run configuration."""
