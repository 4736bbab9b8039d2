"""Statistical toolkit for proxy-based temperature reconstructions."""
from importlib.metadata import PackageNotFoundError, version

from . import bayes, dataset, harness, lasso, modelzoo, nullmodels, numerics
from .errors import (ConfigError, ConvergenceError, DataError, NumericalError, ProxyReconError,
                     RankError, SingularDesignError)

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source checkout
    __version__ = "0.0.0"

__all__ = ["bayes", "dataset", "harness", "lasso", "modelzoo", "nullmodels", "numerics",
           "ConfigError", "ConvergenceError", "DataError", "NumericalError", "ProxyReconError",
           "RankError", "SingularDesignError", "__version__"]
