"""Principal stratification with probit BART surfaces."""

__version__ = "0.1.0"
