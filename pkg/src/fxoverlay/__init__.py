"""International mean-variance portfolios with an FX-forward currency overlay."""

__version__ = "0.1.0"
