"""Gradient descent beyond the edge of stability: orbit predictors and simulators."""

__version__ = "0.1.0"
