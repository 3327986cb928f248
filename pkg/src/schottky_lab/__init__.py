"""Numerical laboratory for theta-functional characterizations of Jacobians."""

__version__ = "0.1.0"
