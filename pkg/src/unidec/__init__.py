"""Numerical laboratory for frequency-uniform decompositions and dispersive estimates."""

__version__ = "0.1.0"
