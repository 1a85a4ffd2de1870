"""Numerical laboratory for heat flow perturbed by singular form-bounded drifts."""

__version__ = "0.1.0"
