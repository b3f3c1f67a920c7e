"""Numerical laboratory for a slow-fast planar system with an exponentially small coupling."""

from .piecewise import PiecewiseFunction, SignChange, parse_piecewise

__version__ = "0.1.0"

__all__ = ["PiecewiseFunction", "SignChange", "parse_piecewise", "__version__"]
