"""Numerical laboratory for Hamilton-Jacobi equations forced by f(x) . dB(t)."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
