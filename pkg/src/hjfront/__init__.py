"""Front propagation in weakly advected Hamilton-Jacobi models driven by mild white noise."""

__version__ = "0.1.0"
