"""Numerical toolkit for Clifford-algebra-valued analysis on R^n.

Dense C(n) arithmetic, grid Dirac operators, the Cauchy-type reproducing
formula, fractal point clouds, Whitney 1-jets and divided-difference kernels,
plus a batch experiment driver (``cliffordlab.experiments``).
"""

from importlib.metadata import PackageNotFoundError, version

from .algebra import (
    AlgebraDomainError,
    DimensionError,
    Multivector,
    geometric_product,
    vector_inverse,
)

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

__all__ = ["AlgebraDomainError", "DimensionError", "Multivector", "__version__", "geometric_product", "vector_inverse"]
