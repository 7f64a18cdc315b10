"""trajkit: conditional states of partially observed systems.

Exact mixed-state reference solvers (master/conditioning equations on
density matrices, grid filters) next to weighted pure-state ensemble
methods that reconstruct the same conditional states from records, at
linear instead of quadratic storage per trajectory.
"""

from .backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
