"""Implicit kinetic DG solver: nodal basis, macro/subcell mesh, upwind transport,
BGK-type relaxation and splitting integrators driven by a task runtime."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
