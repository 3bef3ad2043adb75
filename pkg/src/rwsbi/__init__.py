"""Simulation and numerics laboratory for random walks with self-blocking
immigration: the particle system itself, its lattice density equation,
tuned Poisson comparison systems, coupling constructions, and exact
vacancy correlation formulas, each with an executable verification suite.
"""

__version__ = "0.1.0"

from .kernels import JumpKernel, RngStream, builtin_kernel, load_kernel, validate_kernel

__all__ = [
    "JumpKernel",
    "RngStream",
    "builtin_kernel",
    "load_kernel",
    "validate_kernel",
    "__version__",
]
