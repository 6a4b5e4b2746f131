"""Toolkit for partially dissipative hyperbolic balance laws.

Checks structural dissipation conditions near an equilibrium, builds the
partially normalized phase-space chart, assembles the entropy symmetrizer
and Kawashima-type compensator, and measures linear and nonlinear decay
rates with a Fourier semigroup evaluator and a pseudo-spectral solver.
"""

__version__ = "0.1.0"

from .systems import (
    SystemSpec,
    StateVector,
    assemble_direction_matrix,
    builtin_damped_euler,
    normalize_equilibrium,
)
from .eigen import EigenPacket, eigen_decompose, verify_packet

__all__ = [
    "SystemSpec",
    "StateVector",
    "assemble_direction_matrix",
    "builtin_damped_euler",
    "normalize_equilibrium",
    "EigenPacket",
    "eigen_decompose",
    "verify_packet",
    "__version__",
]
