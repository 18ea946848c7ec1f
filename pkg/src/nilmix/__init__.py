"""Exact nilpotent Lie algebra arithmetic and Monte-Carlo experiments on nilmanifolds."""

from .errors import NilmixError, ValidationError
from .lie_core import NilpotentAlgebra, abelian, algebra_from_brackets, filiform4, heisenberg, validate_algebra
from .nilmanifold import Nilmanifold, torus
from .spectral import Automorphism, is_ergodic, jordan_split, validate_automorphism
from .stochastics import OrbitEngine

__version__ = "0.1.0"

__all__ = [
    "NilmixError", "ValidationError", "NilpotentAlgebra", "abelian", "algebra_from_brackets", "filiform4",
    "heisenberg", "validate_algebra", "Nilmanifold", "torus", "Automorphism", "is_ergodic", "jordan_split",
    "validate_automorphism", "OrbitEngine",
]
