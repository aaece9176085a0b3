"""Prescribed Webster scalar curvature on a discretized Heisenberg nilmanifold."""

from .lattice import Lattice, LatticePoint, canonicalize, get_lattice
from .operators import Constants, Structure

__all__ = ["Lattice", "LatticePoint", "canonicalize", "get_lattice", "Constants", "Structure"]
__version__ = "0.1.0"
