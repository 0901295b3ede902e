"""Lattice Anderson Hamiltonians on discretized domains: solvers, oracles and fluctuation statistics."""

__version__ = "0.1.0"

from .errors import AndersonLabError  # noqa: E402
from .geometry import LatticeDomain, ShapeSpec, boundary_distance, discretize, path_lattice  # noqa: E402
from .operator import Hamiltonian, assemble, kinetic_energy  # noqa: E402
from .potential import PotentialSpec, ProfileFn, sample  # noqa: E402
from .eigen import EigenResult, lowest_eigenpairs  # noqa: E402

__all__ = [
    "AndersonLabError",
    "EigenResult",
    "Hamiltonian",
    "LatticeDomain",
    "PotentialSpec",
    "ProfileFn",
    "ShapeSpec",
    "assemble",
    "boundary_distance",
    "discretize",
    "kinetic_energy",
    "lowest_eigenpairs",
    "path_lattice",
    "sample",
]
