"""Discrete sub-Laplacian and the curvature operators built on it.

With h = 1/N the sub-Laplacian is the Cayley-graph stencil

    (Delta u)(p) = N^2 * sum_{q in nbrs(p)} (u(q) - u(p)),

and the horizontal gradient takes forward differences along the X and Y
edges.  Both are defined on the same edge set, so summation by parts
(<-Delta u, u> = sum over edges of |grad u|^2 times the node volume) is an exact
algebraic identity rather than an approximation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LatticeMismatch, NonPositiveInput
from .lattice import Lattice, get_lattice
from .linalg import LinearMap


@dataclass(frozen=True)
class Constants:
    """Exponents of the transformation law for CR dimension n."""

    n: int = 1

    @property
    def a(self) -> float:
        return 1.0 + 2.0 / self.n

    @property
    def b(self) -> float:
        return 2.0 + 2.0 / self.n


@dataclass(frozen=True, eq=False)
class Structure:
    """Lattice plus background Webster curvature rho."""

    lattice: Lattice
    rho: np.ndarray
    constants: Constants = field(default_factory=Constants)

    def __post_init__(self):
        rho = self.lattice.field(self.rho).copy()
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_formula(cls, N: int, rho: str | float) -> "Structure":
        lat = get_lattice(N)
        values = lat.sample(rho) if isinstance(rho, str) else lat.constant(rho)
        return cls(lat, values)

    @property
    def a(self) -> float:
        return self.constants.a

    @property
    def b(self) -> float:
        return self.constants.b

    @property
    def N(self) -> int:
        return self.lattice.N

    def with_rho(self, rho) -> "Structure":
        return Structure(self.lattice, rho, self.constants)

    def zero_tol(self) -> float:
        """Width of the 'zero' band for eigenvalue signs, scaled to the operator."""
        return 1e-6 * self.b * self.N**2


def require_positive(u: np.ndarray, name: str = "u") -> np.ndarray:
    if np.min(u) <= 0.0:
        raise NonPositiveInput(f"{name} must be strictly positive (min = {np.min(u):.3e})")
    return u


def horizontal_gradient(u: np.ndarray, lattice: Lattice) -> np.ndarray:
    """Forward differences along X and Y edges, shape (2, N^4)."""
    u = lattice.field(u)
    nb = lattice.neighbor_table
    return lattice.N * np.stack([u[nb[0]] - u, u[nb[2]] - u])


def sub_laplacian(u: np.ndarray, lattice: Lattice) -> np.ndarray:
    u = lattice.field(u)
    return lattice.N**2 * (u[lattice.neighbor_table].sum(axis=0) - 4.0 * u)


def apply_L(s: Structure, u: np.ndarray) -> np.ndarray:
    """L u = -b Delta u + rho u."""
    return -s.b * sub_laplacian(u, s.lattice) + s.rho * u


def apply_T(s: Structure, u: np.ndarray) -> np.ndarray:
    """T u = u^(-a) L u, defined for positive u."""
    u = require_positive(s.lattice.field(u))
    return u ** (-s.a) * apply_L(s, u)


def A_potential(s: Structure, u0: np.ndarray) -> np.ndarray:
    u0 = require_positive(s.lattice.field(u0), "u0")
    return s.a * sub_laplacian(u0, s.lattice) / u0 + (1.0 - s.a) / s.b * s.rho


def apply_A(s: Structure, u0: np.ndarray, v: np.ndarray) -> np.ndarray:
    """A(u0) v = -Delta v + (a Delta u0 / u0 + (1 - a) rho / b) v."""
    return -sub_laplacian(v, s.lattice) + A_potential(s, u0) * v


def apply_Tprime(s: Structure, u0: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Linearization of T at u0, written as b u0^(-a) A(u0) v."""
    u0 = require_positive(s.lattice.field(u0), "u0")
    return s.b * u0 ** (-s.a) * apply_A(s, u0, v)


def quadratic_form(s: Structure, u: np.ndarray) -> float:
    """b * |grad_H u|^2 + rho u^2, integrated over the lattice (edge form)."""
    grad = horizontal_gradient(u, s.lattice)
    u = s.lattice.field(u)
    return float(s.b * np.sum(grad * grad) + np.dot(s.rho * u, u)) * s.lattice.node_volume


def dirichlet_energy(u: np.ndarray, lattice: Lattice) -> float:
    grad = horizontal_gradient(u, lattice)
    return float(np.sum(grad * grad)) * lattice.node_volume


# LinearMap wrappers used by the solvers and eigen-routines.

def laplacian_map(lattice: Lattice, shift: float = 0.0) -> LinearMap:
    """-Delta + shift."""
    return LinearMap(lambda v: -sub_laplacian(v, lattice) + shift * v, lattice.size)


def schrodinger_map(lattice: Lattice, potential: np.ndarray) -> LinearMap:
    """-Delta + potential (pointwise)."""
    pot = lattice.field(potential)
    return LinearMap(lambda v: -sub_laplacian(v, lattice) + pot * v, lattice.size)


def L_map(s: Structure) -> LinearMap:
    return LinearMap(lambda v: apply_L(s, v), s.lattice.size)


def A_map(s: Structure, u0: np.ndarray) -> LinearMap:
    return schrodinger_map(s.lattice, A_potential(s, u0))


def check_same_lattice(s: Structure, *fields: np.ndarray) -> None:
    for f in fields:
        if np.shape(f) != (s.lattice.size,):
            raise LatticeMismatch(f"field of shape {np.shape(f)} does not live on {s.lattice!r}")
