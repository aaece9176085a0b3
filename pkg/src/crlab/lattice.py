"""Finite Heisenberg-quotient lattice.

The compact model manifold is the Heisenberg nilmanifold H(Z)\\H(R) in polarized
coordinates, with group law

    (x, y, t) . (x', y', t') = (x + x', y + y', t + t' + x y').

It is discretized by the subgroup Lambda_N = {(i/N, j/N, k/N^2)}; nodes are the
left cosets H(Z) p, each stored by its canonical representative (i, j, k) with
0 <= i, j < N and 0 <= k < N^2.  Horizontal neighbours are reached by right
multiplication with the generators X = (1/N, 0, 0) and Y = (0, 1/N, 0) and their
inverses, so the stencil realizes the left-invariant frame X = d/dx,
Y = d/dy + x d/dt.  Fields are plain float arrays in lexicographic (i, j, k)
order.
"""

from __future__ import annotations

from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import LatticeMismatch

# Row order of Lattice.neighbor_table.
GENERATORS = ("X+", "X-", "Y+", "Y-")
INVERSE = {"X+": "X-", "X-": "X+", "Y+": "Y-", "Y-": "Y+"}


class LatticePoint(NamedTuple):
    i: int
    j: int
    k: int


def _canonicalize_arrays(i, j, k, N: int):
    a = -np.floor_divide(i, N)
    i = i + a * N
    k = k + a * j * N
    j = np.mod(j, N)
    k = np.mod(k, N * N)
    return i, j, k


def canonicalize(i: int, j: int, k: int, N: int) -> LatticePoint:
    """Canonical left-coset representative of the lattice point (i/N, j/N, k/N^2).

    The i coordinate is reduced first (a left multiplication by (a, 0, 0) also
    shifts t by a*j*N in lattice units), then j (no t shift), then k.
    """
    a = -(i // N)
    i += a * N
    k += a * j * N
    j %= N
    k %= N * N
    return LatticePoint(int(i), int(j), int(k))


class Lattice:
    """Canonical node set, neighbour stencil and volume weights for resolution N."""

    def __init__(self, N: int):
        N = int(N)
        if N < 2:
            raise ValueError(f"lattice resolution must be >= 2, got {N}")
        self.N = N
        self.size = N**4
        self.h = 1.0 / N
        self.node_volume = 1.0 / self.size

        i, j, k = np.meshgrid(
            np.arange(N, dtype=np.int64),
            np.arange(N, dtype=np.int64),
            np.arange(N * N, dtype=np.int64),
            indexing="ij",
        )
        i, j, k = i.ravel(), j.ravel(), k.ravel()
        self.i, self.j, self.k = i, j, k
        self.x = i / N
        self.y = j / N
        self.t = k / N**2

        steps = {
            "X+": (i + 1, j, k),
            "X-": (i - 1, j, k),
            "Y+": (i, j + 1, k + i),
            "Y-": (i, j - 1, k - i),
        }
        table = np.empty((4, self.size), dtype=np.int64)
        for row, g in enumerate(GENERATORS):
            table[row] = self.index(*_canonicalize_arrays(*steps[g], N))
        table.setflags(write=False)
        self.neighbor_table = table
        for arr in (self.i, self.j, self.k, self.x, self.y, self.t):
            arr.setflags(write=False)

    def __repr__(self) -> str:
        return f"Lattice(N={self.N})"

    def index(self, i, j, k):
        """Flat index of canonical coordinates (scalars or arrays)."""
        N = self.N
        return (i * N + j) * (N * N) + k

    def point(self, index: int) -> LatticePoint:
        return LatticePoint(int(self.i[index]), int(self.j[index]), int(self.k[index]))

    def neighbors(self, p: LatticePoint) -> dict[str, LatticePoint]:
        """The four canonical nodes p.X, p.X^-1, p.Y, p.Y^-1."""
        idx = self.index(*p)
        return {g: self.point(self.neighbor_table[row, idx]) for row, g in enumerate(GENERATORS)}

    def field(self, values) -> np.ndarray:
        """Validate ``values`` as a field on this lattice and return it as a float array."""
        u = np.asarray(values, dtype=float)
        if u.ndim == 0:
            return np.full(self.size, float(u))
        if u.shape != (self.size,):
            raise LatticeMismatch(f"field of shape {u.shape} does not live on {self!r}")
        if not np.all(np.isfinite(u)):
            raise ValueError("field has non-finite entries")
        return u

    def constant(self, c: float) -> np.ndarray:
        return np.full(self.size, float(c))

    def random_field(self, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(self.size)

    def integrate(self, u) -> float:
        return float(np.sum(self.field(u))) * self.node_volume

    def inner(self, u, v) -> float:
        return float(np.dot(self.field(u), self.field(v))) * self.node_volume

    def norm(self, u) -> float:
        return float(np.sqrt(self.inner(u, u)))

    def sample(self, expr: str) -> np.ndarray:
        from .formula import compile_formula

        return compile_formula(expr)(self.x, self.y)


@lru_cache(maxsize=8)
def get_lattice(N: int) -> Lattice:
    """Shared immutable lattice for resolution N."""
    return Lattice(N)


def sample(expr: str, lattice: Lattice) -> np.ndarray:
    return lattice.sample(expr)


def integrate(u, lattice: Lattice) -> float:
    return lattice.integrate(u)


def inner(u, v, lattice: Lattice) -> float:
    return lattice.inner(u, v)


def right_multiply(p: LatticePoint, g: LatticePoint, N: int) -> LatticePoint:
    """Canonical representative of the coset of p . g (both in lattice units)."""
    return canonicalize(p.i + g.i, p.j + g.j, p.k + g.k + p.i * g.j, N)
