"""Grid-convergence study of the discrete sub-Laplacian against a symbolic oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import sympy

from .formula import compile_formula
from .lattice import get_lattice
from .operators import sub_laplacian

DEFAULT_FIELDS = ("1", "sin(2*pi*x)", "sin(2*pi*x)*sin(2*pi*y)")


@lru_cache(maxsize=32)
def analytic_sub_laplacian(expr: str):
    """X^2 f + Y^2 f with X = d/dx, Y = d/dy + x d/dt, as a numpy function of (x, y, t)."""
    compile_formula(expr)  # reject anything outside the mini-language
    x, y, t = sympy.symbols("x y t", real=True)
    f = sympy.sympify(expr, locals={"x": x, "y": y, "pi": sympy.pi})

    def X(g):
        return sympy.diff(g, x)

    def Y(g):
        return sympy.diff(g, y) + x * sympy.diff(g, t)

    lap = sympy.simplify(X(X(f)) + Y(Y(f)))
    fn = sympy.lambdify((x, y, t), lap, modules="numpy")
    return lambda xs, ys, ts: np.broadcast_to(np.asarray(fn(xs, ys, ts), dtype=float), xs.shape)


@dataclass(frozen=True)
class ConvergenceRow:
    field: str
    N: int
    error_inf: float
    order: float | None  # log2(e_{previous N} / e_N), None for the first N

    def as_tuple(self) -> tuple:
        return (self.field, self.N, self.error_inf, self.order)


def convergence_suite(Ns, fields=DEFAULT_FIELDS) -> list[ConvergenceRow]:
    """Tabulate ||Delta_h f - Delta f||_inf and observed orders.

    The order is log2(e_prev / e_N) scaled by log(N / N_prev) / log(2), which
    reduces to log2(e_N / e_2N) for doubling sequences.
    """
    Ns = [int(n) for n in Ns]
    if any(n < 2 for n in Ns) or Ns != sorted(Ns):
        raise ValueError("Ns must be ascending and >= 2")
    rows = []
    for expr in fields:
        exact = analytic_sub_laplacian(expr)
        prev = None
        for N in Ns:
            lat = get_lattice(N)
            u = lat.sample(expr)
            err = float(np.max(np.abs(sub_laplacian(u, lat) - exact(lat.x, lat.y, lat.t))))
            order = None
            if prev is not None and prev[1] > 0.0 and err > 0.0:
                order = math.log(prev[1] / err) / math.log(N / prev[0])
            rows.append(ConvergenceRow(expr, N, err, order))
            prev = (N, err)
    return rows
