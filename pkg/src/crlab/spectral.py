"""First eigenvalue of L, the CR Yamabe quotient, and the sign trichotomy."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import Inconsistent, NoConvergence, VerificationFailed
from .linalg import SolveOptions, inverse_power_iteration
from .operators import (
    A_map,
    A_potential,
    L_map,
    Structure,
    apply_L,
    quadratic_form,
    require_positive,
)


class Sign(enum.Enum):
    NEGATIVE = -1
    ZERO = 0
    POSITIVE = 1

    @classmethod
    def of(cls, value: float, zero_tol: float) -> "Sign":
        if abs(value) <= zero_tol:
            return cls.ZERO
        return cls.POSITIVE if value > 0 else cls.NEGATIVE


@dataclass(frozen=True)
class SpectralResult:
    """Smallest eigenvalue of L and its positive eigenfield.

    ``psi`` has unit L^2 norm with respect to the node volume; ``residual`` is
    ||L q - lambda1 q||_2 for the Euclidean unit vector q parallel to psi.
    """

    lambda1: float
    psi: np.ndarray
    residual: float
    iterations: int = 0


@dataclass(frozen=True)
class YamabeResult:
    Y: float
    minimizer: np.ndarray
    iterations: int
    history: tuple = ()


@dataclass(frozen=True)
class YamabeOptions:
    rel_tol: float = 1e-9
    max_iter: int = 50_000
    window: int = 10
    eps_pos: float = 1e-8


def _smallest(op, shift: float, volume: float, opts: SolveOptions):
    pair = inverse_power_iteration(op, shift, opts, volume=volume)
    if np.min(pair.vector) <= 0.0:
        raise VerificationFailed(
            f"ground state is not strictly positive (min = {np.min(pair.vector):.3e})"
        )
    return pair


def lambda1(s: Structure, opts: SolveOptions = SolveOptions()) -> SpectralResult:
    """First eigenvalue of L = -b Delta + rho by inverse iteration shifted to min(rho) - 1."""
    pair = _smallest(L_map(s), float(np.min(s.rho)) - 1.0, s.lattice.node_volume, opts)
    psi = pair.vector
    psi.setflags(write=False)
    return SpectralResult(pair.value, psi, pair.residual, pair.iterations)


def mu1_of_A(s: Structure, u: np.ndarray, opts: SolveOptions = SolveOptions()) -> float:
    """Smallest eigenvalue of A(u)."""
    require_positive(u)
    shift = float(np.min(A_potential(s, u))) - 1.0
    return _smallest(A_map(s, u), shift, s.lattice.node_volume, opts).value


def eigen_residual_inf(s: Structure, spec: SpectralResult) -> float:
    """||L psi - lambda1 psi||_inf for the volume-normalized psi."""
    return float(np.max(np.abs(apply_L(s, spec.psi) - spec.lambda1 * spec.psi)))


def _conformal_volume(s: Structure, u: np.ndarray) -> float:
    return s.lattice.integrate(u ** (s.a + 1.0))


def yamabe_quotient(s: Structure, u: np.ndarray) -> float:
    """Quadratic form of L over (integral of u^(a+1))^(n/(n+1))."""
    u = require_positive(s.lattice.field(u))
    n = s.constants.n
    return quadratic_form(s, u) / _conformal_volume(s, u) ** (n / (n + 1.0))


def minimize_yamabe(s: Structure, opts: YamabeOptions = YamabeOptions(),
                    u0: np.ndarray | None = None) -> YamabeResult:
    """Projected gradient descent on the Yamabe quotient over positive fields.

    Iterates stay on the unit conformal-volume sphere.  Each step backtracks
    from step length 1.0, halving while the quotient does not decrease.  The
    run ends when the quotient has dropped by less than ``rel_tol`` (relative)
    over the last ``window`` steps, or when no descent step exists.
    """
    n = s.constants.n
    p = s.a + 1.0
    denom_grad = n / (n + 1.0) * p

    def normalize(v):
        return v / _conformal_volume(s, v) ** (1.0 / p)

    u = normalize(np.ones(s.lattice.size) if u0 is None else require_positive(np.array(u0, float)))
    Q = yamabe_quotient(s, u)
    history = [Q]
    for it in range(1, opts.max_iter + 1):
        Lu = apply_L(s, u)
        E = float(np.dot(Lu, u)) * s.lattice.node_volume
        grad = 2.0 * Lu - E * denom_grad * u ** s.a
        step = 1.0
        accepted = False
        while step > 1e-20:
            v = normalize(np.maximum(u - step * grad, opts.eps_pos))
            Qv = yamabe_quotient(s, v)
            if Qv < Q:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            return YamabeResult(Q, u, it - 1, tuple(history))
        u, Q = v, Qv
        history.append(Q)
        if len(history) > opts.window:
            drop = history[-1 - opts.window] - Q
            if drop < opts.rel_tol * max(abs(Q), 1e-12):
                return YamabeResult(Q, u, it, tuple(history))
    raise NoConvergence("minimize_yamabe reached max_iter", opts.max_iter, Q)


@dataclass(frozen=True)
class Trichotomy:
    sign: Sign
    lambda1: float
    Y: float
    zero_tol: float
    agree: bool
    spectral: SpectralResult = field(repr=False, default=None)


def trichotomy(s: Structure, zero_tol: float | None = None,
               opts: SolveOptions = SolveOptions(),
               yopts: YamabeOptions = YamabeOptions()) -> Trichotomy:
    """Classify the structure by the sign of lambda_1, cross-checked against Y."""
    tol = s.zero_tol() if zero_tol is None else zero_tol
    spec = lambda1(s, opts)
    Y = minimize_yamabe(s, yopts).Y
    sign = Sign.of(spec.lambda1, tol)
    agree = Sign.of(Y, tol) is sign
    if not agree:
        raise Inconsistent(f"lambda1 = {spec.lambda1:.6e} but Y = {Y:.6e} (zero band {tol:.1e})")
    return Trichotomy(sign, spec.lambda1, Y, tol, agree, spec)
