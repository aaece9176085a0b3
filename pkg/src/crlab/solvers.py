"""Solvers for the prescribed curvature equation L u = rho_hat u^a, u > 0.

The equation is rewritten as -Delta u + f(x, u) = 0 with

    f(x, u) = (rho u - rho_hat u^a) / b,

and solved by monotone iteration between an ordered lower/upper pair:

    (-Delta + lam) u_k = lam u_{k-1} - f(x, u_{k-1}),   u_0 = u_-.

Newton's method on T(u) = u^(-a) L u is provided for targets without a
known bracket.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    MonotonicityViolation,
    NoConvergence,
    PreconditionViolated,
    SingularLinearization,
    VerificationFailed,
    WrongInput,
    WrongSignRegime,
)
from .linalg import SolveOptions, cg_solve, minres_solve
from .operators import (
    A_map,
    Structure,
    apply_L,
    apply_T,
    laplacian_map,
    require_positive,
)
from .spectral import SpectralResult, eigen_residual_inf, lambda1

log = logging.getLogger(__name__)

CSV_COLUMNS = ("iter", "increment_linf", "residual_linf", "min_u", "max_u",
               "monotone_ok", "sandwich_ok")


@dataclass(frozen=True)
class MonotoneOptions:
    rel_tol: float = 1e-12
    abs_tol: float = 1e-9
    max_iter: int = 5000
    lin_tol: float = 1e-13
    descending: bool = False


@dataclass
class MonotoneReport:
    lam: float
    descending: bool = False
    increments: list[float] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    min_u: list[float] = field(default_factory=list)
    max_u: list[float] = field(default_factory=list)
    monotone_ok: list[bool] = field(default_factory=list)
    sandwich_ok: list[bool] = field(default_factory=list)
    log_ratio_min: list[float] = field(default_factory=list)
    log_ratio_max: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.increments)

    @property
    def all_monotone(self) -> bool:
        return all(self.monotone_ok)

    @property
    def all_sandwiched(self) -> bool:
        return all(self.sandwich_ok)

    @property
    def log_ratio_bound(self) -> float:
        """max_k max_x |log(u_k / psi)|."""
        if not self.log_ratio_min:
            return float("nan")
        return max(max(abs(v) for v in self.log_ratio_min), max(abs(v) for v in self.log_ratio_max))

    def rows(self) -> list[tuple]:
        return [
            (k + 1, self.increments[k], self.residuals[k], self.min_u[k], self.max_u[k],
             self.monotone_ok[k], self.sandwich_ok[k])
            for k in range(self.iterations)
        ]


@dataclass(frozen=True)
class NewtonOptions:
    abs_tol: float = 1e-10
    max_iter: int = 50
    lin_tol: float = 1e-12
    eps_pos: float = 1e-10
    max_halvings: int = 40


@dataclass
class NewtonReport:
    residuals: list[float] = field(default_factory=list)
    steps: list[float] = field(default_factory=list)
    positivity_guards: int = 0
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.steps)

    def rows(self) -> list[tuple]:
        return [(k, r, self.steps[k - 1] if k else float("nan"))
                for k, r in enumerate(self.residuals)]


def equation_residual(s: Structure, rho_hat: np.ndarray, u: np.ndarray) -> np.ndarray:
    """L u - rho_hat u^a."""
    return apply_L(s, u) - rho_hat * u**s.a


def make_upper_solution(s: Structure, rho_hat: np.ndarray) -> np.ndarray:
    """Constant upper solution alpha with alpha^(a-1) >= rho / rho_hat everywhere."""
    rho_hat = s.lattice.field(rho_hat)
    if np.max(rho_hat) >= 0.0:
        raise WrongInput("upper-solution builder needs rho_hat < 0 everywhere")
    ratio = np.maximum(s.rho / rho_hat, 0.0)
    alpha = max(1.0, float(np.max(ratio)) ** (1.0 / (s.a - 1.0)))
    u_plus = s.lattice.constant(alpha)
    defect = equation_residual(s, rho_hat, u_plus)
    slack = 1e-12 * max(1.0, float(np.max(np.abs(rho_hat * u_plus**s.a))))
    if np.min(defect) < -slack:
        raise VerificationFailed(f"upper solution defect {np.min(defect):.3e} < 0")
    return u_plus


def make_lower_solution(s: Structure, rho_hat: np.ndarray, spectral: SpectralResult,
                        u_plus: np.ndarray) -> np.ndarray:
    """Lower solution beta * psi, below u_plus and below (lambda1 / min rho_hat)^(1/(a-1))."""
    rho_hat = s.lattice.field(rho_hat)
    if spectral.lambda1 >= 0.0:
        raise PreconditionViolated(f"lower-solution builder needs lambda1 < 0, got {spectral.lambda1:.3e}")
    psi = spectral.psi
    psi_max = float(np.max(psi))
    bounds = [float(np.min(u_plus)) / psi_max]
    rho_hat_min = float(np.min(rho_hat))
    if rho_hat_min < 0.0:
        bounds.append((spectral.lambda1 / rho_hat_min) ** (1.0 / (s.a - 1.0)) / psi_max)
    beta = min(bounds) * (1.0 - 1e-9)
    u_minus = beta * psi

    defect = equation_residual(s, rho_hat, u_minus)
    slack = beta * eigen_residual_inf(s, spectral) + 1e-12 * max(1.0, float(np.max(np.abs(apply_L(s, u_minus)))))
    if np.max(defect) > slack:
        raise VerificationFailed(f"lower solution defect {np.max(defect):.3e} > slack {slack:.3e}")
    if np.any(u_minus > u_plus):
        raise VerificationFailed("lower solution is not below the upper solution")
    return u_minus


def monotone_lambda(s: Structure, rho_hat: np.ndarray, lo: float, hi: float) -> float:
    """1 + max of df/du over the iterate box [lo, hi] (df/du is monotone in u)."""
    a, b = s.a, s.b
    d_lo = (s.rho - a * rho_hat * lo ** (a - 1.0)) / b
    d_hi = (s.rho - a * rho_hat * hi ** (a - 1.0)) / b
    return max(1.0, 1.0 + float(max(np.max(d_lo), np.max(d_hi))))


def monotone_solve(s: Structure, rho_hat: np.ndarray, u_minus: np.ndarray, u_plus: np.ndarray,
                   opts: MonotoneOptions = MonotoneOptions(),
                   psi: np.ndarray | None = None) -> tuple[np.ndarray, MonotoneReport]:
    """Monotone iteration between an ordered lower/upper pair.

    Ascends from u_minus (or descends from u_plus with ``opts.descending``).
    Every iterate is checked for monotonicity and for staying inside the
    sandwich; ``psi`` (default: the ground state of L) is used for the
    log(u_k / psi) bounds.
    """
    lat = s.lattice
    rho_hat = lat.field(rho_hat)
    u_minus = require_positive(lat.field(u_minus), "u_minus")
    u_plus = lat.field(u_plus)
    if np.any(u_minus > u_plus):
        raise PreconditionViolated("u_minus must lie below u_plus")
    if psi is None:
        psi = lambda1(s).psi

    a, b = s.a, s.b
    lam = monotone_lambda(s, rho_hat, float(np.min(u_minus)), float(np.max(u_plus)))
    op = laplacian_map(lat, lam)
    lin = SolveOptions(rel_tol=opts.lin_tol)
    report = MonotoneReport(lam=lam, descending=opts.descending)

    def f_tilde(u):
        return lam * u - (s.rho * u - rho_hat * u**a) / b

    u = (u_plus if opts.descending else u_minus).copy()
    for k in range(1, opts.max_iter + 1):
        u_new = cg_solve(op, f_tilde(u), lin, x0=u)
        scale = float(np.max(np.abs(u_new)))
        # CG error allowance for the order checks.
        slack = 1e3 * opts.lin_tol * max(scale, 1.0)
        step = u_new - u
        if opts.descending:
            mono = bool(np.max(step) <= slack)
        else:
            mono = bool(np.min(step) >= -slack)
        sandwich = bool(np.all(u_new >= u_minus - slack) and np.all(u_new <= u_plus + slack))
        increment = float(np.max(np.abs(step)))
        residual = float(np.max(np.abs(equation_residual(s, rho_hat, u_new))))
        log_ratio = np.log(u_new / psi)

        report.increments.append(increment)
        report.residuals.append(residual)
        report.min_u.append(float(np.min(u_new)))
        report.max_u.append(float(np.max(u_new)))
        report.monotone_ok.append(mono)
        report.sandwich_ok.append(sandwich)
        report.log_ratio_min.append(float(np.min(log_ratio)))
        report.log_ratio_max.append(float(np.max(log_ratio)))
        u = u_new
        if not mono:
            raise MonotonicityViolation(
                f"iterate {k} moved against the monotone direction by {np.abs(np.min(step) if not opts.descending else np.max(step)):.3e}"
            )
        if not sandwich:
            raise MonotonicityViolation(f"iterate {k} left the [u_minus, u_plus] sandwich")
        if increment < opts.rel_tol * scale and residual < opts.abs_tol:
            report.converged = True
            log.debug("monotone iteration converged in %d steps (lambda=%.3g)", k, lam)
            return u, report
    exc = NoConvergence("monotone_solve reached max_iter", opts.max_iter, report.residuals[-1])
    exc.report = report
    raise exc


def solve_prescribed(s: Structure, rho_hat: np.ndarray,
                     opts: MonotoneOptions = MonotoneOptions(),
                     spectral: SpectralResult | None = None) -> tuple[np.ndarray, MonotoneReport]:
    """Find u > 0 with L u = rho_hat u^a for strictly negative rho_hat.

    A solution exists exactly when lambda1 < 0; otherwise WrongSignRegime.
    """
    rho_hat = s.lattice.field(rho_hat)
    if np.max(rho_hat) >= 0.0:
        raise WrongInput(f"rho_hat must be strictly negative (max = {np.max(rho_hat):.3e})")
    spectral = lambda1(s) if spectral is None else spectral
    if spectral.lambda1 >= 0.0:
        raise WrongSignRegime(
            f"lambda1 = {spectral.lambda1:.6e} >= 0: no positive solution for negative rho_hat"
        )
    u_plus = make_upper_solution(s, rho_hat)
    u_minus = make_lower_solution(s, rho_hat, spectral, u_plus)
    return monotone_solve(s, rho_hat, u_minus, u_plus, opts, psi=spectral.psi)


def comparison_solve(s: Structure, rho_hat1: np.ndarray, known: tuple[np.ndarray, np.ndarray],
                     opts: MonotoneOptions = MonotoneOptions(), known_tol: float = 1e-8,
                     spectral: SpectralResult | None = None) -> tuple[np.ndarray, MonotoneReport]:
    """Solve for rho_hat1 <= rho_hat, given a solution u of T(u) = rho_hat.

    u is an upper solution for rho_hat1 since L u - rho_hat1 u^a = (rho_hat - rho_hat1) u^a >= 0;
    beta * psi is the lower solution.
    """
    lat = s.lattice
    rho_hat, u = (lat.field(v) for v in known)
    rho_hat1 = lat.field(rho_hat1)
    require_positive(u)
    if np.any(rho_hat1 > rho_hat):
        raise PreconditionViolated("comparison needs rho_hat1 <= rho_hat everywhere")
    res = float(np.max(np.abs(equation_residual(s, rho_hat, u))))
    if res > known_tol:
        raise PreconditionViolated(f"known pair has residual {res:.3e} > {known_tol:.1e}")
    spectral = lambda1(s) if spectral is None else spectral
    if spectral.lambda1 >= 0.0:
        raise PreconditionViolated(f"comparison needs lambda1 < 0, got {spectral.lambda1:.3e}")
    u_minus = make_lower_solution(s, rho_hat1, spectral, u)
    return monotone_solve(s, rho_hat1, u_minus, u, opts, psi=spectral.psi)


def rescale_solution(s: Structure, u: np.ndarray, alpha: float) -> np.ndarray:
    """If T(u) = rho_hat then T(alpha^(-1/(a-1)) u) = alpha rho_hat."""
    return alpha ** (-1.0 / (s.a - 1.0)) * u


def newton_solve(s: Structure, f_target: np.ndarray, u_init: np.ndarray,
                 opts: NewtonOptions = NewtonOptions()) -> tuple[np.ndarray, NewtonReport]:
    """Damped Newton iteration for T(u) = f_target.

    The Newton system T'(u) d = f - T(u) is solved in its symmetric form
    A(u) d = u^a (f - T(u)) / b by MINRES, since A(u) may be indefinite.
    Steps are halved until the residual decreases and u stays above eps_pos.
    """
    lat = s.lattice
    f_target = lat.field(f_target)
    u = require_positive(lat.field(u_init).copy(), "u_init")
    a, b = s.a, s.b
    report = NewtonReport()
    r = f_target - apply_T(s, u)
    res = float(np.max(np.abs(r)))
    report.residuals.append(res)
    lin = SolveOptions(rel_tol=opts.lin_tol)
    for k in range(opts.max_iter):
        if res < opts.abs_tol:
            report.converged = True
            return u, report
        try:
            d = minres_solve(A_map(s, u), u**a * r / b, lin)
        except NoConvergence as exc:
            err = SingularLinearization(f"Newton step {k}: linear solve stagnated", exc.iterations, exc.residual)
            err.report = report
            raise err from None
        step = 1.0
        for _ in range(opts.max_halvings):
            trial = u + step * d
            if np.min(trial) > opts.eps_pos:
                r_trial = f_target - apply_T(s, trial)
                res_trial = float(np.max(np.abs(r_trial)))
                if res_trial < res:
                    break
            else:
                report.positivity_guards += 1
            step *= 0.5
        else:
            err = NoConvergence("Newton line search failed to reduce the residual", k, res)
            err.report = report
            raise err
        u, r, res = trial, r_trial, res_trial
        report.steps.append(step)
        report.residuals.append(res)
    if res < opts.abs_tol:
        report.converged = True
        return u, report
    err = NoConvergence("newton_solve reached max_iter", opts.max_iter, res)
    err.report = report
    raise err
