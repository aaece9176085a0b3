"""Matrix-free symmetric solvers and a dense eigen-oracle.

Everything here works on flat float arrays with the Euclidean inner product;
volume weights are a constant factor on the lattice and cancel in every
relative tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .errors import DimensionTooLarge, NoConvergence, NotOrthogonal

DENSE_CAP = 256


@dataclass(frozen=True)
class LinearMap:
    """A symmetric linear operator given by its action on vectors."""

    apply: Callable[[np.ndarray], np.ndarray]
    size: int
    symmetric: bool = True
    kernel: tuple = ()

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return self.apply(u)

    def shifted(self, sigma: float) -> "LinearMap":
        """The map u -> apply(u) - sigma * u."""
        base = self.apply
        return LinearMap(lambda u: base(u) - sigma * u, self.size, self.symmetric)


@dataclass(frozen=True)
class SolveOptions:
    rel_tol: float = 1e-10
    max_iter: int | None = None

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    def budget(self, size: int) -> int:
        return self.max_iter if self.max_iter is not None else 10 * size


def identity_map(size: int) -> LinearMap:
    return LinearMap(lambda u: u.copy(), size)


def cg_solve(op: LinearMap, rhs: np.ndarray, opts: SolveOptions = SolveOptions(),
             x0: np.ndarray | None = None) -> np.ndarray:
    """Conjugate gradients for a symmetric positive definite ``op``.

    Returns x with ||op(x) - rhs||_2 <= rel_tol * ||rhs||_2, measured on the
    true (recomputed) residual.
    """
    b = np.asarray(rhs, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    target = opts.rel_tol * bnorm
    max_iter = opts.budget(op.size)

    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - op(x)
    p = r.copy()
    rr = r @ r
    it = 0
    while it < max_iter:
        if np.sqrt(rr) <= target:
            # Recursive residual can drift; confirm on the true one.
            r = b - op(x)
            rr = r @ r
            if np.sqrt(rr) <= target:
                return x
            p = r.copy()
        Ap = op(p)
        pAp = p @ Ap
        if pAp <= 0.0:
            raise NoConvergence("operator is not positive definite along a search direction",
                                it, float(np.sqrt(rr)) / bnorm)
        alpha = rr / pAp
        x += alpha * p
        r -= alpha * Ap
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
        it += 1
    true_res = np.linalg.norm(b - op(x))
    if true_res <= target:
        return x
    raise NoConvergence("cg_solve reached max_iter", it, float(true_res / bnorm))


def minres_solve(op: LinearMap, rhs: np.ndarray, opts: SolveOptions = SolveOptions()) -> np.ndarray:
    """MINRES (Paige-Saunders) for a symmetric, possibly indefinite or singular ``op``.

    The system must be consistent.  Restarts from the current iterate when the
    recursive residual estimate says converged but the true residual does not.
    """
    b = np.asarray(rhs, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    target = opts.rel_tol * bnorm
    max_iter = opts.budget(op.size)
    x = np.zeros_like(b)
    used = 0
    best = np.inf
    stalled = 0
    while used < max_iter:
        r0 = b - op(x)
        res = np.linalg.norm(r0)
        if res <= target:
            return x
        if res < 0.5 * best:
            best, stalled = res, 0
        else:
            stalled += 1
            if stalled >= 3:
                break
        dx, steps = _minres_cycle(op, r0, target, max_iter - used)
        x = x + dx
        used += max(steps, 1)
    res = np.linalg.norm(b - op(x))
    if res <= target:
        return x
    raise NoConvergence("minres_solve did not reach tolerance", used, float(res / bnorm))


def _minres_cycle(op: LinearMap, b: np.ndarray, target: float, max_iter: int):
    n = b.size
    x = np.zeros(n)
    r1 = b.copy()
    r2 = b.copy()
    y = b.copy()
    beta1 = np.linalg.norm(b)
    oldb, beta = 0.0, beta1
    dbar = epsln = 0.0
    phibar = beta1
    cs, sn = -1.0, 0.0
    w = np.zeros(n)
    w2 = np.zeros(n)
    eps = np.finfo(float).eps
    for it in range(1, max_iter + 1):
        v = y / beta
        y = op(v)
        if it >= 2:
            y = y - (beta / oldb) * r1
        alfa = v @ y
        y = y - (alfa / beta) * r2
        r1, r2 = r2, y
        oldb, beta = beta, np.linalg.norm(y)
        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(np.hypot(gbar, beta), eps)
        cs, sn = gbar / gamma, beta / gamma
        phi = cs * phibar
        phibar = sn * phibar
        w1, w2 = w2, w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w
        if phibar <= target or beta == 0.0:
            return x, it
    return x, max_iter


def orthonormal_basis(vectors: Sequence[np.ndarray]) -> list[np.ndarray]:
    if not vectors:
        return []
    Q, R = np.linalg.qr(np.column_stack(vectors))
    keep = np.abs(np.diag(R)) > 1e-12 * max(1.0, np.abs(R).max())
    return [Q[:, i] for i in range(Q.shape[1]) if keep[i]]


def solve_with_kernel(op: LinearMap, kernel: Sequence[np.ndarray], rhs: np.ndarray,
                      opts: SolveOptions = SolveOptions(), orth_tol: float = 1e-10) -> np.ndarray:
    """Solve a singular PSD system whose kernel is spanned by ``kernel``.

    Raises NotOrthogonal if rhs has a component along the kernel (the
    Fredholm obstruction); otherwise returns the solution orthogonal to it.
    """
    b = np.asarray(rhs, dtype=float)
    bnorm = np.linalg.norm(b)
    for idx, w in enumerate(kernel):
        wn = np.linalg.norm(w)
        ip = float(b @ w) / wn if wn else 0.0
        if abs(ip) > orth_tol * max(bnorm, np.finfo(float).tiny):
            raise NotOrthogonal(ip, idx)
    Q = orthonormal_basis(list(kernel))
    if not Q:
        return cg_solve(op, b, opts)
    Qm = np.column_stack(Q)
    b = b - Qm @ (Qm.T @ b)
    regularized = LinearMap(lambda u: op(u) + Qm @ (Qm.T @ u), op.size)
    u = cg_solve(regularized, b, opts)
    return u - Qm @ (Qm.T @ u)


def project_out(rhs: np.ndarray, kernel: Sequence[np.ndarray]) -> np.ndarray:
    Q = orthonormal_basis(list(kernel))
    b = np.asarray(rhs, dtype=float).copy()
    for q in Q:
        b -= (q @ b) * q
    return b


def dense_assemble(op: LinearMap) -> np.ndarray:
    """Column-by-column dense matrix of ``op`` (oracle use only)."""
    n = op.size
    if n > DENSE_CAP:
        raise DimensionTooLarge(f"dense oracle capped at dimension {DENSE_CAP}, got {n}")
    A = np.empty((n, n))
    e = np.zeros(n)
    for col in range(n):
        e[col] = 1.0
        A[:, col] = op(e)
        e[col] = 0.0
    return A


@njit(cache=True)
def _jacobi_sweeps(A, Vt, tol, max_sweeps):
    n = A.shape[0]
    scale = 0.0
    for i in range(n):
        for j in range(n):
            scale += A[i, j] * A[i, j]
    scale = np.sqrt(scale)
    prev_off = np.inf
    off = 0.0
    sweeps = 0
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off += A[i, j] * A[i, j]
        off = np.sqrt(off)
        # Quadratic convergence stalls at the roundoff floor.
        if off <= tol * scale or (off <= 1e-10 * scale and off > 0.25 * prev_off):
            break
        prev_off = off
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                app = A[p, p]
                aqq = A[q, q]
                # A <- J^T A J with J[p,p]=J[q,q]=c, J[p,q]=s, J[q,p]=-s; rows
                # first, then mirror into columns (A stays symmetric).
                for k in range(n):
                    apk = A[p, k]
                    aqk = A[q, k]
                    A[p, k] = c * apk - s * aqk
                    A[q, k] = s * apk + c * aqk
                A[p, p] = c * c * app - 2.0 * c * s * apq + s * s * aqq
                A[q, q] = s * s * app + 2.0 * c * s * apq + c * c * aqq
                A[p, q] = 0.0
                A[q, p] = 0.0
                for k in range(n):
                    if k != p and k != q:
                        A[k, p] = A[p, k]
                        A[k, q] = A[q, k]
                # Vt holds eigenvectors as rows.
                for k in range(n):
                    vpk = Vt[p, k]
                    vqk = Vt[q, k]
                    Vt[p, k] = c * vpk - s * vqk
                    Vt[q, k] = s * vpk + c * vqk
    return off / scale if scale > 0 else 0.0, sweeps


def dense_sym_eig(A: np.ndarray, tol: float = 1e-15, max_sweeps: int = 60):
    """Eigen-decomposition of a dense symmetric matrix by cyclic Jacobi.

    Returns ascending eigenvalues and the matching orthonormal eigenvectors as
    columns.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    if n > DENSE_CAP:
        raise DimensionTooLarge(f"dense oracle capped at dimension {DENSE_CAP}, got {n}")
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError("matrix is not symmetric")
    A = np.ascontiguousarray(0.5 * (A + A.T))
    Vt = np.eye(n)
    rel_off, sweeps = _jacobi_sweeps(A, Vt, tol, max_sweeps)
    if rel_off > 1e-9:
        raise NoConvergence("Jacobi sweeps exhausted", sweeps, float(rel_off))
    evals = np.diag(A).copy()
    order = np.argsort(evals, kind="stable")
    return evals[order], Vt.T[:, order].copy()


@dataclass
class EigenPair:
    value: float
    vector: np.ndarray
    residual: float
    iterations: int = 0
    history: list = field(default_factory=list)


def inverse_power_iteration(op: LinearMap, shift: float, opts: SolveOptions = SolveOptions(),
                            x0: np.ndarray | None = None, inner_tol: float = 1e-13,
                            volume: float = 1.0) -> EigenPair:
    """Smallest eigenpair of a symmetric ``op`` by shifted inverse iteration.

    ``shift`` must lie strictly below the smallest eigenvalue, so each step is a
    CG solve with the positive definite ``op - shift``.  The returned vector is
    scaled so that ``volume * sum(v**2) == 1`` and has positive sum.  The
    residual is ||op(q) - lambda q||_2 for the Euclidean unit vector q.
    """
    n = op.size
    shifted = op.shifted(shift)
    inner = SolveOptions(rel_tol=inner_tol, max_iter=opts.max_iter)
    q = np.ones(n) if x0 is None else np.array(x0, dtype=float)
    q /= np.linalg.norm(q)
    lam = float(q @ op(q))
    max_iter = opts.max_iter if opts.max_iter is not None else 10 * n
    history = []
    for it in range(1, max_iter + 1):
        z = cg_solve(shifted, q, inner, x0=q / max(lam - shift, 1e-300))
        q = z / np.linalg.norm(z)
        Aq = op(q)
        lam = float(q @ Aq)
        res = float(np.linalg.norm(Aq - lam * q))
        history.append(res)
        if res <= opts.rel_tol * max(1.0, abs(lam), abs(shift)):
            if q.sum() < 0:
                q = -q
            return EigenPair(lam, q / np.sqrt(volume), res, it, history)
    raise NoConvergence("inverse_power_iteration reached max_iter", max_iter, res)
