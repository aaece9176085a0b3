"""Conformal changes, CE certificates and the sign tests that classify CE membership.

A positive factor w changes the structure to theta_hat = w^(2/n) theta, whose
curvature is T(w).  On the lattice the deformed quadratic form is built from
edge conductances c_pq = w_p * w_q (geometric mean of w^2) and node volumes
w^(a+1) / N^4.  With those choices the identity

    E_hat(u) = E(w u)

holds exactly (summation by parts), so the sign of the deformed first
eigenvalue matches the base one to roundoff.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from .errors import CertificationFailure, PreconditionViolated
from .lattice import LatticePoint, canonicalize
from .linalg import LinearMap, SolveOptions, inverse_power_iteration
from .operators import Structure, apply_L, apply_T, require_positive
from .spectral import Sign, SpectralResult, eigen_residual_inf, lambda1


def curvature_of_conformal(s: Structure, w: np.ndarray) -> np.ndarray:
    """Webster curvature of w^(2/n) theta."""
    return apply_T(s, w)


@dataclass(frozen=True, eq=False)
class DeformedStructure:
    base: Structure
    w: np.ndarray
    rho_hat: np.ndarray
    volumes: np.ndarray
    conductances: np.ndarray  # shape (2, N^4): X+ and Y+ edges

    def laplacian(self, u: np.ndarray) -> np.ndarray:
        """Deformed sub-Laplacian, self-adjoint for the deformed volumes."""
        return self._flux(u) / (self.volumes * self.base.lattice.size)

    def _flux(self, u: np.ndarray) -> np.ndarray:
        # sum_q c_pq (u_q - u_p) * N^2 over all four neighbours.
        lat = self.base.lattice
        nb = lat.neighbor_table
        out = np.zeros_like(u)
        for row, back, c in ((0, 1, self.conductances[0]), (2, 3, self.conductances[1])):
            fwd = c * (u[nb[row]] - u)
            out += fwd
            # Edge p -> q=nb[row][p] also contributes -fwd at q.
            np.add.at(out, nb[row], -fwd)
        return lat.N**2 * out

    def apply_L(self, u: np.ndarray) -> np.ndarray:
        return -self.base.b * self.laplacian(u) + self.rho_hat * u

    def quadratic_form(self, u: np.ndarray) -> float:
        lat = self.base.lattice
        nb = lat.neighbor_table
        u = lat.field(u)
        grad2 = (self.conductances[0] * (u[nb[0]] - u) ** 2
                 + self.conductances[1] * (u[nb[2]] - u) ** 2)
        edge = self.base.b * lat.N**2 * float(np.sum(grad2)) * lat.node_volume
        return edge + float(np.sum(self.volumes * self.rho_hat * u * u))

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.sum(self.volumes * u * v))

    def lambda1(self, opts: SolveOptions = SolveOptions()) -> SpectralResult:
        """First eigenvalue of the deformed L, via the volume-symmetrized operator."""
        lat = self.base.lattice
        d = np.sqrt(self.volumes * lat.size)

        def sym(v):
            return d * self.apply_L(v / d)

        shift = float(np.min(self.rho_hat)) - 1.0
        pair = inverse_power_iteration(LinearMap(sym, lat.size), shift, opts)
        psi = pair.vector / d
        psi = psi / np.sqrt(self.inner(psi, psi))
        return SpectralResult(pair.value, psi, pair.residual, pair.iterations)


def deformed_structure(s: Structure, w: np.ndarray) -> DeformedStructure:
    lat = s.lattice
    w = require_positive(lat.field(w), "w")
    nb = lat.neighbor_table
    conductances = np.stack([w * w[nb[0]], w * w[nb[2]]])
    return DeformedStructure(
        base=s,
        w=w,
        rho_hat=curvature_of_conformal(s, w),
        volumes=w ** (s.a + 1.0) * lat.node_volume,
        conductances=conductances,
    )


@dataclass(frozen=True)
class NecessaryReport:
    identity_integral: float   # <rho_hat u^a, 1>, zero by the divergence theorem
    changes_sign: bool
    integral_rho_hat: float
    identically_zero: bool
    equation_residual: float
    identity_tol: float

    @property
    def passed(self) -> bool:
        if abs(self.identity_integral) > self.identity_tol:
            return False
        if self.identically_zero:
            return True
        return self.changes_sign and self.integral_rho_hat < 0.0


def necessary_conditions(s: Structure, rho_hat: np.ndarray, u: np.ndarray,
                         tol: float = 1e-8, identity_tol: float = 1e-10,
                         zero_tol: float = 1e-12) -> NecessaryReport:
    """Necessary conditions on rho_hat in PC(theta) for the flat structure rho = 0."""
    lat = s.lattice
    if np.max(np.abs(s.rho)) != 0.0:
        raise PreconditionViolated("necessary_conditions applies to rho = 0 only")
    rho_hat = lat.field(rho_hat)
    u = require_positive(lat.field(u))
    res = float(np.max(np.abs(apply_L(s, u) - rho_hat * u**s.a)))
    if res > tol:
        raise PreconditionViolated(f"(rho_hat, u) does not solve the equation: residual {res:.3e}")
    return NecessaryReport(
        identity_integral=lat.integrate(rho_hat * u**s.a),
        changes_sign=bool(np.min(rho_hat) < -zero_tol and np.max(rho_hat) > zero_tol),
        integral_rho_hat=lat.integrate(rho_hat),
        identically_zero=bool(np.max(np.abs(rho_hat)) <= zero_tol),
        equation_residual=res,
        identity_tol=identity_tol,
    )


def positive_example(s: Structure, opts: SolveOptions = SolveOptions(),
                     spectral: SpectralResult | None = None) -> tuple[np.ndarray, np.ndarray, float]:
    """For lambda1 > 0: rho_hat = lambda1 psi^(1-a) is positive and L psi = rho_hat psi^a.

    Returns (rho_hat, psi, ||L psi - rho_hat psi^a||_inf).
    """
    spec = lambda1(s, opts) if spectral is None else spectral
    if spec.lambda1 <= s.zero_tol():
        raise PreconditionViolated(f"positive_example needs lambda1 > 0, got {spec.lambda1:.3e}")
    psi = spec.psi
    rho_hat = spec.lambda1 * psi ** (1.0 - s.a)
    defect = float(np.max(np.abs(apply_L(s, psi) - rho_hat * psi**s.a)))
    bound = 10.0 * eigen_residual_inf(s, spec) + roundoff_floor(s, psi)
    if defect > bound:
        raise PreconditionViolated(f"identity defect {defect:.3e} exceeds {bound:.3e}")
    return rho_hat, psi, defect


def roundoff_floor(s: Structure, u: np.ndarray) -> float:
    """A few ulps of the stencil applied to u."""
    scale = (8.0 * s.b * s.N**2 + float(np.max(np.abs(s.rho)))) * float(np.max(np.abs(u)))
    return 64.0 * np.finfo(float).eps * scale


@dataclass(frozen=True)
class RightTranslation:
    """Node permutation p -> p . g for a lattice element g = (i/N, j/N, k/N^2)."""

    g: LatticePoint
    N: int

    @classmethod
    def of(cls, g, N: int) -> "RightTranslation":
        return cls(LatticePoint(*(int(v) for v in g)), int(N))

    def permutation(self, lattice) -> np.ndarray:
        gi, gj, gk = self.g
        i, j, k = lattice.i, lattice.j, lattice.k
        ci, cj, ck = _canon(i + gi, j + gj, k + gk + i * gj, self.N)
        return lattice.index(ci, cj, ck)

    def inverse(self) -> "RightTranslation":
        gi, gj, gk = self.g
        # (gi, gj, gk)^-1 = (-gi, -gj, -gk + gi*gj) in lattice units.
        return RightTranslation(LatticePoint(-gi, -gj, -gk + gi * gj), self.N)

    def to_json(self) -> dict:
        return {"kind": "right_translation", "g": list(self.g)}


def _canon(i, j, k, N):
    a = -np.floor_divide(i, N)
    return i + a * N, np.mod(j, N), np.mod(k + a * j * N, N * N)


def identity_translation(N: int) -> RightTranslation:
    return RightTranslation(LatticePoint(0, 0, 0), N)


def pullback(u: np.ndarray, phi: RightTranslation, lattice) -> np.ndarray:
    """(u o phi)(p) = u(p . g)."""
    return lattice.field(u)[phi.permutation(lattice)]


@dataclass(frozen=True)
class CECertificate:
    phi: RightTranslation
    u: np.ndarray
    rho_hat: np.ndarray
    residual: float

    def to_json(self) -> str:
        return json.dumps({
            "phi": self.phi.to_json(),
            "u": [float(v) for v in self.u],
            "rho_hat": [float(v) for v in self.rho_hat],
            "residual": float(self.residual),
        })

    @classmethod
    def from_json(cls, text: str) -> "CECertificate":
        data = json.loads(text)
        phi = data["phi"]
        if phi.get("kind") != "right_translation":
            raise ValueError(f"unsupported diffeomorphism kind {phi.get('kind')!r}")
        u = np.asarray(data["u"], dtype=float)
        N = round(u.size ** 0.25)
        if N**4 != u.size:
            raise ValueError("certificate field length is not N^4")
        return cls(RightTranslation.of(phi["g"], N), u,
                   np.asarray(data["rho_hat"], dtype=float), float(data["residual"]))


def ce_residual(s: Structure, rho_hat: np.ndarray, phi: RightTranslation, u: np.ndarray) -> float:
    """||L u - (rho_hat o phi) u^a||_inf."""
    pulled = pullback(rho_hat, phi, s.lattice)
    return float(np.max(np.abs(apply_L(s, u) - pulled * u**s.a)))


def certify_CE(s: Structure, rho_hat: np.ndarray, phi: RightTranslation, u: np.ndarray,
               tol: float = 1e-8) -> CECertificate:
    """Certify that (phi, u) realizes rho_hat by a CR conformally equivalent deformation."""
    lat = s.lattice
    rho_hat = lat.field(rho_hat)
    u = require_positive(lat.field(u))
    if phi.N != lat.N:
        raise PreconditionViolated("diffeomorphism built for a different lattice")
    res = ce_residual(s, rho_hat, phi, u)
    if res > tol:
        raise CertificationFailure(res, tol)
    return CECertificate(phi, u.copy(), rho_hat.copy(), res)


def manufacture_CE(s: Structure, w: np.ndarray, phi: RightTranslation) -> tuple[np.ndarray, np.ndarray]:
    """rho_hat = T(w) o phi^-1, for which (phi, w) is an exact CE pair."""
    return pullback(apply_T(s, w), phi.inverse(), s.lattice), w


class Membership(enum.Enum):
    CERTIFIED_MEMBER = "certified-member"
    PREDICTED_MEMBER = "predicted-member"
    NON_MEMBER = "non-member"
    UNKNOWN = "unknown"

    @property
    def is_member(self) -> bool:
        return self in (Membership.CERTIFIED_MEMBER, Membership.PREDICTED_MEMBER)


def classify_CE(s: Structure, rho_hat: np.ndarray, certificate: CECertificate | None = None,
                zero_tol: float | None = None, value_tol: float = 1e-12,
                spectral: SpectralResult | None = None) -> Membership:
    """Sign test for CE(theta) membership according to the class of lambda1.

    lambda1 < 0: member iff rho_hat < 0 somewhere; lambda1 > 0: iff rho_hat > 0
    somewhere; lambda1 = 0: iff rho_hat changes sign or vanishes identically.
    A member is reported as certified only when a valid certificate for this
    very rho_hat is supplied.
    """
    rho_hat = s.lattice.field(rho_hat)
    tol = s.zero_tol() if zero_tol is None else zero_tol
    spec = lambda1(s) if spectral is None else spectral
    regime = Sign.of(spec.lambda1, tol)
    neg = bool(np.min(rho_hat) < -value_tol)
    pos = bool(np.max(rho_hat) > value_tol)
    if regime is Sign.NEGATIVE:
        member = neg
    elif regime is Sign.POSITIVE:
        member = pos
    else:
        # A one-signed rho_hat that is not identically zero is excluded by
        # pairing with psi: <psi, (rho_hat o phi) u^a> = lambda1 <psi, u> = 0.
        member = (neg and pos) or (not neg and not pos)
    if not member:
        return Membership.NON_MEMBER
    if certificate is not None and np.array_equal(certificate.rho_hat, rho_hat):
        try:
            certify_CE(s, rho_hat, certificate.phi, certificate.u)
        except CertificationFailure:
            return Membership.PREDICTED_MEMBER
        return Membership.CERTIFIED_MEMBER
    return Membership.PREDICTED_MEMBER
