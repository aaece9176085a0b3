"""Exception hierarchy shared by the crlab modules."""

from __future__ import annotations


class CRLabError(Exception):
    """Base class for every error raised by crlab."""


class LatticeMismatch(CRLabError, ValueError):
    """Two fields (or a field and a lattice) do not live on the same lattice."""


class FormulaError(CRLabError, ValueError):
    """A formula lies outside the quotient-compatible mini-language."""


class NonPositiveInput(CRLabError, ValueError):
    """An operator defined only on positive fields received a field with min <= 0."""


class NoConvergence(CRLabError, RuntimeError):
    """An iterative method exhausted its budget.

    ``iterations`` and ``residual`` describe the state at exit.
    """

    def __init__(self, message: str, iterations: int = 0, residual: float = float("nan")):
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class SingularLinearization(NoConvergence):
    """The inner linear solve of a Newton step stagnated (ker T'(u) != 0 suspected)."""


class NotOrthogonal(CRLabError, ValueError):
    """Right-hand side is not orthogonal to the operator kernel."""

    def __init__(self, inner_product: float, index: int = 0):
        super().__init__(
            f"right-hand side has inner product {inner_product:.3e} with kernel vector {index}"
        )
        self.inner_product = inner_product
        self.index = index


class DimensionTooLarge(CRLabError, ValueError):
    """Dense oracle requested above its size cap."""


class VerificationFailed(CRLabError, RuntimeError):
    """A constructed object failed its own componentwise verification."""


class PreconditionViolated(CRLabError, ValueError):
    """Inputs violate a documented precondition."""


class WrongInput(PreconditionViolated):
    """Prescribed curvature is not strictly negative where strict negativity is required."""


class WrongSignRegime(PreconditionViolated):
    """Negative prescribed curvature requested on a structure with lambda_1 >= 0."""


class MonotonicityViolation(CRLabError, RuntimeError):
    """A monotone iterate decreased (or left the upper/lower sandwich)."""


class Inconsistent(CRLabError, RuntimeError):
    """sign(lambda_1) and sign(Y) disagree beyond tolerance."""


class CertificationFailure(CRLabError, RuntimeError):
    """A CE certificate candidate does not satisfy the conformal-equivalence equation."""

    def __init__(self, residual: float, tolerance: float):
        super().__init__(f"certificate residual {residual:.3e} exceeds tolerance {tolerance:.1e}")
        self.residual = residual
        self.tolerance = tolerance
