"""Discrete Dirichlet Laplacian, conjugate gradients, and the auxiliary Poisson reduction."""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from src.domain_grid import DomainSpec, GridField, h1_inner, l2_inner
from src.errors import (
    DegenerateSourceError,
    DomainMismatchError,
    InvalidParameterError,
    InvalidSourceError,
    IterationLimitError,
    VerificationError,
)

logger = logging.getLogger(__name__)

POISSON_TOL = 1e-10
EIGEN_TOL = 1e-8


def _second_difference(n: int, h: float) -> sp.csr_matrix:
    return sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n), format="csr") / (h * h)


@dataclass(frozen=True)
class LaplacianOperator:
    """-Delta_h with the 3-point (1D) or 5-point (2D) stencil, scaled by 1/h^2 per axis."""

    domain: DomainSpec
    matrix: sp.csr_matrix = field(repr=False)

    @classmethod
    def assemble(cls, domain: DomainSpec) -> "LaplacianOperator":
        if domain.dimension == 1:
            matrix = _second_difference(domain.resolution[0], domain.h[0])
        else:
            n1, n2 = domain.resolution
            h1, h2 = domain.h
            # row-major node ordering: index = i * n2 + j
            matrix = sp.kron(_second_difference(n1, h1), sp.identity(n2)) + sp.kron(
                sp.identity(n1), _second_difference(n2, h2)
            )
        return cls(domain, sp.csr_matrix(matrix))

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def apply(self, u: GridField) -> GridField:
        if u.domain != self.domain:
            raise DomainMismatchError("operator and field live on different domains")
        return GridField(self.domain, self.matvec(u.values))


@dataclass(frozen=True)
class ReducedProblem:
    """The whole nonlocal problem compressed to U and alpha = ||U||^2."""

    U: GridField
    alpha: float
    a: float
    b: float
    source: GridField = field(repr=False)

    @property
    def norm_U(self) -> float:
        return math.sqrt(self.alpha)

    @property
    def domain(self) -> DomainSpec:
        return self.U.domain


def solve_cg(
    A: LaplacianOperator,
    rhs: GridField,
    rel_tol: float = POISSON_TOL,
    max_iter: Optional[int] = None,
    x0: Optional[GridField] = None,
) -> GridField:
    """Plain (unpreconditioned) conjugate gradients.

    Converged means ||A x - rhs||_2 <= rel_tol * ||rhs||_2, measured on the true
    residual; the recursive residual is only used to decide when to re-check.
    """
    if not 0 < rel_tol < 1:
        raise InvalidParameterError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    if max_iter is None:
        max_iter = 10 * A.domain.size
    if max_iter < 1:
        raise InvalidParameterError(f"max_iter must be >= 1, got {max_iter}")
    if rhs.domain != A.domain:
        raise DomainMismatchError("right-hand side and operator live on different domains")

    b = rhs.values
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return GridField.zeros(A.domain)

    target = rel_tol * b_norm
    x = np.zeros_like(b) if x0 is None else np.array(x0.values, dtype=float)
    r = b - A.matvec(x)
    p = r.copy()
    rr = float(r @ r)

    iterations = 0
    while True:
        if math.sqrt(rr) <= target:
            # recursive residual drifts from the true one; confirm before returning
            r = b - A.matvec(x)
            rr = float(r @ r)
            if math.sqrt(rr) <= target:
                break
            p = r.copy()
        if iterations >= max_iter:
            raise IterationLimitError(
                "conjugate gradients did not converge", math.sqrt(rr), iterations
            )
        Ap = A.matvec(p)
        step = rr / float(p @ Ap)
        x += step * p
        r -= step * Ap
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
        iterations += 1

    logger.debug("CG converged in %d iterations (residual %.3e)", iterations, math.sqrt(rr))
    return GridField(A.domain, x)


def reduce_problem(
    spec: DomainSpec,
    f: GridField,
    a: float,
    b: float,
    rel_tol: float = POISSON_TOL,
    x0: Optional[GridField] = None,
) -> ReducedProblem:
    """Solve -Delta U = f once; every solution of the nonlocal problem is a multiple of U."""
    if a <= 0 or b <= 0:
        raise InvalidParameterError(f"a and b must be positive, got a={a}, b={b}")
    if f.domain != spec:
        raise DomainMismatchError("source field does not live on the requested domain")
    if np.any(f.values < 0):
        raise InvalidSourceError("source f has negative nodes; f must be nonnegative")
    if not np.any(f.values > 0):
        raise DegenerateSourceError("source f vanishes identically")

    A = LaplacianOperator.assemble(spec)
    U = solve_cg(A, f, rel_tol=rel_tol, x0=x0)
    alpha = h1_inner(U, U)
    load = l2_inner(f, U)

    # |alpha - (f, U)| = |(A U - f, U)| <= vol * ||r|| * ||U||
    bound = 10 * rel_tol * spec.cell_volume * float(np.linalg.norm(f.values)) * float(
        np.linalg.norm(U.values)
    )
    if abs(alpha - load) > bound:
        raise VerificationError(
            f"alpha identity failed: ||U||^2={alpha:.17g}, (f, U)={load:.17g}",
            name="alpha_identity",
        )

    logger.debug("Reduced problem: alpha=%.17g on %s", alpha, spec.describe())
    return ReducedProblem(U=U, alpha=alpha, a=a, b=b, source=f)


def smallest_eigenvalue(
    spec: DomainSpec,
    rel_tol: float = EIGEN_TOL,
    max_iter: int = 200,
    cg_tol: float = POISSON_TOL,
) -> float:
    """First Dirichlet eigenvalue of -Delta_h by inverse power iteration."""
    if not 0 < rel_tol < 1:
        raise InvalidParameterError(f"rel_tol must lie in (0, 1), got {rel_tol}")

    A = LaplacianOperator.assemble(spec)
    # the principal eigenvector is positive, so the constant start overlaps it
    x = np.ones(spec.size)
    x /= np.linalg.norm(x)
    previous = float(x @ A.matvec(x))

    change = math.inf
    for iteration in range(1, max_iter + 1):
        y = solve_cg(A, GridField(spec, x), rel_tol=cg_tol, x0=GridField(spec, x / previous))
        x = y.values / np.linalg.norm(y.values)
        current = float(x @ A.matvec(x))
        change = abs(current - previous)
        if change <= rel_tol * abs(current):
            logger.debug("lambda_1=%.17g after %d inverse iterations", current, iteration)
            return current
        previous = current

    raise IterationLimitError("inverse power iteration stagnated", change, max_iter)
