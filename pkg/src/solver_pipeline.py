"""End-to-end solve: one Poisson reduction, the cubic roots, and verified solution branches."""

import itertools
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from src.domain_grid import DomainSpec, GridField, SignClass, h1_inner, h1_norm, sign_classify
from src.elliptic_ops import (
    POISSON_TOL,
    LaplacianOperator,
    ReducedProblem,
    reduce_problem,
    solve_cg,
)
from src.energy import ProblemParams, energy_eval, thresholds
from src.errors import (
    BallEscapeError,
    DegenerateCoefficientError,
    DomainMismatchError,
    InvalidParameterError,
    IterationLimitError,
    VerificationError,
    ZeroFieldError,
)
from src.reduction_algebra import CubicRoots, Regime, solve_reduced, zero_mu_scaling

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-8
ARMIJO_SLOPE = 1e-4


class Role(str, Enum):
    U1_LIKE = "u1-like"
    U2_LIKE = "u2-like"
    U3_LIKE = "u3-like"
    DOUBLE = "double"
    SINGLE = "single"
    TRIVIAL = "trivial"
    REPRESENTATIVE = "representative"


class NormBand(str, Enum):
    """Where ||u||^2 sits relative to a/3b < 2a/3b < a/b < 4a/3b."""

    BELOW_THIRD = "(0,a/3b)"
    THIRD_TO_TWO_THIRDS = "(a/3b,2a/3b)"
    TWO_THIRDS_TO_ONE = "(2a/3b,a/b)"
    ONE_TO_FOUR_THIRDS = "(a/b,4a/3b)"
    ABOVE_FOUR_THIRDS = "(4a/3b,inf)"


_BANDS = list(NormBand)


def band_label(a: float, b: float, norm_sq: float) -> NormBand:
    edges = thresholds(a, b).norm_bands
    return _BANDS[int(np.searchsorted(edges, norm_sq, side="right"))]


@dataclass(frozen=True, eq=False)
class SolutionBranch:
    multiplier: float
    field: GridField = field(repr=False)
    norm_sq: float
    energy: float
    sign_class: SignClass
    band: NormBand
    residual: float
    role: Role
    a: float
    b: float

    @property
    def coefficient(self) -> float:
        """The nonlocal modulus a - b ||u||^2."""
        return self.a - self.b * self.norm_sq


@dataclass(frozen=True, eq=False)
class SolutionSet(Sequence):
    branches: Tuple[SolutionBranch, ...]
    roots: CubicRoots
    reduced: ReducedProblem = field(repr=False)
    params: ProblemParams = field(repr=False)
    infinite_family: bool = False

    def __getitem__(self, index):
        return self.branches[index]

    def __len__(self) -> int:
        return len(self.branches)

    @property
    def regime(self) -> Regime:
        return self.roots.regime

    def by_role(self, role: Role) -> SolutionBranch:
        for branch in self.branches:
            if branch.role is role:
                return branch
        raise KeyError(role.value)


def weak_residual(
    p: ProblemParams, u: GridField, operator: Optional[LaplacianOperator] = None
) -> float:
    """||(a - b||u||^2)(-Delta_h u) - mu f||_2 relative to ||mu f||_2.

    For mu = 0 the scale falls back to a * ||Delta_h u||_2.
    """
    if u.domain != p.f.domain:
        raise DomainMismatchError("field and source live on different domains")
    A = operator if operator is not None else LaplacianOperator.assemble(u.domain)
    lap = A.matvec(u.values)
    residual = (p.a - p.b * h1_inner(u, u)) * lap - p.mu * p.f.values
    scale = abs(p.mu) * float(np.linalg.norm(p.f.values))
    if scale == 0.0:
        scale = p.a * float(np.linalg.norm(lap))
    if scale == 0.0:
        return float(np.linalg.norm(residual))
    return float(np.linalg.norm(residual)) / scale


def _assign_roles(roots: CubicRoots) -> List[Role]:
    if roots.regime is Regime.THREE:
        # the ordering T2 -> u1, T3 -> u2, T1 -> u3 matches the norm bands and energies
        if roots.mu > 0:
            return [Role.U3_LIKE, Role.U1_LIKE, Role.U2_LIKE]
        return [Role.U2_LIKE, Role.U1_LIKE, Role.U3_LIKE]
    if roots.regime is Regime.TWO:
        return [Role.DOUBLE if m == 2 else Role.SINGLE for m in roots.multiplicity]
    return [Role.SINGLE for _ in roots.roots]


def make_branch(
    p: ProblemParams,
    u: GridField,
    multiplier: float,
    role: Role,
    operator: Optional[LaplacianOperator] = None,
    sign_tol: float = 0.0,
) -> SolutionBranch:
    norm_sq = h1_inner(u, u)
    return SolutionBranch(
        multiplier=multiplier,
        field=u,
        norm_sq=norm_sq,
        energy=energy_eval(p, u),
        sign_class=sign_classify(u, sign_tol),
        band=band_label(p.a, p.b, norm_sq),
        residual=weak_residual(p, u, operator),
        role=role,
        a=p.a,
        b=p.b,
    )


def branches_from_reduction(
    p: ProblemParams,
    reduced: ReducedProblem,
    tol: float = RESIDUAL_TOL,
    double_root_tol: Optional[float] = None,
    sign_tol: float = 0.0,
    operator: Optional[LaplacianOperator] = None,
) -> SolutionSet:
    """Turn the reduced problem into verified branches for the parameter mu in p."""
    if operator is None:
        operator = LaplacianOperator.assemble(reduced.domain)
    roots = solve_reduced(p.a, p.b, reduced.alpha, p.mu, double_root_tol)

    if roots.regime is Regime.MU_ZERO:
        V = zero_mu_scaling(p.a, p.b, reduced.U)
        branches = [
            make_branch(p, GridField.zeros(reduced.domain), 0.0, Role.TRIVIAL, operator, sign_tol),
            make_branch(p, V, roots.roots[-1], Role.REPRESENTATIVE, operator, sign_tol),
        ]
        infinite = True
    else:
        branches = [
            make_branch(p, reduced.U.scaled(t), t, role, operator, sign_tol)
            for t, role in zip(roots.roots, _assign_roles(roots))
        ]
        infinite = False

    for branch in branches:
        if branch.residual > tol:
            raise VerificationError(
                f"branch {branch.role.value} (T={branch.multiplier:.17g}) has weak residual "
                f"{branch.residual:.3e} > {tol:.3e}",
                name=branch.role.value,
            )

    return SolutionSet(
        branches=tuple(sorted(branches, key=lambda br: br.multiplier)),
        roots=roots,
        reduced=reduced,
        params=p,
        infinite_family=infinite,
    )


def solve_all(
    p: ProblemParams,
    spec: DomainSpec,
    tol: float = RESIDUAL_TOL,
    cg_tol: float = POISSON_TOL,
    double_root_tol: Optional[float] = None,
    sign_tol: float = 0.0,
) -> SolutionSet:
    """Every solution of the nonlocal problem for one mu, sorted by multiplier.

    mu = 0 yields the trivial solution plus one representative of the infinite
    family ||V||^2 = a/b, flagged with infinite_family.
    """
    reduced = reduce_problem(spec, p.f, p.a, p.b, rel_tol=cg_tol)
    solutions = branches_from_reduction(p, reduced, tol, double_root_tol, sign_tol)
    logger.info(
        "mu=%.6g: regime %s, %d branch(es)", p.mu, solutions.regime.value, len(solutions)
    )
    return solutions


def check_linear_dependence(branches: Sequence) -> float:
    """max over ordered pairs of ||u - c * ubar|| / ||u||, c = (a - b||ubar||^2)/(a - b||u||^2)."""
    if len(branches) < 2:
        raise InvalidParameterError("need at least two branches to compare")
    for branch in branches:
        if abs(branch.coefficient) <= 1e-14 * branch.a:
            raise DegenerateCoefficientError(
                f"branch T={branch.multiplier:.17g} has vanishing coefficient a - b||u||^2"
            )
        if branch.norm_sq == 0.0:
            raise ZeroFieldError("linear dependence is undefined for the zero branch")

    worst = 0.0
    for u, ubar in itertools.permutations(branches, 2):
        factor = ubar.coefficient / u.coefficient
        deviation = h1_norm(u.field - ubar.field.scaled(factor)) / h1_norm(u.field)
        worst = max(worst, deviation)
    return worst


def descent_minimize(
    p: ProblemParams,
    u0: GridField,
    step0: float = 1.0,
    grad_tol: float = 1e-10,
    max_iter: int = 10_000,
    cg_tol: float = POISSON_TOL,
) -> GridField:
    """Steepest descent on I in the H_0^1 metric with Armijo backtracking.

    The H_0^1 gradient of I at u is (a - b||u||^2) u - mu w, where w solves
    -Delta_h w = f; its norm is the dual norm of I'(u).
    """
    if p.mu < 0:
        raise InvalidParameterError("descent oracle targets the local minimum for mu >= 0")
    if u0.domain != p.f.domain:
        raise DomainMismatchError("start field and source live on different domains")
    table = thresholds(p.a, p.b)
    if h1_inner(u0, u0) >= table.norm_bands[0]:
        raise InvalidParameterError("start field must satisfy ||u0||^2 < a/(3b)")
    trust = table.norm_bands[1]

    load = solve_cg(LaplacianOperator.assemble(u0.domain), p.f, rel_tol=cg_tol)
    eps = np.finfo(float).eps

    def gradient(u: GridField) -> GridField:
        return u.scaled(p.a - p.b * h1_inner(u, u)) - load.scaled(p.mu)

    u = u0
    energy = energy_eval(p, u)
    grad_norm = math.inf
    for iteration in range(max_iter + 1):
        grad = gradient(u)
        grad_norm = h1_norm(grad)
        if grad_norm <= grad_tol:
            logger.debug("descent converged after %d steps (|grad|=%.3e)", iteration, grad_norm)
            return u
        if iteration == max_iter:
            break

        s = h1_inner(u, u)
        # sufficient decrease is judged up to the rounding noise of evaluating I
        noise = 64 * eps * (0.5 * p.a * s + 0.25 * p.b * s * s + abs(energy) + 1e-300)
        step = step0
        while True:
            candidate = u - grad.scaled(step)
            trial = energy_eval(p, candidate)
            if trial <= energy - ARMIJO_SLOPE * step * grad_norm ** 2 + noise:
                break
            step *= 0.5
            if step < 1e-16 * step0:
                raise IterationLimitError("Armijo backtracking failed", grad_norm, iteration)

        u, energy = candidate, trial
        norm_sq = h1_inner(u, u)
        if norm_sq >= trust:
            raise BallEscapeError(
                f"descent left the ball ||u||^2 < 2a/(3b) (||u||^2={norm_sq:.6g}); "
                "mu is too large for the local-minimum basin",
                norm_sq,
            )

    raise IterationLimitError("descent did not reach the gradient tolerance", grad_norm, max_iter)
