"""Scalar algebra of the reduced problem.

Every solution is T * U where U solves -Delta U = f and T is a real root of
g(t) = (a - b * alpha * t^2) * t - mu, alpha = ||U||^2.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Optional, Tuple

import numpy as np

from src.domain_grid import GridField, h1_inner
from src.errors import DegenerateReductionError, InvalidParameterError, ZeroFieldError

logger = logging.getLogger(__name__)

DOUBLE_ROOT_REL_TOL = 1e-10
NEWTON_STEPS = 2


class Regime(str, Enum):
    THREE = "three"
    TWO = "two"
    ONE = "one"
    MU_ZERO = "mu-zero"


class Bracket(str, Enum):
    BELOW = "below"
    BETWEEN = "between"
    ABOVE = "above"


@dataclass(frozen=True)
class CubicRoots:
    roots: Tuple[float, ...]
    multiplicity: Tuple[int, ...]
    brackets: Tuple[Bracket, ...]
    regime: Regime
    a: float
    b: float
    alpha: float
    mu: float

    @property
    def count(self) -> int:
        return len(self.roots)

    @property
    def t_M(self) -> float:
        return stationary_points(self.a, self.b, self.alpha)[1]


@dataclass(frozen=True)
class RescaleRoots:
    """Multipliers t with t * (a - b * t^2 * alpha) = a - b * alpha; t = 1 always first."""

    values: Tuple[float, ...]
    repeated: bool = False

    def __iter__(self) -> Iterator[float]:
        return iter(self.values)

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, index: int) -> float:
        return self.values[index]


def _require_positive(**kwargs: float) -> None:
    for name, value in kwargs.items():
        if not value > 0:
            raise InvalidParameterError(f"{name} must be positive, got {value}")


def g_eval(a: float, b: float, alpha: float, mu: float, t: float) -> float:
    return (a - b * alpha * t * t) * t - mu


def g_prime(a: float, b: float, alpha: float, t: float) -> float:
    return a - 3.0 * b * alpha * t * t


def stationary_points(a: float, b: float, alpha: float) -> Tuple[float, float]:
    """(t_m, t_M) = (-sqrt(a / (3 b alpha)), +sqrt(a / (3 b alpha)))."""
    _require_positive(a=a, b=b, alpha=alpha)
    t_M = math.sqrt(a / (3.0 * b * alpha))
    return -t_M, t_M


def mu_crit(a: float, b: float, norm_U: float) -> float:
    """Height of the local maximum of g + mu; separates 3/2/1-root regimes."""
    _require_positive(a=a, b=b, norm_U=norm_U)
    return 2.0 * a * math.sqrt(3.0 * a * b) / (9.0 * b * norm_U)


def mu_crit_lower_bound(a: float, b: float, lambda1: float, norm_f_l2: float) -> float:
    """The lambda_1 form of the mu_crit lower bound.

    Certificate only; on the unit interval it overshoots the true mu_crit.
    """
    _require_positive(a=a, b=b, lambda1=lambda1, norm_f_l2=norm_f_l2)
    return 2.0 * a * lambda1 * math.sqrt(3.0 * a * b) / (9.0 * b * norm_f_l2)


def mu_crit_sobolev_bound(a: float, b: float, S: float, norm_f_dual: float) -> float:
    _require_positive(a=a, b=b, S=S, norm_f_dual=norm_f_dual)
    return 2.0 * a * math.sqrt(3.0 * a * b * S) / (9.0 * b * norm_f_dual)


def _polish(a: float, b: float, alpha: float, mu: float, t: float) -> float:
    best, best_res = t, abs(g_eval(a, b, alpha, mu, t))
    for _ in range(NEWTON_STEPS):
        slope = g_prime(a, b, alpha, t)
        if slope == 0.0:
            break
        t = t - g_eval(a, b, alpha, mu, t) / slope
        res = abs(g_eval(a, b, alpha, mu, t))
        if res < best_res:
            best, best_res = t, res
    return best


def _bracket(t: float, t_M: float) -> Bracket:
    if t < -t_M:
        return Bracket.BELOW
    if t > t_M:
        return Bracket.ABOVE
    return Bracket.BETWEEN


def _positive_mu_roots(a: float, b: float, alpha: float, mu: float, regime: Regime):
    """Roots for mu > 0, ascending, with multiplicities."""
    p = -a / (b * alpha)
    q = mu / (b * alpha)
    t_M = math.sqrt(a / (3.0 * b * alpha))

    if regime is Regime.TWO:
        # (t - t_M)^2 (t + 2 t_M) at mu = mu_crit
        simple = _polish(a, b, alpha, mu, -2.0 * t_M)
        return [simple, t_M], [1, 2]

    if regime is Regime.THREE:
        # trigonometric form of the three-real-root case
        radius = 2.0 * math.sqrt(-p / 3.0)
        arg = (3.0 * q / (2.0 * p)) * math.sqrt(-3.0 / p)
        theta = math.acos(min(1.0, max(-1.0, arg))) / 3.0
        raw = [radius * math.cos(theta - 2.0 * math.pi * k / 3.0) for k in range(3)]
        roots = sorted(_polish(a, b, alpha, mu, t) for t in raw)
        return roots, [1, 1, 1]

    # Cardano, one real root (negative for mu > 0)
    disc = q * q / 4.0 + p ** 3 / 27.0
    sq = math.sqrt(max(disc, 0.0))
    t = float(np.cbrt(-q / 2.0 + sq) + np.cbrt(-q / 2.0 - sq))
    return [_polish(a, b, alpha, mu, t)], [1]


def solve_reduced(
    a: float,
    b: float,
    alpha: float,
    mu: float,
    double_root_tol: Optional[float] = None,
) -> CubicRoots:
    """All real roots of b*alpha*t^3 - a*t + mu = 0, ascending.

    double_root_tol is absolute; by default 1e-10 * mu_crit.
    """
    if not alpha > 0:
        raise DegenerateReductionError(f"alpha must be positive, got {alpha}")
    _require_positive(a=a, b=b)

    crit = mu_crit(a, b, math.sqrt(alpha))
    if double_root_tol is None:
        double_root_tol = DOUBLE_ROOT_REL_TOL * crit
    if double_root_tol < 0:
        raise InvalidParameterError(f"double_root_tol must be >= 0, got {double_root_tol}")

    t_M = math.sqrt(a / (3.0 * b * alpha))

    if mu == 0.0:
        edge = math.sqrt(a / (b * alpha))
        roots = [-edge, 0.0, edge]
        multiplicity = [1, 1, 1]
        regime = Regime.MU_ZERO
    else:
        gap = abs(mu) - crit
        if abs(gap) <= double_root_tol:
            regime = Regime.TWO
        elif gap < 0:
            regime = Regime.THREE
        else:
            regime = Regime.ONE
        roots, multiplicity = _positive_mu_roots(a, b, alpha, abs(mu), regime)
        if mu < 0:
            # g is odd in (t, mu): roots(-mu) = -roots(mu)
            roots = [-t for t in reversed(roots)]
            multiplicity = list(reversed(multiplicity))

    logger.debug("solve_reduced(mu=%.17g): regime=%s roots=%s", mu, regime.value, roots)
    return CubicRoots(
        roots=tuple(float(t) for t in roots),
        multiplicity=tuple(multiplicity),
        brackets=tuple(_bracket(t, t_M) for t in roots),
        regime=regime,
        a=a,
        b=b,
        alpha=alpha,
        mu=mu,
    )


def rescale_roots(a: float, b: float, alpha: float) -> RescaleRoots:
    """Given one solution u with ||u||^2 = alpha, the multipliers t making t*u a solution too."""
    _require_positive(a=a, b=b, alpha=alpha)
    disc = 4.0 * a / (b * alpha) - 3.0
    if abs(disc) <= 1e-14 * 4.0 * a / (b * alpha):
        return RescaleRoots((1.0, -0.5, -0.5), repeated=True)
    if disc < 0:
        return RescaleRoots((1.0,))
    root = math.sqrt(disc)
    t1 = 0.5 * (-1.0 + root)
    t2 = 0.5 * (-1.0 - root)
    return RescaleRoots((1.0, t1, t2), repeated=abs(t1 - 1.0) <= 1e-14)


def zero_mu_scaling(a: float, b: float, u: GridField) -> GridField:
    """V = sqrt(a b) / (b ||u||) * u, which makes a - b ||V||^2 vanish."""
    _require_positive(a=a, b=b)
    norm_sq = h1_inner(u, u)
    if norm_sq == 0.0:
        raise ZeroFieldError("cannot rescale the zero field")
    return u.scaled(math.sqrt(a * b) / (b * math.sqrt(norm_sq)))
