"""Energy functional I(u) = a/2 ||u||^2 - b/4 ||u||^4 - mu (f, u) and its level structure."""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from src.domain_grid import GridField, h1_inner, l2_inner
from src.errors import DegenerateSourceError, InvalidParameterError, InvalidSourceError
from src.reduction_algebra import g_eval

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProblemParams:
    a: float
    b: float
    mu: float
    f: GridField

    def __post_init__(self) -> None:
        if not (self.a > 0 and self.b > 0):
            raise InvalidParameterError(f"a and b must be positive, got a={self.a}, b={self.b}")
        if not math.isfinite(self.mu):
            raise InvalidParameterError(f"mu must be finite, got {self.mu}")
        if np.any(self.f.values < 0):
            raise InvalidSourceError("source f must be nonnegative")
        if not np.any(self.f.values > 0):
            raise DegenerateSourceError("source f vanishes identically")

    def with_mu(self, mu: float) -> "ProblemParams":
        return ProblemParams(self.a, self.b, mu, self.f)

    @property
    def energy_tol(self) -> float:
        return 1e-10 * max(1.0, self.a * self.a / self.b)


class PSCase(str, Enum):
    NO_SEQUENCE = "no-sequence"
    LOW_BAND = "low-band"
    MID_BAND = "mid-band"
    NONCOMPACT_LEVEL = "noncompact-level"
    HIGH_BAND = "high-band"


@dataclass(frozen=True)
class PSClassification:
    case: PSCase
    limit_norms_sq: Tuple[float, ...]

    def contains(self, norm_sq: float, rel_tol: float = 1e-8) -> bool:
        return any(
            math.isclose(norm_sq, s, rel_tol=rel_tol, abs_tol=1e-14)
            for s in self.limit_norms_sq
        )


@dataclass(frozen=True)
class ThresholdTable:
    norm_bands: Tuple[float, float, float, float]
    energy_levels: Tuple[float, float, float, float, float]
    mountain_radius: float
    mountain_height: float


@dataclass(frozen=True)
class SobolevConstants:
    mu_star1: float
    mu_star: float
    R: float
    mu_0: float
    rho_0: float


def energy_eval(p: ProblemParams, u: GridField) -> float:
    s = h1_inner(u, u)
    return 0.5 * p.a * s - 0.25 * p.b * s * s - p.mu * l2_inner(p.f, u)


def gateaux(p: ProblemParams, u: GridField, v: GridField) -> float:
    return (p.a - p.b * h1_inner(u, u)) * h1_inner(u, v) - p.mu * l2_inner(p.f, v)


def critical_identity_residual(p: ProblemParams, u: GridField) -> float:
    """|(3b/4)s^2 - (a/2)s - I(u)|, which equals |<I'(u), u>|."""
    s = h1_inner(u, u)
    return abs(0.75 * p.b * s * s - 0.5 * p.a * s - energy_eval(p, u))


def ray_energy(a: float, b: float, alpha: float, mu: float, t: float) -> float:
    """I(tU) when U solves -Delta U = f, using (f, U) = alpha."""
    s = t * t * alpha
    return 0.5 * a * s - 0.25 * b * s * s - mu * t * alpha


def ray_energy_derivative(a: float, b: float, alpha: float, mu: float, t: float) -> float:
    return alpha * g_eval(a, b, alpha, mu, t)


def ps_limit_norms(a: float, b: float, c: float, tol: Optional[float] = None) -> PSClassification:
    """Candidate limits of ||u_n||^2 for a Palais-Smale sequence at level c.

    Solves (3b/4)s^2 - (a/2)s = c, i.e. s = a/(3b) * (1 +- sqrt(1 + 12 b c / a^2)).
    """
    if not (a > 0 and b > 0):
        raise InvalidParameterError(f"a and b must be positive, got a={a}, b={b}")
    if tol is None:
        tol = 1e-10 * max(1.0, a * a / b)

    floor = -a * a / (12.0 * b)
    noncompact = a * a / (4.0 * b)

    if c < floor - tol:
        return PSClassification(PSCase.NO_SEQUENCE, ())

    root = math.sqrt(max(0.0, 1.0 + 12.0 * b * c / (a * a)))
    plus = a / (3.0 * b) * (1.0 + root)
    # 1 - root rewritten without cancellation for c near 0
    minus = -4.0 * c / (a * (1.0 + root))

    if c <= 0.0:
        if abs(c - floor) <= tol:
            return PSClassification(PSCase.LOW_BAND, (a / (3.0 * b),))
        return PSClassification(PSCase.LOW_BAND, (minus, plus))
    if abs(c - noncompact) <= tol:
        return PSClassification(PSCase.NONCOMPACT_LEVEL, (a / b,))
    if c < noncompact:
        return PSClassification(PSCase.MID_BAND, (plus,))
    return PSClassification(PSCase.HIGH_BAND, (plus,))


def thresholds(a: float, b: float) -> ThresholdTable:
    if not (a > 0 and b > 0):
        raise InvalidParameterError(f"a and b must be positive, got a={a}, b={b}")
    return ThresholdTable(
        norm_bands=(a / (3 * b), 2 * a / (3 * b), a / b, 4 * a / (3 * b)),
        energy_levels=(-a * a / (12 * b), 0.0, a * a / (9 * b), a * a / (4 * b), a * a / b),
        mountain_radius=math.sqrt(2 * a / (3 * b)),
        mountain_height=a * a / (9 * b),
    )


def sobolev_constants(a: float, b: float, S: float, norm_f: float, mu: float) -> SobolevConstants:
    """Closed-form thresholds that need the best Sobolev constant S (always caller-supplied)."""
    for name, value in (("a", a), ("b", b), ("S", S), ("norm_f", norm_f)):
        if not value > 0:
            raise InvalidParameterError(f"{name} must be positive, got {value}")
    r = math.sqrt(2 * a / (3 * b))
    return SobolevConstants(
        mu_star1=a / (18 * b) * math.sqrt(6 * a * b * S) / norm_f,
        mu_star=a / (72 * b) * math.sqrt(3 * a * b * S) / norm_f,
        R=2 / b * (a + math.sqrt(a * a + b * mu * mu / (2 * a * S) * norm_f * norm_f)),
        mu_0=a / (9 * b) * math.sqrt(6 * a * b * S) / norm_f,
        rho_0=r * (a / 3 * r - mu * norm_f / math.sqrt(S)),
    )


def energy_sup_bound(a: float, b: float, S: float, norm_f: float, mu: float) -> float:
    """Upper bound a^2/b + mu^2 ||f||^2 / (2 a S) on the supremum of I."""
    for name, value in (("a", a), ("b", b), ("S", S)):
        if not value > 0:
            raise InvalidParameterError(f"{name} must be positive, got {value}")
    return a * a / b + mu * mu * norm_f * norm_f / (2 * a * S)
