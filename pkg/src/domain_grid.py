"""Uniform interior-node grids on intervals and rectangles.

Boundary values are never stored: every GridField is implicitly zero on the
boundary, which is how the homogeneous Dirichlet condition is encoded.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Tuple

import numpy as np

from src.errors import DomainMismatchError, InvalidDomainError, InvalidParameterError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DomainSpec:
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    resolution: Tuple[int, ...]

    def __post_init__(self) -> None:
        # normalise lists coming from config parsing into tuples
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        object.__setattr__(self, "resolution", tuple(int(v) for v in self.resolution))

        dim = len(self.resolution)
        if dim not in (1, 2):
            raise InvalidDomainError(f"dimension must be 1 or 2, got {dim}")
        if len(self.lower) != dim or len(self.upper) != dim:
            raise InvalidDomainError("lower/upper/resolution must have one entry per axis")
        for axis, (lo, hi, n) in enumerate(zip(self.lower, self.upper, self.resolution)):
            if not hi > lo:
                raise InvalidDomainError(f"axis {axis}: upper ({hi}) must exceed lower ({lo})")
            if n < 3:
                raise InvalidDomainError(f"axis {axis}: resolution must be >= 3, got {n}")

    @classmethod
    def interval(cls, lower: float, upper: float, n: int) -> "DomainSpec":
        return cls((lower,), (upper,), (n,))

    @classmethod
    def rectangle(
        cls, lower: Tuple[float, float], upper: Tuple[float, float], n: Tuple[int, int]
    ) -> "DomainSpec":
        return cls(tuple(lower), tuple(upper), tuple(n))

    @property
    def dimension(self) -> int:
        return len(self.resolution)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.resolution

    @property
    def size(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def h(self) -> Tuple[float, ...]:
        return tuple(
            (hi - lo) / (n + 1) for lo, hi, n in zip(self.lower, self.upper, self.resolution)
        )

    @property
    def lengths(self) -> Tuple[float, ...]:
        return tuple(hi - lo for lo, hi in zip(self.lower, self.upper))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    def axes(self) -> Tuple[np.ndarray, ...]:
        """Interior node coordinates per axis."""
        return tuple(
            lo + h * np.arange(1, n + 1)
            for lo, h, n in zip(self.lower, self.h, self.resolution)
        )

    def mesh(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def describe(self) -> str:
        parts = [
            f"({lo:.17g}, {hi:.17g}) n={n}"
            for lo, hi, n in zip(self.lower, self.upper, self.resolution)
        ]
        return f"{self.dimension}D " + " x ".join(parts)


@dataclass(frozen=True, eq=False)
class GridField:
    domain: DomainSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=float).reshape(-1)
        if arr.size != self.domain.size:
            raise InvalidDomainError(
                f"field has {arr.size} values, domain expects {self.domain.size}"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    # ---------- constructors ----------

    @classmethod
    def zeros(cls, domain: DomainSpec) -> "GridField":
        return cls(domain, np.zeros(domain.size))

    @classmethod
    def constant(cls, domain: DomainSpec, value: float) -> "GridField":
        return cls(domain, np.full(domain.size, float(value)))

    @classmethod
    def from_function(cls, domain: DomainSpec, fn: Callable[..., np.ndarray]) -> "GridField":
        return cls(domain, np.asarray(fn(*domain.mesh()), dtype=float))

    # ---------- arithmetic ----------

    def grid(self) -> np.ndarray:
        return self.values.reshape(self.domain.shape)

    def scaled(self, factor: float) -> "GridField":
        return GridField(self.domain, factor * self.values)

    def __add__(self, other: "GridField") -> "GridField":
        _require_same_domain(self, other)
        return GridField(self.domain, self.values + other.values)

    def __sub__(self, other: "GridField") -> "GridField":
        _require_same_domain(self, other)
        return GridField(self.domain, self.values - other.values)

    def __mul__(self, factor: float) -> "GridField":
        return self.scaled(factor)

    __rmul__ = __mul__

    def __neg__(self) -> "GridField":
        return self.scaled(-1.0)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


class SignClass(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    INDEFINITE = "indefinite"
    ZERO = "zero"


def _require_same_domain(u: GridField, v: GridField) -> None:
    if u.domain != v.domain:
        raise DomainMismatchError(
            f"fields live on different domains: {u.domain.describe()} vs {v.domain.describe()}"
        )


def h1_inner(u: GridField, v: GridField) -> float:
    """Stiffness form: sum over grid edges of difference quotients, boundary padded with 0.

    Uses the same stencil as the assembled Laplacian, so
    h1_inner(u, v) == l2_inner(-Delta_h u, v) up to roundoff.
    """
    _require_same_domain(u, v)
    domain = u.domain
    ug = np.pad(u.grid(), 1)
    vg = np.pad(v.grid(), 1)
    total = 0.0
    for axis, h in enumerate(domain.h):
        du = np.diff(ug, axis=axis)
        dv = np.diff(vg, axis=axis)
        # only edges that touch an interior node along the other axes
        trim = tuple(
            slice(None) if other == axis else slice(1, -1) for other in range(domain.dimension)
        )
        total += float(np.sum(du[trim] * dv[trim])) / (h * h)
    return total * domain.cell_volume


def l2_inner(u: GridField, v: GridField) -> float:
    _require_same_domain(u, v)
    return float(np.dot(u.values, v.values)) * u.domain.cell_volume


def h1_norm(u: GridField) -> float:
    return math.sqrt(max(h1_inner(u, u), 0.0))


def lp_norm(u: GridField, p: float) -> float:
    """Discrete L^p norm with interior-node quadrature; p = inf gives max|u|."""
    if math.isinf(p):
        return u.max_abs()
    if p < 1:
        raise InvalidParameterError(f"p must be >= 1, got {p}")
    total = float(np.sum(np.abs(u.values) ** p)) * u.domain.cell_volume
    return total ** (1.0 / p)


def sobolev_dual_exponent(dimension: int) -> float:
    """Conjugate exponent 2*/(2*-1) of the critical Sobolev exponent.

    For N <= 2 the critical exponent is taken as +inf, so the dual exponent is 1.
    """
    if dimension <= 2:
        return 1.0
    return 2.0 * dimension / (dimension + 2)


def sign_classify(u: GridField, tol: float = 0.0) -> SignClass:
    if tol < 0:
        raise InvalidParameterError(f"tol must be >= 0, got {tol}")
    peak = u.max_abs()
    if peak == 0.0:
        return SignClass.ZERO
    threshold = tol * peak
    if np.all(u.values > threshold):
        return SignClass.POSITIVE
    if np.all(u.values < -threshold):
        return SignClass.NEGATIVE
    return SignClass.INDEFINITE
