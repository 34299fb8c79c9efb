"""Run configuration: flat `key = value` run files validated by a pydantic model.

Process-wide defaults come from the environment (a local .env is honoured):

    KIRCHHOFF_OUT_DIR    default out_dir            (out)
    KIRCHHOFF_CG_TOL     default cg_tol             (1e-10)
    KIRCHHOFF_EIG_TOL    default eig_tol            (1e-8)
    KIRCHHOFF_LOG_LEVEL  CLI logging level          (INFO)
"""

import logging
import math
import os
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
from dotenv import load_dotenv
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    ValidationInfo,
    field_validator,
    model_validator,
)

from src.domain_grid import DomainSpec, GridField
from src.errors import ConfigError

load_dotenv()

logger = logging.getLogger(__name__)

DEFAULT_MU_STEPS = 81
MU_ZERO_SNAP = 1e-12


def _env_float(key: str, default: float) -> float:
    raw = os.getenv(key)
    if not raw:
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"environment variable {key}={raw!r} is not a number")


def default_out_dir() -> str:
    return os.getenv("KIRCHHOFF_OUT_DIR", "out")


def default_log_level() -> str:
    return os.getenv("KIRCHHOFF_LOG_LEVEL", "INFO").upper()


# ---------------- source profiles ----------------


def _sine(domain: DomainSpec, *coords: np.ndarray) -> np.ndarray:
    out = np.ones_like(coords[0])
    for x, lo, length in zip(coords, domain.lower, domain.lengths):
        out = out * np.sin(math.pi * (x - lo) / length)
    return out


def _bump(domain: DomainSpec, *coords: np.ndarray) -> np.ndarray:
    # peak value 1 at the centre
    out = np.ones_like(coords[0])
    for x, lo, length in zip(coords, domain.lower, domain.lengths):
        out = out * 4.0 * (x - lo) * (lo + length - x) / (length * length)
    return out


def _one(domain: DomainSpec, *coords: np.ndarray) -> np.ndarray:
    return np.ones_like(coords[0])


PROFILES = {"sine": _sine, "bump": _bump, "one": _one}

KNOWN_KEYS = (
    "dim", "lower", "upper", "n", "lower2", "upper2", "n2",
    "f", "a", "b", "mu", "mu_min", "mu_max", "mu_steps",
    "cg_tol", "eig_tol", "double_root_tol", "residual_tol", "sign_tol", "S",
    "descent_step", "descent_tol", "descent_max_iter", "profile_steps", "out_dir",
)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    dim: int = Field(1, ge=1, le=2)
    lower: float = 0.0
    upper: float = 1.0
    n: int = Field(1023, ge=3)
    lower2: float = 0.0
    upper2: float = 1.0
    n2: Optional[int] = Field(None, ge=3)

    f: str = "constant:1"
    a: float = Field(1.0, gt=0)
    b: float = Field(1.0, gt=0)

    mu: Optional[float] = None
    mu_min: Optional[float] = None
    mu_max: Optional[float] = None
    mu_steps: Optional[int] = None

    cg_tol: float = Field(default_factory=lambda: _env_float("KIRCHHOFF_CG_TOL", 1e-10), gt=0, lt=1)
    eig_tol: float = Field(default_factory=lambda: _env_float("KIRCHHOFF_EIG_TOL", 1e-8), gt=0, lt=1)
    double_root_tol: float = Field(1e-10, ge=0)  # relative to mu_crit
    residual_tol: float = Field(1e-8, gt=0)
    sign_tol: float = Field(0.0, ge=0)
    S: Optional[float] = Field(None, gt=0)

    descent_step: float = Field(1.0, gt=0)
    descent_tol: float = Field(1e-10, gt=0)
    descent_max_iter: int = Field(10_000, ge=1)
    profile_steps: int = Field(201, ge=2)

    out_dir: str = Field(default_factory=default_out_dir)
    base_dir: Path = Path(".")

    @field_validator("f")
    @classmethod
    def _check_source(cls, value: str) -> str:
        kind, sep, arg = value.partition(":")
        if not sep or not arg:
            raise ValueError("expected constant:<c>, profile:<name> or file:<path>")
        if kind == "constant":
            try:
                c = float(arg)
            except ValueError:
                raise ValueError(f"constant source {arg!r} is not a number")
            if not (c > 0 and math.isfinite(c)):
                raise ValueError("constant source must be positive")
        elif kind == "profile":
            if arg not in PROFILES:
                raise ValueError(f"unknown profile {arg!r}; choose from {sorted(PROFILES)}")
        elif kind != "file":
            raise ValueError(f"unknown source kind {kind!r}")
        return value

    @field_validator("upper2")
    @classmethod
    def _check_second_axis(cls, value: float, info: ValidationInfo) -> float:
        lower2 = info.data.get("lower2")
        if lower2 is not None and not value > lower2:
            raise ValueError("upper2 must exceed lower2")
        return value

    @model_validator(mode="after")
    def _check_mu(self) -> "RunConfig":
        has_range = any(v is not None for v in (self.mu_min, self.mu_max, self.mu_steps))
        if self.mu is not None and has_range:
            raise ValueError("mu and mu_min/mu_max/mu_steps are mutually exclusive")
        if self.mu is None and not has_range:
            raise ValueError("either mu or mu_min/mu_max must be given")
        if has_range:
            if self.mu_min is None or self.mu_max is None:
                raise ValueError("a mu range needs both mu_min and mu_max")
            if not self.mu_min < self.mu_max:
                raise ValueError("mu_min must be smaller than mu_max")
            if self.mu_steps is not None and self.mu_steps < 2:
                raise ValueError("mu_steps must be >= 2")
        return self

    # ---------------- derived objects ----------------

    @property
    def is_sweep(self) -> bool:
        return self.mu is None

    def domain_spec(self) -> DomainSpec:
        if self.dim == 1:
            return DomainSpec.interval(self.lower, self.upper, self.n)
        return DomainSpec.rectangle(
            (self.lower, self.lower2),
            (self.upper, self.upper2),
            (self.n, self.n2 if self.n2 is not None else self.n),
        )

    def build_source(self, domain: Optional[DomainSpec] = None) -> GridField:
        domain = domain or self.domain_spec()
        kind, _, arg = self.f.partition(":")
        if kind == "constant":
            return GridField.constant(domain, float(arg))
        if kind == "profile":
            profile = PROFILES[arg]
            return GridField.from_function(domain, lambda *xs: profile(domain, *xs))

        path = Path(arg)
        if not path.is_absolute():
            path = self.base_dir / path
        if not path.exists():
            raise ConfigError(f"source file {path} does not exist", field="f")
        try:
            values = np.loadtxt(path, dtype=float, ndmin=1)
        except ValueError as e:
            raise ConfigError(f"cannot read node values from {path}: {e}", field="f")
        if values.size != domain.size:
            raise ConfigError(
                f"{path} holds {values.size} node values, the grid has {domain.size}", field="f"
            )
        return GridField(domain, values)

    def mu_grid(self) -> np.ndarray:
        """Sweep values, ascending; values within round-off of zero become exactly 0."""
        if self.mu is not None:
            return np.array([self.mu])
        steps = self.mu_steps if self.mu_steps is not None else DEFAULT_MU_STEPS
        grid = np.linspace(self.mu_min, self.mu_max, steps)
        scale = max(abs(self.mu_min), abs(self.mu_max))
        grid[np.abs(grid) <= MU_ZERO_SNAP * scale] = 0.0
        return grid

    def with_out_dir(self, out_dir: Optional[Union[str, Path]]) -> "RunConfig":
        if out_dir is None:
            return self
        return self.model_copy(update={"out_dir": str(out_dir)})


# ---------------- parsing ----------------


def _split_lines(text: str) -> Dict[str, str]:
    raw: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ConfigError(f"expected 'key = value', got {stripped!r}", line=lineno)
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown key {key!r}", line=lineno)
        if key in raw:
            raise ConfigError(f"duplicate key {key!r}", line=lineno)
        if not value:
            raise ConfigError(f"missing value for {key!r}", line=lineno)
        raw[key] = value
    return raw


def parse_config(text: str, base_dir: Optional[Union[str, Path]] = None) -> RunConfig:
    """Parse run-file text; relative file: sources resolve against base_dir."""
    raw = _split_lines(text)
    data: Dict[str, object] = dict(raw)
    if base_dir is not None:
        data["base_dir"] = Path(base_dir)
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"]) or "mu"
        raise ConfigError(first["msg"], field=field) from None
    logger.debug("parsed config: %s", cfg.model_dump(exclude={"base_dir"}))
    return cfg


def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}")
    return parse_config(text, base_dir=path.parent)
