import numpy as np
import pytest

from src.domain_grid import DomainSpec, GridField
from src.elliptic_ops import reduce_problem
from src.energy import ProblemParams

CANONICAL_RUN = """\
# canonical case: (0, 1), f = 1, a = b = 1
dim = 1
lower = 0
upper = 1
n = 1023
f = constant:1
a = 1
b = 1
mu = 0.1
"""


@pytest.fixture(scope="session")
def canonical_spec() -> DomainSpec:
    return DomainSpec.interval(0.0, 1.0, 1023)


@pytest.fixture(scope="session")
def unit_source(canonical_spec) -> GridField:
    return GridField.constant(canonical_spec, 1.0)


@pytest.fixture(scope="session")
def canonical_reduced(canonical_spec, unit_source):
    return reduce_problem(canonical_spec, unit_source, 1.0, 1.0)


@pytest.fixture
def canonical_params(unit_source):
    def make(mu: float = 0.1) -> ProblemParams:
        return ProblemParams(1.0, 1.0, mu, unit_source)

    return make


@pytest.fixture
def small_spec() -> DomainSpec:
    return DomainSpec.interval(0.0, 1.0, 63)


@pytest.fixture
def rect_spec() -> DomainSpec:
    return DomainSpec.rectangle((0.0, 0.0), (1.0, 2.0), (31, 47))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def write_run(tmp_path):
    """Write run-file text into tmp_path and return its path."""

    def write(text: str, name: str = "run.cfg"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return write


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch):
    for key in ("KIRCHHOFF_OUT_DIR", "KIRCHHOFF_CG_TOL", "KIRCHHOFF_EIG_TOL", "KIRCHHOFF_LOG_LEVEL"):
        monkeypatch.delenv(key, raising=False)
