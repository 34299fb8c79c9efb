import math

import numpy as np
import pytest

from src.domain_grid import DomainSpec, GridField, h1_inner, l2_inner
from src.elliptic_ops import (
    LaplacianOperator,
    reduce_problem,
    smallest_eigenvalue,
    solve_cg,
)
from src.errors import (
    DegenerateSourceError,
    DomainMismatchError,
    InvalidParameterError,
    InvalidSourceError,
    IterationLimitError,
)


def _discrete_lambda1(spec: DomainSpec) -> float:
    return sum(
        4.0 / (h * h) * math.sin(math.pi * h / (2.0 * L)) ** 2
        for h, L in zip(spec.h, spec.lengths)
    )


# ---------------- operator ----------------


def test_laplacian_1d_stencil(small_spec):
    A = LaplacianOperator.assemble(small_spec)
    h = small_spec.h[0]
    dense = A.matrix.toarray()
    assert dense.shape == (63, 63)
    assert dense[0, 0] == pytest.approx(2.0 / h ** 2)
    assert dense[0, 1] == pytest.approx(-1.0 / h ** 2)
    assert dense[0, 2] == 0.0


def test_laplacian_2d_is_symmetric(rect_spec):
    A = LaplacianOperator.assemble(rect_spec).matrix
    assert A.shape == (rect_spec.size, rect_spec.size)
    assert abs(A - A.T).max() == 0.0


def test_apply_checks_domain(small_spec):
    A = LaplacianOperator.assemble(small_spec)
    with pytest.raises(DomainMismatchError):
        A.apply(GridField.zeros(DomainSpec.interval(0, 1, 31)))


# ---------------- conjugate gradients ----------------


def test_cg_reproduces_parabola_at_nodes(canonical_spec, unit_source):
    A = LaplacianOperator.assemble(canonical_spec)
    U = solve_cg(A, unit_source, rel_tol=1e-10)
    (x,) = canonical_spec.axes()
    # the 3-point stencil is exact for quadratics
    np.testing.assert_allclose(U.values, x * (1 - x) / 2, atol=1e-8)
    residual = np.linalg.norm(A.matvec(U.values) - unit_source.values)
    assert residual <= 1e-10 * np.linalg.norm(unit_source.values)


def test_cg_zero_rhs(small_spec):
    A = LaplacianOperator.assemble(small_spec)
    assert solve_cg(A, GridField.zeros(small_spec)).max_abs() == 0.0


def test_cg_iteration_limit(canonical_spec, unit_source):
    A = LaplacianOperator.assemble(canonical_spec)
    with pytest.raises(IterationLimitError) as err:
        solve_cg(A, unit_source, max_iter=3)
    assert err.value.iterations == 3
    assert err.value.residual > 0


@pytest.mark.parametrize("rel_tol", [0.0, 1.0, -1e-3])
def test_cg_rejects_bad_tolerance(small_spec, rel_tol):
    A = LaplacianOperator.assemble(small_spec)
    with pytest.raises(InvalidParameterError):
        solve_cg(A, GridField.constant(small_spec, 1.0), rel_tol=rel_tol)


def test_cg_warm_start_reaches_same_solution(rect_spec, rng):
    A = LaplacianOperator.assemble(rect_spec)
    f = GridField.constant(rect_spec, 1.0)
    cold = solve_cg(A, f)
    warm = solve_cg(A, f, x0=GridField(rect_spec, rng.standard_normal(rect_spec.size)))
    assert np.linalg.norm(cold.values - warm.values) <= 1e-8 * np.linalg.norm(cold.values)


# ---------------- reduction ----------------


def test_canonical_reduction(canonical_reduced, canonical_spec):
    h = canonical_spec.h[0]
    assert canonical_reduced.alpha == pytest.approx(1 / 12, rel=1e-5)
    # discrete alpha is exactly (1 - h^2) / 12 for f = 1
    assert canonical_reduced.alpha == pytest.approx((1 - h * h) / 12, rel=1e-9)
    assert canonical_reduced.norm_U == pytest.approx(math.sqrt(canonical_reduced.alpha))


def test_reduction_weak_identity_2d(rect_spec):
    f = GridField.from_function(rect_spec, lambda x, y: 1.0 + x * y)
    reduced = reduce_problem(rect_spec, f, 1.0, 2.0)
    v = GridField.from_function(rect_spec, lambda x, y: np.sin(math.pi * x) * np.sin(math.pi * y / 2))
    assert h1_inner(reduced.U, v) == pytest.approx(l2_inner(f, v), rel=1e-8)
    assert reduced.alpha == pytest.approx(l2_inner(f, reduced.U), rel=1e-9)


def test_reduction_rejects_bad_sources(small_spec):
    values = np.ones(small_spec.size)
    values[3] = -1.0
    with pytest.raises(InvalidSourceError):
        reduce_problem(small_spec, GridField(small_spec, values), 1.0, 1.0)
    with pytest.raises(DegenerateSourceError):
        reduce_problem(small_spec, GridField.zeros(small_spec), 1.0, 1.0)
    with pytest.raises(DomainMismatchError):
        reduce_problem(DomainSpec.interval(0, 1, 31), GridField.constant(small_spec, 1.0), 1.0, 1.0)


@pytest.mark.parametrize("a, b", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)])
def test_reduction_rejects_nonpositive_coefficients(small_spec, a, b):
    with pytest.raises(InvalidParameterError):
        reduce_problem(small_spec, GridField.constant(small_spec, 1.0), a, b)


def test_reduction_independent_of_cg_start(canonical_spec, unit_source, canonical_reduced, rng):
    seed = GridField(canonical_spec, rng.standard_normal(canonical_spec.size))
    other = reduce_problem(canonical_spec, unit_source, 1.0, 1.0, x0=seed)
    diff = np.linalg.norm(other.U.values - canonical_reduced.U.values)
    assert diff <= 1e-8 * np.linalg.norm(canonical_reduced.U.values)


# ---------------- eigenvalue ----------------


def test_lambda1_canonical(canonical_spec):
    assert smallest_eigenvalue(canonical_spec) == pytest.approx(math.pi ** 2, rel=1e-3)


def test_lambda1_matches_discrete_formula(small_spec, rect_spec):
    for spec in (small_spec, rect_spec):
        assert smallest_eigenvalue(spec) == pytest.approx(_discrete_lambda1(spec), rel=1e-7)


def test_lambda1_iteration_limit(small_spec):
    with pytest.raises(IterationLimitError):
        smallest_eigenvalue(small_spec, rel_tol=1e-15, max_iter=1)


@pytest.mark.slow
def test_second_order_convergence():
    alpha_errors, lambda_errors = [], []
    for n in (63, 127, 255, 511):
        spec = DomainSpec.interval(0.0, 1.0, n)
        reduced = reduce_problem(spec, GridField.constant(spec, 1.0), 1.0, 1.0)
        alpha_errors.append(abs(reduced.alpha - 1 / 12))
        lambda_errors.append(abs(smallest_eigenvalue(spec) - math.pi ** 2))
    for errors in (alpha_errors, lambda_errors):
        orders = [math.log2(e0 / e1) for e0, e1 in zip(errors, errors[1:])]
        assert orders == pytest.approx([2.0] * 3, abs=0.2)


@pytest.mark.parametrize("spec_name", ["small_spec", "rect_spec"])
def test_poincare_inequality_on_random_fields(spec_name, request, rng):
    spec = request.getfixturevalue(spec_name)
    lam = smallest_eigenvalue(spec)
    for _ in range(10):
        u = GridField(spec, rng.standard_normal(spec.size))
        energy = h1_inner(u, u)
        assert energy >= lam * l2_inner(u, u) - 1e-10 * energy


def test_eigenfunction_source_alpha_2d():
    spec = DomainSpec.rectangle((0.0, 0.0), (1.0, 1.0), (31, 31))
    f = GridField.from_function(spec, lambda x, y: np.sin(math.pi * x) * np.sin(math.pi * y))
    reduced = reduce_problem(spec, f, 1.0, 1.0)
    # f is a discrete eigenvector, so U = f / lambda_h and alpha = ||f||^2 / lambda_h
    assert reduced.alpha == pytest.approx(l2_inner(f, f) / _discrete_lambda1(spec), rel=1e-8)
    assert reduced.alpha == pytest.approx(1 / (8 * math.pi ** 2), rel=2e-3)
