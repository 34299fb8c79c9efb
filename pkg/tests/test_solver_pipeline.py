import numpy as np
import pytest

from src.domain_grid import GridField, SignClass, h1_inner, h1_norm
from src.elliptic_ops import reduce_problem
from src.energy import ray_energy
from src.errors import (
    BallEscapeError,
    DegenerateCoefficientError,
    DomainMismatchError,
    InvalidParameterError,
    IterationLimitError,
    VerificationError,
    ZeroFieldError,
)
from src.reduction_algebra import Regime, mu_crit
from src.solver_pipeline import (
    NormBand,
    Role,
    band_label,
    branches_from_reduction,
    check_linear_dependence,
    descent_minimize,
    solve_all,
    weak_residual,
)


@pytest.fixture(scope="module")
def crit(canonical_reduced):
    return mu_crit(1.0, 1.0, canonical_reduced.norm_U)


def _solve(params, reduced, **kwargs):
    return branches_from_reduction(params, reduced, **kwargs)


# ---------------- branch enumeration ----------------


def test_canonical_three_branches(canonical_params, canonical_spec):
    solutions = solve_all(canonical_params(0.1), canonical_spec)
    assert solutions.regime is Regime.THREE
    assert len(solutions) == 3
    alpha = solutions.reduced.alpha
    expected = np.roots([alpha, 0.0, -1.0, 0.1]).real
    assert [br.multiplier for br in solutions] == pytest.approx(sorted(expected), rel=1e-10)
    assert [br.role for br in solutions] == [Role.U3_LIKE, Role.U1_LIKE, Role.U2_LIKE]
    for branch in solutions:
        assert branch.residual <= 1e-8


def test_canonical_bands_signs_and_energies(canonical_params, canonical_reduced):
    solutions = _solve(canonical_params(0.1), canonical_reduced)
    u1 = solutions.by_role(Role.U1_LIKE)
    u2 = solutions.by_role(Role.U2_LIKE)
    u3 = solutions.by_role(Role.U3_LIKE)

    assert u1.norm_sq < 1 / 3 < u2.norm_sq < 1.0 < u3.norm_sq < 4 / 3
    assert 2 / 3 < u2.norm_sq
    assert [u1.norm_sq, u2.norm_sq, u3.norm_sq] == pytest.approx([8.3e-4, 0.9715, 1.0278], rel=1e-2)
    assert [u2.norm_sq, u3.norm_sq] == pytest.approx([0.9715, 1.0278], rel=2e-3)

    assert u1.band is NormBand.BELOW_THIRD
    assert u2.band is NormBand.TWO_THIRDS_TO_ONE
    assert u3.band is NormBand.ONE_TO_FOUR_THIRDS

    assert u1.sign_class is SignClass.POSITIVE
    assert u2.sign_class is SignClass.POSITIVE
    assert u3.sign_class is SignClass.NEGATIVE
    assert u1.coefficient > 0 > u3.coefficient

    assert u1.energy < 0 < u2.energy < 0.25 < u3.energy
    assert [u1.energy, u2.energy, u3.energy] == pytest.approx([-4.17e-4, 0.2213, 0.2791], rel=2e-3)
    for branch in solutions:
        ray = ray_energy(1.0, 1.0, canonical_reduced.alpha, 0.1, branch.multiplier)
        assert branch.energy == pytest.approx(ray, rel=1e-6)


def test_single_branch_above_mu_crit(canonical_params, canonical_reduced):
    solutions = _solve(canonical_params(1.5), canonical_reduced)
    assert solutions.regime is Regime.ONE
    assert len(solutions) == 1
    assert solutions[0].role is Role.SINGLE
    assert solutions[0].sign_class is SignClass.NEGATIVE


def test_double_branch_at_mu_crit(canonical_params, canonical_reduced, crit):
    solutions = _solve(canonical_params(crit), canonical_reduced)
    assert solutions.regime is Regime.TWO
    assert [br.role for br in solutions] == [Role.SINGLE, Role.DOUBLE]
    assert solutions.by_role(Role.DOUBLE).multiplier == pytest.approx(2.0, rel=1e-5)


def test_four_thirds_needs_tolerance_on_fine_grid(canonical_params, canonical_reduced, crit):
    # mu_crit on the n = 1023 grid sits slightly above 4/3
    assert _solve(canonical_params(4 / 3), canonical_reduced).regime is Regime.THREE
    # the snapped double root leaves g(t_M) = mu_crit - 4/3 in the residual
    widened = _solve(
        canonical_params(4 / 3), canonical_reduced, tol=1e-6, double_root_tol=1e-6 * crit
    )
    assert widened.regime is Regime.TWO
    assert len(widened) == 2


def test_negative_mu_mirrors_roles(canonical_params, canonical_reduced):
    solutions = _solve(canonical_params(-0.1), canonical_reduced)
    assert [br.role for br in solutions] == [Role.U2_LIKE, Role.U1_LIKE, Role.U3_LIKE]
    assert solutions.by_role(Role.U1_LIKE).sign_class is SignClass.NEGATIVE
    assert solutions.by_role(Role.U3_LIKE).sign_class is SignClass.POSITIVE


def test_mu_zero_family(canonical_params, canonical_reduced):
    solutions = _solve(canonical_params(0.0), canonical_reduced)
    assert solutions.infinite_family
    assert solutions.regime is Regime.MU_ZERO
    trivial = solutions.by_role(Role.TRIVIAL)
    representative = solutions.by_role(Role.REPRESENTATIVE)
    assert trivial.sign_class is SignClass.ZERO
    assert representative.norm_sq == pytest.approx(1.0, rel=1e-12)
    assert abs(representative.coefficient) <= 1e-12
    assert representative.residual <= 1e-10


def test_residual_over_tolerance_names_branch(canonical_params, canonical_reduced):
    with pytest.raises(VerificationError) as err:
        _solve(canonical_params(0.1), canonical_reduced, tol=1e-30)
    assert err.value.name in {role.value for role in Role}


def test_band_labels():
    assert band_label(1.0, 1.0, 0.1) is NormBand.BELOW_THIRD
    assert band_label(1.0, 1.0, 0.5) is NormBand.THIRD_TO_TWO_THIRDS
    assert band_label(1.0, 1.0, 1.2) is NormBand.ONE_TO_FOUR_THIRDS
    assert band_label(1.0, 1.0, 2.0) is NormBand.ABOVE_FOUR_THIRDS


def test_count_follows_regime_across_mu_crit(canonical_params, canonical_reduced, crit):
    for k in range(-20, 21):
        mu = k / 10
        solutions = _solve(canonical_params(mu), canonical_reduced)
        if k == 0:
            assert solutions.infinite_family
        elif abs(mu) < crit:
            assert len(solutions) == 3
        else:
            assert len(solutions) == 1


# ---------------- residual ----------------


def test_weak_residual_of_scaled_poisson_solution(canonical_params, canonical_reduced):
    # t = 1 solves the cubic when mu = a - b alpha
    mu = 1.0 - canonical_reduced.alpha
    assert weak_residual(canonical_params(mu), canonical_reduced.U) <= 1e-8


def test_weak_residual_of_random_field(canonical_params, canonical_spec, rng):
    u = GridField(canonical_spec, 1e-3 * rng.standard_normal(canonical_spec.size))
    assert weak_residual(canonical_params(0.1), u) > 0.1


def test_weak_residual_domain_mismatch(canonical_params, small_spec):
    with pytest.raises(DomainMismatchError):
        weak_residual(canonical_params(0.1), GridField.zeros(small_spec))


# ---------------- linear dependence ----------------


def test_branches_are_linearly_dependent(canonical_params, canonical_reduced):
    solutions = _solve(canonical_params(0.1), canonical_reduced)
    assert check_linear_dependence(solutions) <= 1e-9


def test_multiplier_identity(canonical_params, canonical_reduced):
    alpha = canonical_reduced.alpha
    ts = _solve(canonical_params(0.1), canonical_reduced).roots.roots
    for ti in ts:
        for tj in ts:
            rebuilt = (1.0 - tj * tj * alpha) / (1.0 - ti * ti * alpha) * tj
            assert rebuilt == pytest.approx(ti, abs=1e-12)


def test_differently_seeded_reductions_agree(canonical_params, canonical_spec, unit_source, canonical_reduced, rng):
    seed = GridField(canonical_spec, rng.standard_normal(canonical_spec.size))
    other = reduce_problem(canonical_spec, unit_source, 1.0, 1.0, x0=seed)
    ours = _solve(canonical_params(0.1), canonical_reduced).by_role(Role.U1_LIKE)
    theirs = _solve(canonical_params(0.1), other).by_role(Role.U3_LIKE)
    assert check_linear_dependence([ours, theirs]) <= 1e-8


def test_linear_dependence_preconditions(canonical_params, canonical_reduced):
    solutions = _solve(canonical_params(0.1), canonical_reduced)
    with pytest.raises(InvalidParameterError):
        check_linear_dependence(solutions[:1])
    family = _solve(canonical_params(0.0), canonical_reduced)
    with pytest.raises(ZeroFieldError):
        check_linear_dependence(family)
    with pytest.raises(DegenerateCoefficientError):
        check_linear_dependence([family.by_role(Role.REPRESENTATIVE), solutions[0]])


# ---------------- descent oracle ----------------


@pytest.mark.parametrize("fraction", [0.1, 0.01])
def test_descent_finds_local_minimum(canonical_params, canonical_reduced, crit, fraction):
    p = canonical_params(crit * fraction)
    target = _solve(p, canonical_reduced).by_role(Role.U1_LIKE).field
    u0 = canonical_reduced.U.scaled(0.01)
    u = descent_minimize(p, u0)
    assert h1_norm(u - target) <= 1e-4 * h1_norm(target)
    assert h1_inner(u, u) < 1 / 3


def test_descent_returns_immediately_at_minimum(canonical_params, canonical_reduced):
    p = canonical_params(0.1)
    u1 = _solve(p, canonical_reduced).by_role(Role.U1_LIKE).field
    assert descent_minimize(p, u1) is u1


def test_descent_mu_zero_from_zero(canonical_params, canonical_spec):
    zero = GridField.zeros(canonical_spec)
    assert descent_minimize(canonical_params(0.0), zero).max_abs() == 0.0


def test_descent_preconditions(canonical_params, canonical_reduced, small_spec):
    with pytest.raises(InvalidParameterError):
        descent_minimize(canonical_params(-0.1), canonical_reduced.U.scaled(0.01))
    with pytest.raises(InvalidParameterError):
        descent_minimize(canonical_params(0.1), canonical_reduced.U.scaled(3.0))
    with pytest.raises(DomainMismatchError):
        descent_minimize(canonical_params(0.1), GridField.zeros(small_spec))


def test_descent_escapes_ball_above_mu_crit(canonical_params, canonical_reduced, crit):
    with pytest.raises(BallEscapeError) as err:
        descent_minimize(canonical_params(2 * crit), canonical_reduced.U.scaled(0.01))
    assert err.value.norm_sq >= 2 / 3


def test_descent_iteration_limit(canonical_params, canonical_reduced):
    with pytest.raises(IterationLimitError):
        descent_minimize(canonical_params(0.1), canonical_reduced.U.scaled(0.01), max_iter=1)
