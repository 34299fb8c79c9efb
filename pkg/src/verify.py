"""Verification suite: runs every structural check against the configured problem.

Results go to verification.txt and verification.csv. Checks marked recorded are
reported but never fail the run.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np
import pandas as pd

from src.config import RunConfig
from src.domain_grid import (
    DomainSpec,
    GridField,
    h1_inner,
    h1_norm,
    l2_inner,
    lp_norm,
    SignClass,
    sobolev_dual_exponent,
)
from src.elliptic_ops import LaplacianOperator, reduce_problem, smallest_eigenvalue
from src.energy import (
    ProblemParams,
    critical_identity_residual,
    energy_sup_bound,
    ps_limit_norms,
    ray_energy,
    sobolev_constants,
    thresholds,
)
from src.errors import BallEscapeError, IterationLimitError, VerificationError
from src.reduction_algebra import (
    Regime,
    mu_crit,
    mu_crit_lower_bound,
    mu_crit_sobolev_bound,
    zero_mu_scaling,
)
from src.solver_pipeline import (
    Role,
    SolutionSet,
    branches_from_reduction,
    check_linear_dependence,
    descent_minimize,
)
from src.sweep import BifurcationSweep

logger = logging.getLogger(__name__)

VERIFICATION_TXT = "verification.txt"
VERIFICATION_CSV = "verification.csv"

CONVERGENCE_RESOLUTIONS = (63, 127, 255, 511)
RANDOM_FIELDS = 10
SEED = 20240917


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    recorded: bool = False

    @property
    def status(self) -> str:
        return "PASS" if self.passed else "FAIL"

    @property
    def blocking(self) -> bool:
        return not self.passed and not self.recorded


def _at_most(name: str, measured: float, tolerance: float, recorded: bool = False) -> CheckResult:
    passed = bool(measured <= tolerance) and not math.isnan(measured)
    if recorded and not passed:
        logger.warning("recorded check %s: measured %.6g exceeds %.6g", name, measured, tolerance)
    return CheckResult(name, passed, float(measured), float(tolerance), recorded)


def discretization_tol(spec: DomainSpec) -> float:
    """2 (pi h_max / L_min)^2: the O(h^2) allowance used for mesh-sensitive comparisons."""
    return 2.0 * (math.pi * max(spec.h) / min(spec.lengths)) ** 2


def verification_mu(cfg: RunConfig, crit: float) -> float:
    """The configured mu when it sits inside the three-solution window, else mu_crit / 10.

    The window shrinks by the double-root tolerance, so the configured mu never snaps onto mu_crit.
    """
    margin = max(1e-6, cfg.double_root_tol)
    if cfg.mu is not None and 0.0 < cfg.mu < crit * (1.0 - margin):
        return cfg.mu
    return crit / 10.0


def _violations(conditions: List[bool]) -> int:
    return sum(1 for ok in conditions if not ok)


def _convergence_order(errors: List[float]) -> float:
    """Largest deviation of the observed order log2(e_k / e_k+1) from 2."""
    orders = [math.log2(e0 / e1) for e0, e1 in zip(errors, errors[1:])]
    return max(abs(order - 2.0) for order in orders)


class VerificationSuite:
    """Builds the shared reduction once and evaluates the checks against it."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.spec = cfg.domain_spec()
        self.f = cfg.build_source(self.spec)
        self.reduced = reduce_problem(self.spec, self.f, cfg.a, cfg.b, rel_tol=cfg.cg_tol)
        self.operator = LaplacianOperator.assemble(self.spec)
        self.crit = mu_crit(cfg.a, cfg.b, self.reduced.norm_U)
        self.mu = verification_mu(cfg, self.crit)
        self.params = ProblemParams(cfg.a, cfg.b, self.mu, self.f)
        self.norm_f = lp_norm(self.f, 2)
        self.lambda1 = smallest_eigenvalue(self.spec, rel_tol=cfg.eig_tol, cg_tol=cfg.cg_tol)
        self.solutions = self._solve(self.mu)
        self.results: List[CheckResult] = []
        logger.info("verifying at mu=%.6g (mu_crit=%.6g) on %s", self.mu, self.crit, self.spec.describe())

    def _solve(self, mu: float) -> SolutionSet:
        # residuals are judged by their own check, not by the solve
        return branches_from_reduction(
            self.params.with_mu(mu),
            self.reduced,
            tol=math.inf,
            double_root_tol=self.cfg.double_root_tol * self.crit,
            sign_tol=self.cfg.sign_tol,
            operator=self.operator,
        )

    def add(self, result: CheckResult) -> None:
        self.results.append(result)
        logger.debug("%s %s measured=%.3e tol=%.3e", result.name, result.status, result.measured, result.tolerance)

    # ---------------- reduction ----------------

    def check_weak_form(self) -> None:
        rng = np.random.default_rng(SEED)
        v = GridField(self.spec, rng.standard_normal(self.spec.size))
        U = self.reduced.U
        gap = abs(h1_inner(U, v) - l2_inner(self.f, v))
        scale = self.spec.cell_volume * float(np.linalg.norm(self.f.values) * np.linalg.norm(v.values))
        self.add(_at_most("weak_form_identity", gap / scale, 10 * self.cfg.cg_tol))

    def check_alpha_identity(self) -> None:
        U = self.reduced.U
        gap = abs(self.reduced.alpha - l2_inner(self.f, U))
        scale = self.spec.cell_volume * float(np.linalg.norm(self.f.values) * np.linalg.norm(U.values))
        self.add(_at_most("alpha_identity", gap / scale, 10 * self.cfg.cg_tol))

    def check_roots(self) -> None:
        a, b, alpha = self.cfg.a, self.cfg.b, self.reduced.alpha
        worst = max(
            abs((a - b * alpha * t * t) * t - self.mu) for t in self.solutions.roots.roots
        )
        self.add(_at_most("root_identity", worst, 1e-10 * max(a, abs(self.mu))))

    def check_regime_scan(self) -> None:
        # steps of mu_crit/20 out to 1.5 mu_crit, so the grid hits 0 and +-mu_crit exactly
        positive = self.crit * np.arange(1, 31) / 20.0
        mus = np.concatenate([-positive[::-1], [0.0], positive])
        tol = self.cfg.double_root_tol * self.crit
        sweep = BifurcationSweep(
            self.params,
            self.reduced,
            tol=math.inf,
            double_root_rel_tol=self.cfg.double_root_tol,
        )
        rows = sweep.run(mus)
        mismatches = 0
        for mu, row in zip(mus, rows):
            if mu == 0.0:
                expected = Regime.MU_ZERO
            elif abs(abs(mu) - self.crit) <= tol:
                expected = Regime.TWO
            elif abs(mu) < self.crit:
                expected = Regime.THREE
            else:
                expected = Regime.ONE
            count_ok = row.infinite_family if expected is Regime.MU_ZERO else (
                len(row) == {Regime.THREE: 3, Regime.TWO: 2, Regime.ONE: 1}[expected]
            )
            mismatches += int(row.regime is not expected or not count_ok)
        self.add(_at_most("regime_scan", mismatches, 0))

        # g is odd in (t, mu): the row at -mu mirrors the row at +mu
        worst = 0.0
        for row, mirror in zip(rows, reversed(rows)):
            if row.infinite_family:
                continue
            ts = np.array([br.multiplier for br in row])
            ms = np.array([br.multiplier for br in mirror])
            if ts.size != ms.size:
                worst = math.inf
                break
            worst = max(worst, float(np.max(np.abs(ts + ms[::-1]))))
        self.add(_at_most("odd_symmetry", worst, 1e-10))

    # ---------------- branch structure ----------------

    def check_residuals(self) -> None:
        worst = max(branch.residual for branch in self.solutions)
        self.add(_at_most("weak_residual", worst, self.cfg.residual_tol))

    def check_bands_and_signs(self) -> None:
        a, b = self.cfg.a, self.cfg.b
        u1 = self.solutions.by_role(Role.U1_LIKE)
        u2 = self.solutions.by_role(Role.U2_LIKE)
        u3 = self.solutions.by_role(Role.U3_LIKE)
        bands = thresholds(a, b).norm_bands

        chain = [
            u1.norm_sq < bands[0] < u2.norm_sq < bands[2] < u3.norm_sq < bands[3],
        ]
        self.add(_at_most("norm_bands", _violations(chain), 0))

        signs = [
            u1.sign_class is SignClass.POSITIVE,
            u2.sign_class is SignClass.POSITIVE,
            u3.sign_class is SignClass.NEGATIVE,
            u1.coefficient > 0,
            u3.coefficient < 0,
        ]
        self.add(_at_most("sign_structure", _violations(signs), 0))

        # the tighter window only holds away from mu_crit
        tight = [bands[1] < u2.norm_sq, 0.0 < u2.energy]
        self.add(_at_most("tight_u2_window", _violations(tight), 0, recorded=self.mu > self.crit / 10))

    def check_energies(self) -> None:
        a, b, alpha = self.cfg.a, self.cfg.b, self.reduced.alpha
        u1 = self.solutions.by_role(Role.U1_LIKE)
        u2 = self.solutions.by_role(Role.U2_LIKE)
        u3 = self.solutions.by_role(Role.U3_LIKE)
        levels = thresholds(a, b).energy_levels
        order = [u1.energy < 0.0, u1.energy < u2.energy < levels[3] < u3.energy]
        self.add(_at_most("energy_order", _violations(order), 0))

        worst = 0.0
        for branch in self.solutions:
            ray = ray_energy(a, b, alpha, self.mu, branch.multiplier)
            worst = max(worst, abs(branch.energy - ray) / max(abs(ray), 1e-300))
        self.add(_at_most("ray_energy_agreement", worst, 1e-6))

    def check_critical_identity(self) -> None:
        worst = max(critical_identity_residual(self.params, br.field) for br in self.solutions)
        self.add(_at_most("critical_identity", worst, self.params.energy_tol))

        misses = 0
        for branch in self.solutions:
            classification = ps_limit_norms(self.cfg.a, self.cfg.b, branch.energy)
            misses += int(not classification.contains(branch.norm_sq))
        self.add(_at_most("ps_consistency", misses, 0))

    def check_linear_dependence(self) -> None:
        self.add(_at_most("linear_dependence", check_linear_dependence(self.solutions), 1e-9))

        a, b, alpha = self.cfg.a, self.cfg.b, self.reduced.alpha
        worst = 0.0
        for ti in self.solutions.roots.roots:
            for tj in self.solutions.roots.roots:
                rebuilt = (a - b * tj * tj * alpha) / (a - b * ti * ti * alpha) * tj
                worst = max(worst, abs(ti - rebuilt) / max(1.0, abs(ti)))
        self.add(_at_most("multiplier_identity", worst, 1e-12))

    def check_cross_consistency(self) -> None:
        """Branches built on an independently seeded Poisson solve agree with ours."""
        rng = np.random.default_rng(SEED + 1)
        seed = GridField(self.spec, rng.standard_normal(self.spec.size))
        other = reduce_problem(
            self.spec, self.f, self.cfg.a, self.cfg.b, rel_tol=self.cfg.cg_tol, x0=seed
        )
        twin = branches_from_reduction(
            self.params, other, tol=math.inf, sign_tol=self.cfg.sign_tol, operator=self.operator
        )
        pair = [self.solutions.by_role(Role.U1_LIKE), twin.by_role(Role.U2_LIKE)]
        self.add(_at_most("cross_consistency", check_linear_dependence(pair), 1e-8))

    def check_descent(self) -> None:
        for name, mu in (("descent_oracle", self.mu), ("descent_oracle_small_mu", self.crit / 100)):
            solutions = self.solutions if mu == self.mu else self._solve(mu)
            target = solutions.by_role(Role.U1_LIKE).field
            p = self.params.with_mu(mu)
            # 0.01 U unless that already leaves the ball ||u0||^2 < a/(3b)
            factor = min(0.01, 0.5 * math.sqrt(self.cfg.a / (3 * self.cfg.b * self.reduced.alpha)))
            u0 = self.reduced.U.scaled(factor)
            try:
                u = descent_minimize(
                    p,
                    u0,
                    step0=self.cfg.descent_step,
                    grad_tol=self.cfg.descent_tol,
                    max_iter=self.cfg.descent_max_iter,
                    cg_tol=self.cfg.cg_tol,
                )
                error = h1_norm(u - target) / h1_norm(target)
            except (BallEscapeError, IterationLimitError) as e:
                logger.warning("%s failed: %s", name, e)
                error = math.inf
            self.add(_at_most(name, error, 1e-4))

    # ---------------- eigenvalue and bounds ----------------

    def check_poincare(self) -> None:
        U = self.reduced.U
        ratio = self.lambda1 * l2_inner(U, U) / self.reduced.alpha
        self.add(_at_most("poincare", ratio, 1.0 + self.cfg.eig_tol))

        # ||U|| <= ||f||_2 / sqrt(lambda_1), from alpha = (f, U) and Poincare
        ratio = math.sqrt(self.lambda1) * self.reduced.norm_U / self.norm_f
        self.add(_at_most("poisson_bound", ratio, 1.0 + self.cfg.eig_tol))

        ratio = self.lambda1 * self.reduced.norm_U / self.norm_f
        self.add(_at_most("poisson_bound_lambda_form", ratio, 1.0, recorded=True))
        bound = mu_crit_lower_bound(self.cfg.a, self.cfg.b, self.lambda1, self.norm_f)
        self.add(_at_most("mu_crit_lower_bound", bound / self.crit, 1.0, recorded=True))

    def check_analytic(self) -> None:
        tol = discretization_tol(self.spec)
        exact = math.pi ** 2 * sum(1.0 / (L * L) for L in self.spec.lengths)
        self.add(_at_most("lambda1_analytic", abs(self.lambda1 - exact) / exact, tol))

        if self.spec.dimension == 1 and self.cfg.f.startswith("constant:"):
            c = float(self.cfg.f.partition(":")[2])
            L = self.spec.lengths[0]
            exact_alpha = c * c * L ** 3 / 12.0
            error = abs(self.reduced.alpha - exact_alpha) / exact_alpha
            self.add(_at_most("alpha_analytic", error, tol))

    def check_convergence(self) -> None:
        if self.spec.dimension != 1:
            return
        lo, hi, L = self.cfg.lower, self.cfg.upper, self.spec.lengths[0]
        lambda_exact = (math.pi / L) ** 2
        lambda_errors = []
        alpha_errors = []
        constant = self.cfg.f.startswith("constant:")
        for n in CONVERGENCE_RESOLUTIONS:
            spec = DomainSpec.interval(lo, hi, n)
            lam = smallest_eigenvalue(spec, rel_tol=self.cfg.eig_tol, cg_tol=self.cfg.cg_tol)
            lambda_errors.append(abs(lam - lambda_exact))
            if constant:
                c = float(self.cfg.f.partition(":")[2])
                reduced = reduce_problem(
                    spec, GridField.constant(spec, c), self.cfg.a, self.cfg.b, rel_tol=self.cfg.cg_tol
                )
                alpha_errors.append(abs(reduced.alpha - c * c * L ** 3 / 12.0))
        self.add(_at_most("lambda1_convergence_order", _convergence_order(lambda_errors), 0.2))
        if constant:
            self.add(_at_most("alpha_convergence_order", _convergence_order(alpha_errors), 0.2))

    def check_mu_zero_family(self) -> None:
        a, b = self.cfg.a, self.cfg.b
        rng = np.random.default_rng(SEED + 2)
        norm_worst = 0.0
        coef_worst = 0.0
        for _ in range(RANDOM_FIELDS):
            V = zero_mu_scaling(a, b, GridField(self.spec, rng.standard_normal(self.spec.size)))
            s = h1_inner(V, V)
            norm_worst = max(norm_worst, abs(s - a / b) / (a / b))
            lap = self.operator.matvec(V.values)
            nonlocal_term = np.linalg.norm((a - b * s) * lap) / np.linalg.norm(lap)
            coef_worst = max(coef_worst, float(nonlocal_term))
        self.add(_at_most("mu_zero_norm", norm_worst, 1e-12))
        self.add(_at_most("mu_zero_coefficient", coef_worst, 1e-10))

    def check_sobolev(self) -> None:
        S = self.cfg.S
        if S is None:
            return
        a, b = self.cfg.a, self.cfg.b
        dual = lp_norm(self.f, sobolev_dual_exponent(self.spec.dimension))
        bound = mu_crit_sobolev_bound(a, b, S, dual)
        self.add(_at_most("mu_crit_sobolev_bound", bound / self.crit, 1.0, recorded=True))

        u3 = self.solutions.by_role(Role.U3_LIKE)
        sup = energy_sup_bound(a, b, S, dual, self.mu)
        self.add(_at_most("energy_sup_bound", u3.energy / sup, 1.0, recorded=True))

        consts = sobolev_constants(a, b, S, dual, self.mu)
        self.add(_at_most("mu_star_ordering", consts.mu_star / consts.mu_star1, 1.0))
        self.add(_at_most("mu_star1_below_mu_0", consts.mu_star1 / consts.mu_0, 1.0))

    # ---------------- driver ----------------

    def checks(self) -> List[Callable[[], None]]:
        return [
            self.check_weak_form,
            self.check_alpha_identity,
            self.check_roots,
            self.check_regime_scan,
            self.check_residuals,
            self.check_bands_and_signs,
            self.check_energies,
            self.check_critical_identity,
            self.check_linear_dependence,
            self.check_cross_consistency,
            self.check_descent,
            self.check_poincare,
            self.check_analytic,
            self.check_convergence,
            self.check_mu_zero_family,
            self.check_sobolev,
        ]

    def run(self) -> List[CheckResult]:
        for check in self.checks():
            try:
                check()
            except KeyError as e:
                # the solution set at this mu lacks a role the check compares
                name = check.__name__.removeprefix("check_")
                logger.error("%s: no %s branch at mu=%.6g", name, e.args[0], self.mu)
                self.add(CheckResult(name, False, math.inf, 0.0))
        return self.results


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def write_results(results: List[CheckResult], out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [
        f"{r.name} {r.status} measured={_fmt(r.measured)} tolerance={_fmt(r.tolerance)}"
        + (" recorded" if r.recorded else "")
        for r in results
    ]
    txt = out_dir / VERIFICATION_TXT
    txt.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")

    table = pd.DataFrame(
        [
            {
                "name": r.name,
                "status": r.status,
                "measured": r.measured,
                "tolerance": r.tolerance,
                "recorded": r.recorded,
            }
            for r in results
        ]
    )
    table.to_csv(out_dir / VERIFICATION_CSV, index=False, float_format="%.17g", lineterminator="\n")
    return txt


def run_checks(cfg: RunConfig) -> List[CheckResult]:
    return VerificationSuite(cfg).run()


def run_verify(cfg: RunConfig, out_dir: Optional[Path] = None) -> Path:
    """Run every check, write the summary, raise VerificationError if a blocking check failed."""
    results = run_checks(cfg)
    path = write_results(results, Path(out_dir or cfg.out_dir))
    failed = [r.name for r in results if r.blocking]
    logger.info("verification: %d checks, %d failed -> %s", len(results), len(failed), path)
    if failed:
        raise VerificationError(f"{len(failed)} check(s) failed: {', '.join(failed)}", name=failed[0])
    return path
