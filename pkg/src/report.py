"""Report files: single-solve text reports, the bifurcation table, and the ray energy profile.

Every number is written with 17 significant digits and no timestamps, so the
same run file always produces byte-identical output.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np
import pandas as pd

from src.config import RunConfig
from src.domain_grid import l2_inner, lp_norm
from src.elliptic_ops import reduce_problem, smallest_eigenvalue
from src.energy import ProblemParams, ray_energy, ray_energy_derivative
from src.errors import ConfigError
from src.reduction_algebra import g_eval, mu_crit, mu_crit_lower_bound, solve_reduced
from src.solver_pipeline import SolutionSet, branches_from_reduction
from src.sweep import BifurcationSweep

logger = logging.getLogger(__name__)

SOLUTION_FILE = "solution.txt"
BIFURCATION_FILE = "bifurcation.csv"
PROFILE_FILE = "profile.csv"

TABLE_COLUMNS = [
    "mu", "regime", "count",
    "T1", "T2", "T3",
    "norm_sq_1", "norm_sq_2", "norm_sq_3",
    "energy_1", "energy_2", "energy_3",
    "residual_1", "residual_2", "residual_3",
]


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require_single_mu(cfg: RunConfig, verb: str) -> float:
    if cfg.mu is None:
        raise ConfigError(f"{verb} needs a single mu, not a mu range", field="mu")
    return cfg.mu


def _count_label(solutions: SolutionSet) -> str:
    return "inf" if solutions.infinite_family else str(len(solutions))


# ---------------- solve ----------------


def format_solution_report(cfg: RunConfig, solutions: SolutionSet) -> str:
    p = solutions.params
    reduced = solutions.reduced
    header = {
        "a": p.a,
        "b": p.b,
        "mu": p.mu,
        "grid": reduced.domain.describe(),
        "source": cfg.f,
        "alpha": reduced.alpha,
        "mu_crit": mu_crit(p.a, p.b, reduced.norm_U),
        "regime": solutions.regime.value,
        "count": _count_label(solutions),
        "infinite_family": solutions.infinite_family,
    }
    lines = ["# nonlocal Kirchhoff solution report", "[header]"]
    lines += [f"{key} = {_fmt(value)}" for key, value in header.items()]
    if solutions.infinite_family:
        lines.append("note = infinite family: every V with a - b||V||^2 = 0 solves the problem")

    for k, branch in enumerate(solutions, start=1):
        lines += [
            "",
            f"[branch {k}]",
            f"role = {branch.role.value}",
            f"multiplier = {_fmt(branch.multiplier)}",
            f"norm_sq = {_fmt(branch.norm_sq)}",
            f"energy = {_fmt(branch.energy)}",
            f"coefficient = {_fmt(branch.coefficient)}",
            f"sign = {branch.sign_class.value}",
            f"band = {branch.band.value}",
            f"residual = {_fmt(branch.residual)}",
        ]
    return "\n".join(lines) + "\n"


def solve_config(cfg: RunConfig) -> SolutionSet:
    mu = _require_single_mu(cfg, "solve")
    spec = cfg.domain_spec()
    f = cfg.build_source(spec)
    reduced = reduce_problem(spec, f, cfg.a, cfg.b, rel_tol=cfg.cg_tol)
    crit = mu_crit(cfg.a, cfg.b, reduced.norm_U)
    return branches_from_reduction(
        ProblemParams(cfg.a, cfg.b, mu, f),
        reduced,
        tol=cfg.residual_tol,
        double_root_tol=cfg.double_root_tol * crit,
        sign_tol=cfg.sign_tol,
    )


def run_solve(cfg: RunConfig) -> Path:
    solutions = solve_config(cfg)
    path = _out_dir(cfg) / SOLUTION_FILE
    path.write_text(format_solution_report(cfg, solutions), encoding="utf-8", newline="\n")
    logger.info(
        "solve mu=%.6g: %s solution(s), regime %s -> %s",
        solutions.params.mu, _count_label(solutions), solutions.regime.value, path,
    )
    return path


# ---------------- bifurcate ----------------


def bifurcation_row(solutions: SolutionSet) -> Dict[str, Any]:
    row: Dict[str, Any] = {
        "mu": solutions.params.mu,
        "regime": solutions.regime.value,
        "count": _count_label(solutions),
    }
    for k in range(1, 4):
        branch = solutions[k - 1] if k <= len(solutions) else None
        row[f"T{k}"] = branch.multiplier if branch is not None else np.nan
        row[f"norm_sq_{k}"] = branch.norm_sq if branch is not None else np.nan
        row[f"energy_{k}"] = branch.energy if branch is not None else np.nan
        row[f"residual_{k}"] = branch.residual if branch is not None else np.nan
    return row


def run_bifurcation(cfg: RunConfig) -> Path:
    if not cfg.is_sweep:
        raise ConfigError("bifurcate needs mu_min/mu_max, not a single mu", field="mu_min")
    spec = cfg.domain_spec()
    f = cfg.build_source(spec)
    reduced = reduce_problem(spec, f, cfg.a, cfg.b, rel_tol=cfg.cg_tol)
    lambda1 = smallest_eigenvalue(spec, rel_tol=cfg.eig_tol, cg_tol=cfg.cg_tol)
    norm_f = lp_norm(f, 2)

    crit = mu_crit(cfg.a, cfg.b, reduced.norm_U)
    lambda_bound = mu_crit_lower_bound(cfg.a, cfg.b, lambda1, norm_f)
    if lambda_bound > crit:
        logger.warning(
            "lambda_1 form of the mu_crit lower bound (%.6g) exceeds mu_crit (%.6g)",
            lambda_bound, crit,
        )

    sweep = BifurcationSweep(
        ProblemParams(cfg.a, cfg.b, 0.0, f),
        reduced,
        tol=cfg.residual_tol,
        double_root_rel_tol=cfg.double_root_tol,
        sign_tol=cfg.sign_tol,
    )
    rows = sweep.run(cfg.mu_grid())
    table = pd.DataFrame([bifurcation_row(s) for s in rows], columns=TABLE_COLUMNS)
    table = table.sort_values("mu", kind="stable").reset_index(drop=True)

    header = {
        "a": cfg.a,
        "b": cfg.b,
        "alpha": reduced.alpha,
        "mu_crit": crit,
        "lambda1": lambda1,
        "mu_crit_lower_bound": lambda_bound,
        "norm_f_l2": norm_f,
        "grid": spec.describe(),
        "source": cfg.f,
    }
    path = _out_dir(cfg) / BIFURCATION_FILE
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in header.items():
            fh.write(f"# {key} = {_fmt(value)}\n")
        table.to_csv(fh, index=False, float_format="%.17g", na_rep="", lineterminator="\n")

    logger.info(
        "bifurcation: %d rows over mu in [%.6g, %.6g], mu_crit=%.6g -> %s",
        len(table), cfg.mu_min, cfg.mu_max, crit, path,
    )
    return path


# ---------------- profile ----------------


def profile_table(a: float, b: float, alpha: float, mu: float, steps: int) -> pd.DataFrame:
    """phi(t) = I(tU) and g(t) on a symmetric t-grid covering every root, roots flagged."""
    roots = solve_reduced(a, b, alpha, mu).roots
    t_far = max(abs(t) for t in roots)
    grid = np.linspace(-1.25 * t_far, 1.25 * t_far, steps)
    ts = np.concatenate([grid, np.asarray(roots)])
    flags = np.concatenate([np.zeros(grid.size, dtype=int), np.ones(len(roots), dtype=int)])

    table = pd.DataFrame(
        {
            "t": ts,
            "phi": [ray_energy(a, b, alpha, mu, t) for t in ts],
            "dphi": [ray_energy_derivative(a, b, alpha, mu, t) for t in ts],
            "g": [g_eval(a, b, alpha, mu, t) for t in ts],
            "root": flags,
        }
    )
    return table.sort_values(["t", "root"], kind="stable").reset_index(drop=True)


def run_profile(cfg: RunConfig) -> Path:
    mu = _require_single_mu(cfg, "profile")
    spec = cfg.domain_spec()
    f = cfg.build_source(spec)
    reduced = reduce_problem(spec, f, cfg.a, cfg.b, rel_tol=cfg.cg_tol)
    table = profile_table(cfg.a, cfg.b, reduced.alpha, mu, cfg.profile_steps)

    header = {
        "a": cfg.a,
        "b": cfg.b,
        "mu": mu,
        "alpha": reduced.alpha,
        "mu_crit": mu_crit(cfg.a, cfg.b, reduced.norm_U),
        "load": l2_inner(f, reduced.U),
        "grid": spec.describe(),
    }
    path = _out_dir(cfg) / PROFILE_FILE
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in header.items():
            fh.write(f"# {key} = {_fmt(value)}\n")
        table.to_csv(fh, index=False, float_format="%.17g", lineterminator="\n")
    logger.info("profile mu=%.6g: %d points -> %s", mu, len(table), path)
    return path


# ---------------- readers ----------------


class ReportReader:

    @staticmethod
    def decode_value(raw: str) -> Any:
        raw = raw.strip()
        if raw in ("true", "false"):
            return raw == "true"
        for cast in (int, float):
            try:
                return cast(raw)
            except ValueError:
                continue
        return raw

    @staticmethod
    def parse_header(lines: List[str]) -> Dict[str, Any]:
        header: Dict[str, Any] = {}
        for line in lines:
            if not line.startswith("#"):
                break
            key, sep, value = line[1:].partition("=")
            if sep:
                header[key.strip()] = ReportReader.decode_value(value)
        return header

    @staticmethod
    def parse_solution(text: str) -> Tuple[Dict[str, Any], List[Dict[str, Any]]]:
        header: Dict[str, Any] = {}
        branches: List[Dict[str, Any]] = []
        current = None
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line == "[header]":
                current = header
                continue
            if line.startswith("[branch"):
                current = {}
                branches.append(current)
                continue
            if current is None:
                raise ValueError(f"value outside of a section: {line!r}")
            key, _, value = line.partition("=")
            current[key.strip()] = ReportReader.decode_value(value)
        return header, branches


def read_solution_report(path: Union[str, Path]) -> Dict[str, Any]:
    header, branches = ReportReader.parse_solution(Path(path).read_text(encoding="utf-8"))
    return {"header": header, "branches": branches}


def read_bifurcation_table(path: Union[str, Path]) -> Tuple[Dict[str, Any], pd.DataFrame]:
    """Header dict from the leading '# key = value' lines plus the table itself."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = ReportReader.parse_header(fh.read().splitlines())
    table = pd.read_csv(path, comment="#", dtype={"regime": str, "count": str})
    table["count"] = pd.to_numeric(table["count"])
    return header, table
