# src/sweep.py

import asyncio
import logging
import math
from typing import Any, Callable, List, Optional, Sequence

from src.elliptic_ops import LaplacianOperator, ReducedProblem
from src.energy import ProblemParams
from src.reduction_algebra import mu_crit
from src.solver_pipeline import RESIDUAL_TOL, SolutionSet, branches_from_reduction

logger = logging.getLogger(__name__)


class BifurcationSweep:
    """
    Evaluates the solution set for many mu against one shared reduction.

    - The Poisson solve happens once, outside; every row only needs the cubic
      roots plus one residual per branch, so rows run in worker threads via
      asyncio.to_thread and are gathered back in input order.
    - A semaphore caps how many rows are in flight at once.
    """

    def __init__(
        self,
        base: ProblemParams,
        reduced: ReducedProblem,
        tol: float = RESIDUAL_TOL,
        double_root_rel_tol: Optional[float] = None,
        sign_tol: float = 0.0,
        max_concurrency: int = 8,
    ):
        if max_concurrency < 1:
            raise ValueError(f"max_concurrency must be >= 1, got {max_concurrency}")
        self.base = base
        self.reduced = reduced
        self.tol = tol
        self.sign_tol = sign_tol
        self.max_concurrency = max_concurrency
        self.double_root_tol = None
        if double_root_rel_tol is not None:
            self.double_root_tol = double_root_rel_tol * mu_crit(
                base.a, base.b, math.sqrt(reduced.alpha)
            )
        self._operator = LaplacianOperator.assemble(reduced.domain)

    # ---------- internal sync helpers ----------

    def _row_sync(self, mu: float) -> SolutionSet:
        return branches_from_reduction(
            self.base.with_mu(float(mu)),
            self.reduced,
            tol=self.tol,
            double_root_tol=self.double_root_tol,
            sign_tol=self.sign_tol,
            operator=self._operator,
        )

    # ---------- generic async runner ----------

    async def _run(self, func: Callable[..., Any], *args: Any, **kwargs: Any) -> Any:
        return await asyncio.to_thread(func, *args, **kwargs)

    # ---------- public API ----------

    async def row(self, mu: float, limiter: asyncio.Semaphore) -> SolutionSet:
        async with limiter:
            return await self._run(self._row_sync, mu)

    async def run_async(self, mus: Sequence[float]) -> List[SolutionSet]:
        limiter = asyncio.Semaphore(self.max_concurrency)
        rows = await asyncio.gather(*(self.row(mu, limiter) for mu in mus))
        logger.debug("sweep finished: %d rows", len(rows))
        return list(rows)

    def run(self, mus: Sequence[float]) -> List[SolutionSet]:
        return asyncio.run(self.run_async(mus))
