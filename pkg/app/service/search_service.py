from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import itertools

from loguru import logger
import numpy as np
from pydantic import ValidationError

from app.config import config
from app.dto.field import FieldSpec, parse_field
from app.dto.inequality import CknParams, TheoremId
from app.dto.quadrature import QuadratureBudget
from app.dto.search import (
    GridScanResult,
    Objective,
    ParamGrid,
    RestartResult,
    SearchProblem,
    SearchResult,
    StopReason,
    SweepRow,
    TraceEntry,
)
from app.errors import CknLabError, SearchError
from app.service.inequality_service import InequalityService
from app.service.quadrature_service import QuadratureService
from app.utils import derive_seed

REFLECT, EXPAND, CONTRACT, SHRINK = 1.0, 2.0, 0.5, 0.5
DIAMETER_TOLERANCE = 1e-6
SPREAD_TOLERANCE = 1e-8
MAX_CONSECUTIVE_FAILURES = 5

SWEEP_THEOREMS = (TheoremId.CKN_COMPLEX, TheoremId.CKN_VECTOR, TheoremId.SECOND_ORDER)

# theta -> objective value, None when the evaluation failed
type RatioFunction = Callable[[np.ndarray], float | None]


class Vertex:
    """Coordinates together with the objective value there."""

    __slots__ = ("x", "f")

    def __init__(self, x: np.ndarray, f: float) -> None:
        self.x = x.copy()
        self.f = f


@dataclass
class SimplexRun:
    best: Vertex
    iterations: int = 0
    evaluations: int = 0
    stop_reason: StopReason = StopReason.ITERATIONS
    min_evaluated: float = np.inf
    trace: list[tuple[int, np.ndarray, float]] = field(default_factory=list)


class NelderMead:
    """Bound-constrained Nelder-Mead; vertices are clipped into the box, failed evaluations trigger a shrink."""

    def __init__(self, objective: RatioFunction, lower: np.ndarray, upper: np.ndarray, max_iterations: int) -> None:
        self.objective = objective
        self.lower = lower
        self.upper = upper
        self.max_iterations = max_iterations
        self.evaluations = 0
        self.min_evaluated = np.inf

    def _evaluate(self, x: np.ndarray) -> float | None:
        self.evaluations += 1
        value = self.objective(x)
        if value is not None:
            self.min_evaluated = min(self.min_evaluated, value)
        return value

    def _clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def initial_simplex(self, start: np.ndarray, step: np.ndarray) -> list[Vertex]:
        points = [self._clip(start)]
        for k in range(len(start)):
            x = points[0].copy()
            # step inwards when the start sits on the upper bound
            x[k] = x[k] + step[k] if x[k] + step[k] <= self.upper[k] else x[k] - step[k]
            points.append(self._clip(x))

        vertices = []
        for x in points:
            value = self._evaluate(x)
            if value is None:
                raise SearchError(f"objective undefined at initial vertex {x.tolist()}")
            vertices.append(Vertex(x, value))
        return vertices

    def run(self, start: np.ndarray, step: np.ndarray) -> SimplexRun:
        vertices = self.initial_simplex(start, step)
        run = SimplexRun(best=vertices[0])
        failures = 0

        for iteration in range(self.max_iterations):
            vertices.sort(key=lambda v: v.f)
            run.best = vertices[0]
            run.iterations = iteration

            if max(np.linalg.norm(v.x - vertices[0].x) for v in vertices[1:]) < DIAMETER_TOLERANCE:
                run.stop_reason = StopReason.DIAMETER
                break
            if vertices[-1].f - vertices[0].f < SPREAD_TOLERANCE:
                run.stop_reason = StopReason.SPREAD
                break
            if failures >= MAX_CONSECUTIVE_FAILURES:
                run.stop_reason = StopReason.FAILURES
                break

            failed = not self._step(vertices)
            failures = failures + 1 if failed else 0
            vertices.sort(key=lambda v: v.f)
            run.trace.append((iteration, vertices[0].x.copy(), vertices[0].f))
        else:
            vertices.sort(key=lambda v: v.f)
            run.best = vertices[0]
            run.iterations = self.max_iterations

        run.evaluations = self.evaluations
        run.min_evaluated = self.min_evaluated
        return run

    def _step(self, vertices: list[Vertex]) -> bool:
        """One simplex update; False when an evaluation failed (the simplex is then shrunk)."""
        best, worst, second_worst = vertices[0], vertices[-1], vertices[-2]
        centroid = np.mean([v.x for v in vertices[:-1]], axis=0)

        reflected = self._clip(centroid + REFLECT * (centroid - worst.x))
        f_reflected = self._evaluate(reflected)
        if f_reflected is None:
            self._shrink(vertices)
            return False

        if best.f <= f_reflected < second_worst.f:
            vertices[-1] = Vertex(reflected, f_reflected)
            return True

        if f_reflected < best.f:
            expanded = self._clip(centroid + EXPAND * (reflected - centroid))
            f_expanded = self._evaluate(expanded)
            if f_expanded is not None and f_expanded < f_reflected:
                vertices[-1] = Vertex(expanded, f_expanded)
            else:
                vertices[-1] = Vertex(reflected, f_reflected)
            return f_expanded is not None

        if f_reflected < worst.f:
            contracted = self._clip(centroid + CONTRACT * (reflected - centroid))
        else:
            contracted = self._clip(centroid + CONTRACT * (worst.x - centroid))
        f_contracted = self._evaluate(contracted)
        if f_contracted is None:
            self._shrink(vertices)
            return False
        if f_contracted < min(f_reflected, worst.f):
            vertices[-1] = Vertex(contracted, f_contracted)
            return True
        return self._shrink(vertices)

    def _shrink(self, vertices: list[Vertex]) -> bool:
        best = vertices[0]
        ok = True
        for i in range(1, len(vertices)):
            x = best.x + SHRINK * (vertices[i].x - best.x)
            value = self._evaluate(x)
            if value is None:
                ok = False
            else:
                vertices[i] = Vertex(x, value)
        return ok


class SearchService:
    """Ratio minimization over parametric families and parameter sweeps."""

    inequality_service: InequalityService
    threads: int

    def __init__(self, inequality_service: InequalityService | None = None, threads: int | None = None) -> None:
        # cells and restarts run concurrently, so each quadrature stays single-threaded
        self.inequality_service = inequality_service or InequalityService(
            quadrature_service=QuadratureService(threads=1)
        )
        self.threads = threads or config.threads

    def objective(self, problem: SearchProblem) -> RatioFunction:
        def evaluate(theta: np.ndarray) -> float | None:
            try:
                field = problem.field_at(theta.tolist())
                report = self.inequality_service.verify(
                    problem.theorem_id,
                    field,
                    params=problem.params,
                    general_params=problem.general_params,
                    n=problem.n,
                    budget=problem.budget,
                )[0]
            except (CknLabError, ValidationError) as e:
                logger.warning(f"Objective failed at theta = {theta.tolist()}: {e}")
                return None

            ratio = report.ratio_classical if problem.objective == Objective.RATIO_CLASSICAL else report.ratio_improved
            if ratio is None or not np.isfinite(ratio):
                logger.warning(f"Objective undefined at theta = {theta.tolist()} (vanishing right-hand side)")
                return None
            return ratio

        return evaluate

    def minimize_ratio(self, problem: SearchProblem) -> SearchResult:
        """Nelder-Mead from ``restarts`` seeded starting points; the best restart wins."""
        lower = np.array([parameter.lower for parameter in problem.free_parameters])
        upper = np.array([parameter.upper for parameter in problem.free_parameters])
        step = problem.initial_step * (upper - lower)
        objective = self.objective(problem)

        def restart(index: int) -> tuple[int, SimplexRun]:
            seed = derive_seed(problem.seed, index)
            rng = np.random.default_rng(seed)
            start = lower + rng.uniform(size=len(lower)) * (upper - lower)
            run = NelderMead(objective, lower, upper, problem.max_iterations).run(start, step)
            logger.debug(f"Restart {index}: {run.best.f:.10g} after {run.iterations} iterations, {run.stop_reason}")
            return seed, run

        logger.info(f"Searching {problem.theorem_id} over {len(lower)} parameter(s) with {problem.restarts} restarts")
        with ThreadPoolExecutor(max_workers=max(1, min(self.threads, problem.restarts))) as pool:
            runs = list(pool.map(restart, range(problem.restarts)))

        restarts = [
            RestartResult(
                seed=seed,
                best_theta=run.best.x.tolist(),
                best_ratio=run.best.f,
                iterations=run.iterations,
                evaluations=run.evaluations,
                stop_reason=run.stop_reason,
            )
            for seed, run in runs
        ]
        winner = min(range(len(runs)), key=lambda i: runs[i][1].best.f)
        best = runs[winner][1]

        return SearchResult(
            parameters=[parameter.path for parameter in problem.free_parameters],
            best_theta=best.best.x.tolist(),
            best_ratio=best.best.f,
            min_evaluated_ratio=min(run.min_evaluated for _, run in runs),
            evaluations=sum(run.evaluations for _, run in runs),
            stop_reason=best.stop_reason,
            restarts=restarts,
            trace=[
                TraceEntry(restart=index, iteration=iteration, theta=theta.tolist(), ratio=ratio)
                for index, (_, run) in enumerate(runs)
                for iteration, theta, ratio in run.trace
            ],
        )

    def grid_scan(self, problem: SearchProblem, points_per_axis: int = 20) -> GridScanResult:
        """Objective on the tensor grid including both bounds of every parameter."""
        if points_per_axis < 2:
            raise SearchError("grid scan needs at least 2 points per axis")
        axes = [np.linspace(p.lower, p.upper, points_per_axis) for p in problem.free_parameters]
        thetas = [np.array(theta) for theta in itertools.product(*axes)]
        objective = self.objective(problem)

        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            values = list(pool.map(objective, thetas))

        finite = [(value, i) for i, value in enumerate(values) if value is not None]
        if not finite:
            raise SearchError("objective failed at every grid point")
        best_ratio, best_index = min(finite)
        return GridScanResult(
            points_per_axis=points_per_axis,
            best_theta=thetas[best_index].tolist(),
            best_ratio=best_ratio,
            evaluations=len(thetas),
            failures=len(thetas) - len(finite),
        )

    def sweep(
        self, theorem_id: TheoremId, grid: ParamGrid, field: FieldSpec, budget: QuadratureBudget | None = None
    ) -> list[SweepRow]:
        """One row per (n, p, q); inadmissible tuples are kept with the violated constraint."""
        if theorem_id not in SWEEP_THEOREMS:
            raise SearchError(f"sweeps run over {', '.join(SWEEP_THEOREMS)}, not {theorem_id}")
        cells = list(itertools.product(grid.n, grid.p, grid.q))
        logger.info(f"Sweeping {theorem_id} over {len(cells)} cell(s)")

        def run_cell(cell: tuple[int, float, float]) -> SweepRow:
            n, p, q = cell
            try:
                params = CknParams(n=n, p=p, q=q)
                cell_field = field if field.domain.n == n else self._with_dimension(field, n)
            except ValidationError as e:
                reason = e.errors()[0]["msg"].removeprefix("Value error, ")
                return SweepRow(theorem_id=theorem_id, n=n, p=p, q=q, skipped_reason=reason)

            report = self.inequality_service.verify(theorem_id, cell_field, params=params, budget=budget)[0]
            return SweepRow(
                theorem_id=theorem_id,
                n=n,
                p=p,
                q=q,
                lhs=report.lhs,
                rhs_classical=report.rhs_classical,
                cov_term=report.cov_term,
                slack=report.slack,
                relative_margin=report.relative_margin,
                holds=report.holds,
            )

        with ThreadPoolExecutor(max_workers=max(1, min(self.threads, len(cells) or 1))) as pool:
            return list(pool.map(run_cell, cells))

    @staticmethod
    def _with_dimension(field: FieldSpec, n: int) -> FieldSpec:
        data = field.model_dump(mode="json", exclude_none=True)
        data["domain"] = {"euclidean": n}
        return parse_field(data)
