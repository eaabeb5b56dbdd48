"""Outer hybrid-projection loop.

One iteration runs two parallel candidate phases (resolvent steps over the
bifunction/operator pairs, then relaxed mapping steps over the family of
mappings), selects the candidate furthest from the current iterate in each
phase, appends the halfspace cut that separates the next approximation from
the current one, and projects the fixed anchor point onto the accumulated
intersection. Two modes are supported: ``algorithm1`` relaxes each cut by a
slack computed from the asymptotic sequence, and applies asymptotic mappings
at power ``n``; ``algorithm2`` uses exact cuts and single applications, and
requires all mappings to be plain (non-asymptotic) pseudocontractions.

Both parallel phases reduce in fixed index order, so every result is
independent of the worker count.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .geometry import (
    InfeasibleSetError,
    NestedSet,
    ProjectionFailure,
    as_vector,
    halfspace_from_iterate,
    project_nested,
)
from .operators import ProblemFamily, gep_chunk_evaluator, map_chunk_evaluator
from .parallel import Furthest, furthest_candidate

__all__ = [
    "ParamSchedule",
    "ToleranceToReference",
    "ResidualBelow",
    "SolverConfig",
    "IterationRecord",
    "SolverState",
    "ResidualTriple",
    "Report",
    "cut_relaxation",
    "select_furthest",
    "iterate",
    "solve",
    "residuals",
]

SCHEDULE_PREFIX_CAP = 100_000


@dataclass(frozen=True)
class ParamSchedule:
    """Control sequences of the outer loop and their admissibility bounds.

    Requirements, checked on a finite prefix by :meth:`violations`:
    the averaging weights satisfy ``0 < alpha_n < 1``; the mapping
    relaxation satisfies ``kappa <= beta_n <= b < 1``; the resolvent steps
    satisfy ``0 < d <= r_n <= e < 2 * alpha``; the asymptotic sequence stays
    at or above one. ``omega`` bounds the norm of every common solution.
    """

    alpha_fn: Callable[[int], float]
    beta_fn: Callable[[int], float]
    r_fn: Callable[[int], float]
    k_fn: Callable[[int], float]
    omega: float
    b: float
    d: float
    e: float

    def violations(self, kappa: float, ism_alpha: float, count: int) -> list[str]:
        """Condition violations over iterations ``0 .. count-1`` (capped)."""
        problems: list[str] = []
        if not self.omega >= 0:
            problems.append(f"omega={self.omega!r} must be nonnegative")
        if not (self.b < 1.0):
            problems.append(f"b={self.b!r} must be below 1")
        if self.b < kappa:
            problems.append(f"b={self.b!r} must be at least kappa={kappa!r}")
        if not (0.0 < self.d <= self.e):
            problems.append(f"need 0 < d <= e, got d={self.d!r}, e={self.e!r}")
        if math.isfinite(ism_alpha) and not (self.e < 2.0 * ism_alpha):
            problems.append(
                f"e={self.e!r} must stay below twice the modulus {ism_alpha!r}"
            )
        for n in range(min(count, SCHEDULE_PREFIX_CAP)):
            a = self.alpha_fn(n)
            if not (0.0 < a < 1.0):
                problems.append(f"alpha_{n}={a!r} outside (0, 1)")
                break
        for n in range(min(count, SCHEDULE_PREFIX_CAP)):
            beta = self.beta_fn(n)
            if not (kappa <= beta <= self.b):
                problems.append(
                    f"beta_{n}={beta!r} outside [kappa={kappa!r}, b={self.b!r}]"
                )
                break
        for n in range(min(count, SCHEDULE_PREFIX_CAP)):
            r = self.r_fn(n)
            if not (self.d <= r <= self.e):
                problems.append(f"r_{n}={r!r} outside [d={self.d!r}, e={self.e!r}]")
                break
        for n in range(min(count, SCHEDULE_PREFIX_CAP)):
            k = self.k_fn(n)
            if not k >= 1.0:
                problems.append(f"k_{n}={k!r} below 1")
                break
        return problems


@dataclass(frozen=True)
class ToleranceToReference:
    """Stop once ``||x_n - reference|| <= tol`` (known-solution problems)."""

    reference: np.ndarray
    tol: float

    def __post_init__(self):
        object.__setattr__(self, "reference", as_vector(self.reference))
        if not self.tol > 0:
            raise ValueError("stop tolerance must be positive")


@dataclass(frozen=True)
class ResidualBelow:
    """Stop once all three phase residuals fall to ``tol`` or below."""

    tol: float

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("stop tolerance must be positive")


StopRule = ToleranceToReference | ResidualBelow


@dataclass(frozen=True)
class SolverConfig:
    mode: str = "algorithm2"
    epsilon_variant: str = "standard"
    stop: StopRule | None = None
    max_iter: int = 1000
    projection_tol: float = 1e-12
    projection_max_sweeps: int = 10_000
    workers: int = 1
    record_history: bool = False

    def __post_init__(self):
        if self.mode not in ("algorithm1", "algorithm2"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.epsilon_variant not in ("standard", "squared"):
            raise ValueError(f"unknown relaxation variant {self.epsilon_variant!r}")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")
        if self.workers < 1:
            raise ValueError("need at least one worker")

    @property
    def needs_map_residual(self) -> bool:
        return self.record_history or isinstance(self.stop, ResidualBelow)

    def check_against(self, problem: ProblemFamily) -> None:
        if self.mode == "algorithm2" and problem.has_asymptotic_maps:
            raise ValueError(
                "algorithm2 handles plain pseudocontractions only; "
                "use algorithm1 for asymptotic mappings"
            )


@dataclass(frozen=True)
class IterationRecord:
    """Everything iteration ``n`` produced, timings in milliseconds."""

    n: int
    x_prev: np.ndarray
    x_new: np.ndarray
    y_far: np.ndarray
    z_far: np.ndarray
    i_far: int
    j_far: int
    eps: float
    res_y: float
    res_z: float
    res_s: float | None
    t_phase1_ms: float
    t_phase3_ms: float
    t_project_ms: float


@dataclass(frozen=True)
class ResidualTriple:
    res_y: float
    res_z: float
    res_s: float


@dataclass(frozen=True)
class SolverState:
    n: int
    x: np.ndarray
    x0: np.ndarray
    nested: NestedSet
    last: IterationRecord | None = None

    @property
    def y_far(self) -> np.ndarray | None:
        return None if self.last is None else self.last.y_far

    @property
    def z_far(self) -> np.ndarray | None:
        return None if self.last is None else self.last.z_far


@dataclass(frozen=True)
class Report:
    final_x: np.ndarray
    iterations: int
    stop_reason: str  # "tol_to_reference", "residual", or "budget"
    history: tuple[IterationRecord, ...]
    workers: int
    wall_time_s: float


def cut_relaxation(k_n: float, x, omega: float, variant: str = "standard") -> float:
    """Slack added to the halfspace cut for asymptotic families.

    The ``standard`` form is ``(k_n - 1) * (||x|| + omega)^2``; the
    ``squared`` form replaces ``k_n - 1`` with ``k_n^2 - 1`` and suits
    families whose mappings only bound powers linearly in ``k_n``. Both
    vanish when ``k_n = 1``.
    """
    if k_n < 1.0:
        raise ValueError("asymptotic constant must be at least 1")
    if omega < 0.0:
        raise ValueError("solution norm bound must be nonnegative")
    reach = float(np.linalg.norm(as_vector(x))) + omega
    if variant == "standard":
        return (k_n - 1.0) * reach * reach
    if variant == "squared":
        return (k_n * k_n - 1.0) * reach * reach
    raise ValueError(f"unknown relaxation variant {variant!r}")


def select_furthest(x, candidates: Sequence) -> tuple[int, np.ndarray]:
    """Index and value of the candidate furthest from ``x``.

    Ties break toward the smallest index, matching the parallel reduction.
    """
    xv = as_vector(x)
    if len(candidates) == 0:
        raise ValueError("candidate list must be nonempty")
    best_i = 0
    best_d2 = -1.0
    best_v = None
    for i, candidate in enumerate(candidates):
        cv = as_vector(candidate)
        if cv.shape != xv.shape:
            raise ValueError("candidate dimension mismatch")
        d2 = float(np.sum((cv - xv) ** 2))
        if d2 > best_d2:
            best_i, best_d2, best_v = i, d2, cv
    return best_i, best_v


def _map_phase(
    problem: ProblemFamily,
    nominal_power: int,
    point: np.ndarray,
    measure_from: np.ndarray,
    pool: ThreadPoolExecutor | None,
    workers: int,
    combine: Callable[[np.ndarray], np.ndarray] | None = None,
) -> Furthest:
    evaluate = map_chunk_evaluator(problem, nominal_power, point)
    if combine is not None:
        inner = evaluate
        evaluate = lambda lo, hi: combine(inner(lo, hi))  # noqa: E731

    return furthest_candidate(
        evaluate, problem.n_maps, measure_from, pool=pool, workers=workers
    )


def iterate(
    state: SolverState,
    problem: ProblemFamily,
    sched: ParamSchedule,
    cfg: SolverConfig,
    pool: ThreadPoolExecutor | None = None,
) -> SolverState:
    """Run one full outer iteration and return the advanced state.

    The two candidate phases evaluate their members in parallel chunks with
    a deterministic index-ordered reduction, so the output is identical for
    any worker count. Projection failures propagate annotated with the
    iteration index.
    """
    n = state.n
    x = state.x
    alpha_n = sched.alpha_fn(n)
    beta_n = sched.beta_fn(n)
    r_n = sched.r_fn(n)

    t0 = time.perf_counter()
    if problem.n_geps > 0:
        y_sel = furthest_candidate(
            gep_chunk_evaluator(problem, r_n, x),
            problem.n_geps,
            x,
            pool=pool,
            workers=cfg.workers,
        )
        y_far, i_far, res_y = y_sel.point, y_sel.index, y_sel.distance
    else:
        y_far, i_far, res_y = x, -1, 0.0
    t1 = time.perf_counter()

    nominal_power = n if cfg.mode == "algorithm1" else 1
    if problem.n_maps > 0:
        mix = alpha_n * x + (1.0 - alpha_n) * beta_n * y_far
        scale = (1.0 - alpha_n) * (1.0 - beta_n)

        def affine_combine(s: np.ndarray) -> np.ndarray:
            # Chunk evaluator output is caller-owned: combine in place.
            np.multiply(s, scale, out=s)
            np.add(s, mix, out=s)
            return s

        z_sel = _map_phase(
            problem,
            nominal_power,
            y_far,
            x,
            pool,
            cfg.workers,
            combine=affine_combine,
        )
        z_far, j_far, res_z = z_sel.point, z_sel.index, z_sel.distance
    else:
        z_far = alpha_n * x + (1.0 - alpha_n) * y_far
        j_far = -1
        res_z = float(np.linalg.norm(z_far - x))
    t2 = time.perf_counter()

    if cfg.mode == "algorithm1":
        eps = cut_relaxation(sched.k_fn(n), x, sched.omega, cfg.epsilon_variant)
    else:
        eps = 0.0
    state.nested.add_cut(halfspace_from_iterate(x, z_far, eps))

    try:
        x_new = project_nested(
            state.nested, state.x0, cfg.projection_tol, cfg.projection_max_sweeps
        )
    except ProjectionFailure as err:
        raise ProjectionFailure(
            f"iteration {n}: {err}", err.best, err.residual
        ) from err
    except InfeasibleSetError as err:
        raise InfeasibleSetError(f"iteration {n}: {err}") from err
    t3 = time.perf_counter()

    res_s: float | None = None
    if cfg.needs_map_residual:
        if problem.n_maps > 0:
            res_s = _map_phase(problem, 1, x, x, pool, cfg.workers).distance
        else:
            res_s = 0.0

    record = IterationRecord(
        n=n,
        x_prev=x,
        x_new=x_new,
        y_far=y_far,
        z_far=z_far,
        i_far=i_far,
        j_far=j_far,
        eps=eps,
        res_y=res_y,
        res_z=res_z,
        res_s=res_s,
        t_phase1_ms=(t1 - t0) * 1e3,
        t_phase3_ms=(t2 - t1) * 1e3,
        t_project_ms=(t3 - t2) * 1e3,
    )
    return replace(state, n=n + 1, x=x_new, last=record)


def residuals(state: SolverState, problem: ProblemFamily) -> ResidualTriple:
    """Phase residuals of the last completed iteration.

    Reuses the stored phase outputs; the mapping residual (power one, taken
    at the iterate the phases started from) is computed on demand when the
    iteration did not already need it.
    """
    record = state.last
    if record is None:
        raise ValueError("no iteration has completed yet")
    res_s = record.res_s
    if res_s is None:
        if problem.n_maps > 0:
            res_s = _map_phase(problem, 1, record.x_prev, record.x_prev, None, 1).distance
        else:
            res_s = 0.0
    return ResidualTriple(res_y=record.res_y, res_z=record.res_z, res_s=res_s)


def solve(
    problem: ProblemFamily,
    sched: ParamSchedule,
    cfg: SolverConfig,
    x0,
) -> Report:
    """Iterate from the anchor ``x0`` until the stop rule or budget fires.

    The anchor must belong to the base set. With a reference or residual
    stop rule and a small tolerance, the final iterate approximates the
    projection of the anchor onto the common solution set. Exhausting
    ``max_iter`` is a normal outcome reported as reason ``"budget"``.
    """
    start_v = as_vector(x0)
    if not problem.base.contains(start_v, 1e-9):
        raise ValueError("anchor x0 must belong to the base set")
    cfg.check_against(problem)
    issues = sched.violations(problem.kappa, problem.alpha, max(cfg.max_iter, 1))
    if issues:
        raise ValueError("inadmissible schedule: " + "; ".join(issues))

    state = SolverState(
        n=0, x=start_v, x0=start_v, nested=NestedSet(base=problem.base)
    )
    history: list[IterationRecord] = []
    reason = "budget"
    began = time.perf_counter()
    pool = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    try:
        for _ in range(cfg.max_iter):
            state = iterate(state, problem, sched, cfg, pool=pool)
            if cfg.record_history:
                history.append(state.last)
            stop = cfg.stop
            if isinstance(stop, ToleranceToReference):
                if float(np.linalg.norm(state.x - stop.reference)) <= stop.tol:
                    reason = "tol_to_reference"
                    break
            elif isinstance(stop, ResidualBelow):
                r = state.last
                if max(r.res_y, r.res_z, r.res_s) <= stop.tol:
                    reason = "residual"
                    break
    finally:
        if pool is not None:
            pool.shutdown(wait=True)

    return Report(
        final_x=state.x,
        iterations=state.n,
        stop_reason=reason,
        history=tuple(history),
        workers=cfg.workers,
        wall_time_s=time.perf_counter() - began,
    )
