"""Batch front-end: config ingestion and the run, validate, and bench
subcommands.

A run is described by one JSON config file. The problem is either the
built-in benchmark preset ("section4" with sizes N and M) or a reduced-scheme
preset ("cor1" .. "cor5") with inline parts built from variant tags. Exit
codes: 0 success, 1 invalid config, 2 solver failure, 3 validation failure.
Worker-count precedence: --workers flag, then the config field, then the
HYBRIDPROJ_WORKERS environment variable, then 1.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .geometry import Ball, Box, InfeasibleSetError, ProjectionFailure, as_vector
from .operators import (
    ScalarMonotoneBifunction,
    ZeroBifunction,
    affine_operator,
    identity_map,
    resolvent,
    verify_family,
    zero_operator,
)
from .problems import (
    IntervalSolution,
    PointSolution,
    build_section4,
    preset,
    section4_bifunction,
    section4_map,
)
from .solver import (
    ParamSchedule,
    Report,
    ResidualBelow,
    SolverConfig,
    ToleranceToReference,
    solve,
)

__all__ = [
    "RunConfig",
    "ConfigError",
    "DeterminismError",
    "load_config",
    "build_inputs",
    "run",
    "validate",
    "bench",
    "main",
]

WORKERS_ENV_VAR = "HYBRIDPROJ_WORKERS"
HISTORY_COLUMNS = (
    "n",
    "x_norm",
    "eps_n",
    "res_y",
    "res_z",
    "res_S",
    "t_phase1_ms",
    "t_phase3_ms",
    "t_project_ms",
)
EXIT_OK = 0
EXIT_INVALID_CONFIG = 1
EXIT_SOLVER_FAILURE = 2
EXIT_VALIDATION_FAILURE = 3


class ConfigError(ValueError):
    """The config file is malformed or describes an inadmissible run."""


class DeterminismError(RuntimeError):
    """Benchmark rows disagree on iterates that must be identical."""


@dataclass(frozen=True)
class RunConfig:
    """Normalized run description; serializes losslessly to JSON."""

    problem: dict
    x0: tuple[float, ...]
    mode: str | None = None
    epsilon_variant: str | None = None
    schedule: dict | None = None
    stop: dict | None = None
    max_iter: int = 1000
    workers: int | None = None
    projection_tol: float = 1e-12
    projection_max_sweeps: int = 10_000
    record_history: bool = False
    seed: int = 0
    out: str | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        unknown = set(raw) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "problem" not in raw or not isinstance(raw["problem"], dict):
            raise ConfigError("config requires a 'problem' object")
        if "x0" not in raw:
            raise ConfigError("config requires the anchor 'x0'")
        x0 = raw["x0"]
        if isinstance(x0, (int, float)):
            x0 = [float(x0)]
        data = dict(raw)
        data["x0"] = tuple(float(v) for v in x0)
        try:
            cfg = cls(**data)
        except TypeError as err:
            raise ConfigError(str(err)) from err
        if cfg.max_iter < 0:
            raise ConfigError("max_iter must be nonnegative")
        if cfg.workers is not None and cfg.workers < 1:
            raise ConfigError("workers must be positive")
        return cfg

    def to_dict(self) -> dict:
        data = asdict(self)
        data["x0"] = list(self.x0)
        return data


def load_config(path: str | Path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from err
    return RunConfig.from_dict(raw)


def _build_base(spec: dict):
    kind = spec.get("kind")
    if kind == "box":
        return Box(lo=spec["lo"], hi=spec["hi"])
    if kind == "ball":
        return Ball(center=spec["center"], radius=float(spec["radius"]))
    raise ConfigError(f"unknown base-set kind {kind!r}")


def _build_bifunction(spec: dict):
    variant = spec.get("variant")
    if variant == "zero":
        return ZeroBifunction()
    if variant == "section4":
        return section4_bifunction(float(spec["xi"]))
    if variant == "scalar_monotone":
        profile = spec.get("profile", {})
        if profile.get("kind") != "affine":
            raise ConfigError("scalar_monotone profile supports kind 'affine'")
        slope = float(profile.get("slope", 1.0))
        shift = float(profile.get("shift", 0.0))
        if slope < 0:
            raise ConfigError("affine profile must be nondecreasing (slope >= 0)")
        return ScalarMonotoneBifunction(
            profile=lambda z: slope * z + shift,
            lo=float(spec["lo"]),
            hi=float(spec["hi"]),
        )
    raise ConfigError(f"unknown bifunction variant {variant!r}")


def _build_operator(spec: dict):
    variant = spec.get("variant")
    if variant == "zero":
        return zero_operator()
    if variant == "affine":
        return affine_operator(float(spec["gain"]), spec["root"])
    raise ConfigError(f"unknown operator variant {variant!r}")


def _build_map(spec: dict):
    variant = spec.get("variant")
    if variant == "identity":
        return identity_map()
    if variant == "section4":
        return section4_map(float(spec["c"]))
    raise ConfigError(f"unknown map variant {variant!r}")


def _build_solution(spec: dict | None):
    if spec is None:
        return None
    kind = spec.get("kind")
    if kind == "interval":
        return IntervalSolution(lo=float(spec["lo"]), hi=float(spec["hi"]))
    if kind == "point":
        return PointSolution(point=spec["value"])
    raise ConfigError(f"unknown solution kind {kind!r}")


def _sequence_fn(spec: dict, name: str):
    kind = spec.get("kind")
    if kind == "constant":
        value = float(spec["value"])
        return lambda n: value
    if kind == "inverse_offset":
        offset = float(spec.get("offset", 2.0))
        scale = float(spec.get("scale", 1.0))
        return lambda n: scale / (n + offset)
    raise ConfigError(f"schedule entry {name!r} has unknown kind {kind!r}")


def _apply_schedule_overrides(sched: ParamSchedule, overrides: dict) -> ParamSchedule:
    unknown = set(overrides) - {"alpha", "beta", "r", "k", "omega", "b", "d", "e"}
    if unknown:
        raise ConfigError(f"unknown schedule keys: {sorted(unknown)}")
    updates: dict[str, Any] = {}
    for name, field in (("alpha", "alpha_fn"), ("beta", "beta_fn"),
                        ("r", "r_fn"), ("k", "k_fn")):
        if name in overrides:
            updates[field] = _sequence_fn(overrides[name], name)
    for name in ("omega", "b", "d", "e"):
        if name in overrides:
            updates[name] = float(overrides[name])
    return replace(sched, **updates)


@dataclass(frozen=True)
class BuildResult:
    family: Any
    schedule: ParamSchedule
    solver_config: SolverConfig
    x0: np.ndarray
    reference: np.ndarray | None


def build_inputs(config: RunConfig, workers: int,
                 check_schedule: bool = True) -> BuildResult:
    """Turn a config into solver inputs; raises ConfigError on bad data.

    With ``check_schedule=False`` the admissibility conditions are left to
    the caller (the validate subcommand reports them instead of refusing to
    build).
    """
    problem = config.problem
    name = problem.get("preset")
    try:
        if name == "section4":
            family, sched, _ = build_section4(
                int(problem["N"]), int(problem["M"])
            )
            solver_cfg = SolverConfig(mode="algorithm2")
        elif name in ("cor1", "cor2", "cor3", "cor4", "cor5"):
            family, solver_cfg, sched = preset(
                name,
                base=_build_base(problem.get("base", {})),
                bifunctions=[_build_bifunction(s) for s in problem.get("bifunctions", [])],
                operators=[_build_operator(s) for s in problem.get("operators", [])],
                maps=[_build_map(s) for s in problem.get("maps", [])],
                known_solution=_build_solution(problem.get("known_solution")),
                omega=problem.get("omega"),
            )
        else:
            raise ConfigError(f"unknown problem preset {name!r}")
    except (KeyError, ValueError) as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(f"invalid problem description: {err}") from err

    if config.schedule:
        sched = _apply_schedule_overrides(sched, config.schedule)

    overrides: dict[str, Any] = {}
    if config.mode is not None:
        overrides["mode"] = config.mode
    if config.epsilon_variant is not None:
        overrides["epsilon_variant"] = config.epsilon_variant
    x0 = as_vector(list(config.x0))

    reference = None
    if family.known_solution is not None:
        reference = family.known_solution.project(x0)

    stop = None
    spec = config.stop or {"rule": "budget"}
    rule = spec.get("rule")
    if rule == "tol_to_reference":
        tol = 10.0 ** (-float(spec["l"])) if "l" in spec else float(spec["tol"])
        ref = spec.get("reference")
        ref_v = as_vector(ref) if ref is not None else reference
        if ref_v is None:
            raise ConfigError(
                "tol_to_reference needs a reference point or a problem "
                "with a known solution"
            )
        stop = ToleranceToReference(reference=ref_v, tol=tol)
    elif rule == "residual":
        stop = ResidualBelow(tol=float(spec["tol"]))
    elif rule != "budget":
        raise ConfigError(f"unknown stop rule {rule!r}")

    try:
        solver_cfg = replace(
            solver_cfg,
            stop=stop,
            max_iter=config.max_iter,
            projection_tol=config.projection_tol,
            projection_max_sweeps=config.projection_max_sweeps,
            workers=workers,
            record_history=config.record_history,
            **overrides,
        )
        solver_cfg.check_against(family)
    except ValueError as err:
        raise ConfigError(str(err)) from err
    if check_schedule:
        issues = sched.violations(family.kappa, family.alpha, max(config.max_iter, 1))
        if issues:
            raise ConfigError("inadmissible schedule: " + "; ".join(issues))
    return BuildResult(
        family=family, schedule=sched, solver_config=solver_cfg, x0=x0,
        reference=reference,
    )


def resolve_workers(flag: int | None, config: RunConfig) -> int:
    if flag is not None:
        return flag
    if config.workers is not None:
        return config.workers
    env = os.environ.get(WORKERS_ENV_VAR)
    if env:
        try:
            value = int(env)
        except ValueError as err:
            raise ConfigError(f"{WORKERS_ENV_VAR} must be an integer") from err
        if value < 1:
            raise ConfigError(f"{WORKERS_ENV_VAR} must be positive")
        return value
    return 1


def _summary(report: Report, reference: np.ndarray | None) -> dict:
    summary = {
        "final_x": report.final_x.tolist(),
        "iterations": report.iterations,
        "stop_reason": report.stop_reason,
        "wall_time_s": report.wall_time_s,
        "workers": report.workers,
    }
    if reference is not None:
        summary["reference_gap"] = float(
            np.linalg.norm(report.final_x - reference)
        )
    return summary


def _write_history_csv(path: Path, report: Report) -> None:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(HISTORY_COLUMNS)
        for rec in report.history:
            writer.writerow(
                [rec.n]
                + [
                    "%.17g" % value
                    for value in (
                        float(np.linalg.norm(rec.x_prev)),
                        rec.eps,
                        rec.res_y,
                        rec.res_z,
                        rec.res_s if rec.res_s is not None else math.nan,
                        rec.t_phase1_ms,
                        rec.t_phase3_ms,
                        rec.t_project_ms,
                    )
                ]
            )


def _emit_error(kind: str, detail: str) -> None:
    print(json.dumps({"error": kind, "detail": detail}), file=sys.stderr)


def run(config: RunConfig, *, workers: int | None = None,
        out: str | None = None, history: bool | None = None) -> int:
    """Execute one solve and write the summary (and optional history CSV)."""
    if history is not None:
        config = replace(config, record_history=history)
    try:
        worker_count = resolve_workers(workers, config)
        built = build_inputs(config, worker_count)
    except ConfigError as err:
        _emit_error("invalid-config", str(err))
        return EXIT_INVALID_CONFIG
    try:
        report = solve(built.family, built.schedule, built.solver_config, built.x0)
    except (ProjectionFailure, InfeasibleSetError, ValueError, RuntimeError) as err:
        _emit_error("solver-failure", str(err))
        return EXIT_SOLVER_FAILURE

    summary = _summary(report, built.reference)
    print(json.dumps(summary))
    out_dir = out if out is not None else config.out
    if out_dir:
        target = Path(out_dir)
        target.mkdir(parents=True, exist_ok=True)
        (target / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
        if built.solver_config.record_history:
            _write_history_csv(target / "history.csv", report)
    return EXIT_OK


def validate(config: RunConfig, *, samples: int = 200) -> int:
    """Run the model audits for the configured problem.

    Checks the schedule admissibility conditions, every member inequality
    via the family audit, and (when an analytic solution is attached)
    that sampled solution points are fixed by the resolvents and mappings.
    """
    try:
        worker_count = resolve_workers(None, config)
        built = build_inputs(config, worker_count, check_schedule=False)
    except ConfigError as err:
        _emit_error("invalid-config", str(err))
        return EXIT_INVALID_CONFIG

    family = built.family
    schedule_issues = built.schedule.violations(
        family.kappa, family.alpha, max(config.max_iter, 1)
    )
    report = verify_family(family, samples=samples, rng_seed=config.seed)
    failures = [asdict(e) for e in report.failures()]

    solution_gaps: list[float] = []
    if family.known_solution is not None:
        rng = np.random.default_rng(config.seed)
        r0 = built.schedule.r_fn(0)
        for _ in range(10):
            u = family.known_solution.project(family.base.sample(rng))
            for i in range(min(family.n_geps, 50)):
                f, A = family.geps[i]
                gap = float(
                    np.linalg.norm(resolvent(f, A, r0, u, family.base) - u)
                )
                solution_gaps.append(gap)
            for j in range(min(family.n_maps, 50)):
                gap = float(np.linalg.norm(family.maps[j](u) - u))
                solution_gaps.append(gap)
    solution_ok = all(g <= 1e-10 for g in solution_gaps)

    output = {
        "schedule_violations": schedule_issues,
        "members_checked": len(report.entries),
        "member_failures": failures,
        "solution_fixed_point_max_gap": max(solution_gaps, default=0.0),
        "passed": not schedule_issues and report.ok and solution_ok,
    }
    print(json.dumps(output))
    return EXIT_OK if output["passed"] else EXIT_VALIDATION_FAILURE


def _history_rows_match(a: Report, b: Report) -> bool:
    if len(a.history) != len(b.history):
        return False
    for ra, rb in zip(a.history, b.history):
        if ra.n != rb.n or ra.i_far != rb.i_far or ra.j_far != rb.j_far:
            return False
        for field in ("x_prev", "x_new", "y_far", "z_far"):
            if not np.array_equal(getattr(ra, field), getattr(rb, field)):
                return False
        for field in ("eps", "res_y", "res_z", "res_s"):
            if getattr(ra, field) != getattr(rb, field):
                return False
    return True


def bench(config: RunConfig, worker_list: Sequence[int],
          *, out: str | None = None) -> int:
    """Repeat the configured run per worker count and tabulate timings.

    Final iterates (and histories, when recorded) must be identical across
    rows; timing columns are measured, never compared.
    """
    worker_list = list(worker_list)
    if not worker_list:
        _emit_error("invalid-config", "bench needs a nonempty worker list")
        return EXIT_INVALID_CONFIG
    if any(w < 1 for w in worker_list):
        _emit_error("invalid-config", "worker counts must be positive")
        return EXIT_INVALID_CONFIG

    reports: list[Report] = []
    for w in worker_list:
        try:
            built = build_inputs(config, w)
        except ConfigError as err:
            _emit_error("invalid-config", str(err))
            return EXIT_INVALID_CONFIG
        try:
            reports.append(
                solve(built.family, built.schedule, built.solver_config, built.x0)
            )
        except (ProjectionFailure, InfeasibleSetError, ValueError, RuntimeError) as err:
            _emit_error("solver-failure", str(err))
            return EXIT_SOLVER_FAILURE

    head = reports[0]
    for other in reports[1:]:
        if not np.array_equal(head.final_x, other.final_x):
            _emit_error(
                "determinism-violation",
                f"final iterates differ between workers={head.workers} "
                f"and workers={other.workers}",
            )
            return EXIT_SOLVER_FAILURE
        if config.record_history and not _history_rows_match(head, other):
            _emit_error(
                "determinism-violation",
                f"histories differ between workers={head.workers} "
                f"and workers={other.workers}",
            )
            return EXIT_SOLVER_FAILURE

    rows = []
    for report in reports:
        rows.append(
            {
                "workers": report.workers,
                "iterations": report.iterations,
                "wall_time_s": report.wall_time_s,
                "t_phase1_ms": sum(r.t_phase1_ms for r in report.history),
                "t_phase3_ms": sum(r.t_phase3_ms for r in report.history),
                "t_project_ms": sum(r.t_project_ms for r in report.history),
                "speedup": reports[0].wall_time_s / report.wall_time_s,
            }
        )
    header = f"{'workers':>8} {'iters':>8} {'wall_s':>12} {'speedup':>9}"
    print(header)
    for row in rows:
        print(
            f"{row['workers']:>8} {row['iterations']:>8} "
            f"{row['wall_time_s']:>12.6f} {row['speedup']:>9.3f}"
        )
    if out:
        target = Path(out)
        target.mkdir(parents=True, exist_ok=True)
        with (target / "bench.csv").open("w", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    return EXIT_OK


def _parse_worker_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as err:
        raise ConfigError(f"bad worker list {text!r}") from err


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="hybridproj",
        description="Parallel hybrid-projection solver for common solutions "
        "of equilibrium and fixed-point problems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one configured solve")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--history", choices=("on", "off"), default=None)

    p_val = sub.add_parser("validate", help="audit the configured problem")
    p_val.add_argument("--config", required=True)
    p_val.add_argument("--samples", type=int, default=200)

    p_bench = sub.add_parser("bench", help="time the run across worker counts")
    p_bench.add_argument("--config", required=True)
    p_bench.add_argument("--workers-list", required=True)
    p_bench.add_argument("--out", default=None)

    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        if args.command == "run":
            history = None if args.history is None else args.history == "on"
            return run(config, workers=args.workers, out=args.out, history=history)
        if args.command == "validate":
            return validate(config, samples=args.samples)
        worker_list = _parse_worker_list(args.workers_list)
        return bench(config, worker_list, out=args.out)
    except ConfigError as err:
        _emit_error("invalid-config", str(err))
        return EXIT_INVALID_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
