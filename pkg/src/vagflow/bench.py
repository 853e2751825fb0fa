"""Configuration-driven runs and the built-in benchmark suite."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .assembly import DirichletBC, Discretization, Problem
from .config import RunConfig
from .diagnostics import (
    SUMMARY_COLUMNS,
    TABLE_COLUMNS,
    ErrorTriple,
    convergence_rates,
    error_norms,
    write_csv,
)
from .mesh import Mesh, generate_structured, read_mesh
from .physics import Potential, TensorField, analytical_solution, gibbs_state, make_model, test1_mass
from .solver import (
    REPORT_COLUMNS,
    NewtonConfig,
    SolveReport,
    TimeStepper,
    Trajectory,
    run_pressure_primary,
    run_transient,
)

__all__ = ["RunResult", "build_mesh", "run_config", "BENCHMARKS", "bench_config", "run_bench", "level_schedule"]


@dataclass(eq=False)
class RunResult:
    config: RunConfig
    problem: object
    trajectory: Trajectory
    report: SolveReport
    errors: ErrorTriple | None
    summary: dict
    entropy: list[tuple[float, float]] | None = None


def build_mesh(cfg: RunConfig) -> Mesh:
    if cfg.mesh_kind == "file":
        return read_mesh(cfg.mesh_file)
    return generate_structured(cfg.mesh_kind, cfg.mesh_n, cfg.mesh_distortion)


def _function(cfg: RunConfig, name: str, value: float) -> Callable[[np.ndarray, float], np.ndarray]:
    lx, ly, g = cfg.tensor_lx, cfg.tensor_ly, cfg.potential_g
    if name == "constant":
        return lambda x, t: np.full(len(np.atleast_2d(x)), value)
    return lambda x, t: analytical_solution(name, x, t, lx, ly, g)


def _steady_reference(cfg: RunConfig, model, potential):
    """Steady state used by the relative entropy, or None if unavailable."""
    try:
        if cfg.initial_function == "t1":
            return gibbs_state(model, potential, test1_mass(cfg.potential_g))
        return None
    except ValueError:
        return None


def run_config(cfg: RunConfig) -> RunResult:
    """Run one configuration (density unknown) and collect its diagnostics."""
    if cfg.problem == "drain_barrier":
        return _run_drain_barrier(cfg)
    mesh = build_mesh(cfg)
    model = make_model(cfg.model_name, dict(cfg.model_params))
    potential = Potential.gravity(cfg.potential_g) if cfg.potential_g else Potential()
    disc = Discretization(mesh, TensorField.diagonal(cfg.tensor_lx, cfg.tensor_ly, tags=np.unique(mesh.tags)), cfg.lumping)
    bc = None
    if cfg.bc_type == "dirichlet":
        bc = DirichletBC.on_sides(mesh, cfg.bc_sides, _function(cfg, cfg.bc_function, cfg.bc_value))
    problem = Problem(disc, model, potential, cfg.scheme, bc)

    if cfg.initial_function == "gibbs":
        w = gibbs_state(model, potential, cfg.initial_value * mesh.area)
        x0 = w(disc.points)
    else:
        x0 = _function(cfg, cfg.initial_function, cfg.initial_value)(disc.points, 0.0)
    if np.any(x0 < 0):
        raise ValueError("initial data must be nonnegative")

    ref_fn = _steady_reference(cfg, model, potential) if cfg.output_entropy else None
    reference = ref_fn(disc.points) if ref_fn is not None else None
    traj, report = run_transient(
        problem,
        x0,
        cfg.t_final,
        TimeStepper(cfg.dt_init, cfg.dt_max),
        NewtonConfig(cfg.newton_tol, cfg.newton_max_iter, cfg.newton_epsilon),
        output_times=cfg.output_times,
        stride=cfg.output_stride,
        reference=reference,
    )
    errors = None
    if cfg.exact != "none":
        exact = _function(cfg, cfg.exact, 0.0)
        errors = error_norms(traj.times, traj.states, traj.dts, exact, disc.points, disc.masses)
    summary = _summary(cfg, disc, report, errors)
    entropy = None
    if reference is not None:
        recs = ([report.initial] if report.initial else []) + report.steps
        entropy = [(r.t, r.rel_entropy) for r in recs]
    return RunResult(cfg, problem, traj, report, errors, summary, entropy)


def _summary(cfg: RunConfig, disc, report: SolveReport, errors: ErrorTriple | None) -> dict:
    if errors is None and cfg.t_final == 0:
        errors = ErrorTriple(0.0, 0.0, 0.0)
    nan = math.nan
    return {
        "h": float(disc.submesh.diameter.max()),
        "n_vertices": disc.nv,
        "dt_init": cfg.dt_init,
        "dt_max": cfg.dt_max,
        "err_l2": errors.l2 if errors else nan,
        "err_l1": errors.l1 if errors else nan,
        "err_linf": errors.linf if errors else nan,
        "u_min": report.u_min,
        "newton_total": report.newton_total,
    }


def _run_drain_barrier(cfg: RunConfig) -> RunResult:
    mesh = build_mesh(cfg)
    run = run_pressure_primary(
        mesh,
        cfg.t_final,
        TimeStepper(cfg.dt_init, cfg.dt_max),
        NewtonConfig(cfg.newton_tol, cfg.newton_max_iter, cfg.newton_epsilon),
        output_times=cfg.output_times,
        lumping=cfg.lumping,
    )
    summary = _summary(cfg, run.problem.disc, run.report, None)
    return RunResult(cfg, run.problem, run.trajectory, run.report, None, summary)


def write_run_outputs(result: RunResult, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    written = []
    if cfg.output_report:
        write_csv(out / "report.csv", REPORT_COLUMNS, result.report.rows())
        written.append(out / "report.csv")
    if cfg.output_summary:
        write_csv(out / "summary.csv", SUMMARY_COLUMNS, [[result.summary[k] for k in SUMMARY_COLUMNS]])
        written.append(out / "summary.csv")
    if result.entropy is not None:
        _write_dat(out / "entropy.dat", result.entropy)
        written.append(out / "entropy.dat")
    return written


def _write_dat(path: Path, pairs) -> None:
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("# t E\n")
        for t, e in pairs:
            fh.write("%.17g %.17g\n" % (t, e))
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# benchmark suite

_T1 = dict(model_name="fokker_planck_log", tensor_lx=1.0, tensor_ly=10.0, potential_g=1.0, initial_function="t1", exact="t1", t_final=0.25)


def _t2(model: str, two_d: bool) -> dict:
    fn = "t2_2d" if two_d else "t2_1d"
    lx, ly = (0.1, 10.0) if two_d else (1.0, 10.0)
    return dict(
        model_name=model, tensor_lx=lx, tensor_ly=ly, bc_type="dirichlet", bc_function=fn,
        initial_function=fn, exact=fn, t_final=0.25,
    )


_T3 = dict(
    model_name="pme_drift", tensor_lx=1.0, tensor_ly=100.0, potential_g=1.0, bc_type="dirichlet",
    bc_function="t3", initial_function="t3", exact="t3", t_final=0.25,
)

BENCHMARKS: dict[str, dict] = {
    "t1_nonlinear": _T1,
    "t1_linear": {**_T1, "scheme": "linear"},
    "t1_kershaw": {
        **_T1, "tensor_lx": 0.001, "tensor_ly": 1.0, "t_final": 250.0, "mesh_kind": "kershaw-like",
        "mesh_n": 17, "mesh_distortion": 0.6, "dt_init": 2e-4, "dt_max": 1.0, "output_entropy": True,
    },
    "t2a": _t2("pme_a", False),
    "t2b": _t2("pme_b", False),
    "t2c": _t2("pme_c", False),
    "t2a_2d": _t2("pme_a", True),
    "t2b_2d": _t2("pme_b", True),
    "t2c_2d": _t2("pme_c", True),
    "t3_nonlinear": _T3,
    "t3_quasilinear": {**_T3, "scheme": "quasilinear"},
    "t4": dict(
        problem="drain_barrier", mesh_kind="cartesian", mesh_n=16, t_final=1.0, dt_init=1e-3, dt_max=0.05,
        output_times=(0.05, 0.2),
    ),
}

T4_SNAPSHOTS = (0.05, 0.2, 1.0)


def level_schedule(level: int) -> tuple[int, float, float]:
    """(mesh n, dt_init, dt_max) of a refinement level: h halves, dt quarters."""
    return 4 * 2**level, 0.001 / 4**level, 0.01024 / 4**level


def bench_config(test: str, level: int = 0, **overrides) -> RunConfig:
    if test not in BENCHMARKS:
        raise ValueError(f"unknown benchmark {test!r}; choose from {sorted(BENCHMARKS)}")
    base = dict(BENCHMARKS[test])
    if test not in ("t1_kershaw", "t4"):
        n, dt0, dtm = level_schedule(level)
        base.update(mesh_kind="split-triangles", mesh_n=n, dt_init=dt0, dt_max=dtm)
    base.update(overrides)
    return RunConfig(**base)


def run_bench(test: str, levels: int, out: Path | None = None, **overrides) -> list[dict]:
    """Run a mesh family and return the convergence table rows (TABLE_COLUMNS)."""
    if test in ("t1_kershaw", "t4"):
        levels = 1
    if levels < 1:
        raise ValueError("levels must be >= 1")
    rows = []
    results = []
    if test == "t4":
        for kind in ("cartesian", "split-triangles"):
            cfg = bench_config(test, mesh_kind=kind, **overrides)
            res = run_config(cfg)
            results.append(res)
            rows.append(dict(res.summary))
    else:
        for k in range(levels):
            res = run_config(bench_config(test, k, **overrides))
            results.append(res)
            rows.append(dict(res.summary))
    for name in ("l2", "l1", "linf"):
        errs = [r[f"err_{name}"] for r in rows]
        rates = [math.nan] + convergence_rates(errs, [r["h"] for r in rows]) if len(rows) > 1 and test != "t4" else [math.nan] * len(rows)
        for r, rate in zip(rows, rates):
            r[f"rate_{name}"] = rate
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / f"{test}.csv", TABLE_COLUMNS, [[r[c] for c in TABLE_COLUMNS] for r in rows])
        for i, res in enumerate(results):
            write_csv(out / f"{test}_report_{i}.csv", REPORT_COLUMNS, res.report.rows())
        if test == "t1_kershaw" and results[0].entropy is not None:
            _write_dat(out / "entropy.dat", results[0].entropy)
        if test == "t4":
            for res in results:
                for t in T4_SNAPSHOTS:
                    _write_t4_snapshot(out / f"t4_{res.config.mesh_kind}_t{t:g}.csv", res, t)
    return rows


def _write_t4_snapshot(path: Path, res: RunResult, t: float) -> None:
    problem = res.problem
    disc = problem.disc
    p = res.trajectory.at(t)
    uc, ucv = problem.derived_density(p)
    mesh = disc.mesh
    # vertex density: mass-weighted mean of the neighbouring cells' inverses
    mcv = disc.lumped.m_cell_vertex
    uv = np.bincount(mesh.cv_vertex, weights=mcv * ucv, minlength=disc.nv) / np.bincount(
        mesh.cv_vertex, weights=mcv, minlength=disc.nv
    )
    pts = disc.points
    kinds = ["vertex"] * disc.nv + ["cell"] * disc.nc
    u = np.concatenate([uv, uc])
    rows = [(kinds[i], pts[i, 0], pts[i, 1], p[i], u[i]) for i in range(len(p))]
    write_csv(path, ("site", "x", "y", "p", "u"), rows)
