"""Newton iterations with static condensation of the cell unknowns, and
adaptive implicit Euler time stepping."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .assembly import DirichletBC, Discretization, FluxScheme, JacobianBlocks, JacobianError, PressureProblem, Problem, tag_cells
from .mesh import Mesh
from .physics import HeteroModel

log = logging.getLogger(__name__)

__all__ = [
    "NewtonConfig",
    "TimeStepper",
    "NewtonFailure",
    "SchurSolveError",
    "SimulationAborted",
    "NewtonResult",
    "StepRecord",
    "SolveReport",
    "Trajectory",
    "schur_solve",
    "newton_solve",
    "advance",
    "run_transient",
    "run_pressure_primary",
    "barrier_region",
]


@dataclass(frozen=True)
class NewtonConfig:
    tol_inc: float = 1e-10
    max_iter: int = 30
    clamp_floor: float = 1e-10

    def __post_init__(self):
        if not self.tol_inc > 0:
            raise ValueError("tol_inc must be positive")
        if not 0 < self.clamp_floor < 1:
            raise ValueError("clamp_floor must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True)
class TimeStepper:
    dt_init: float
    dt_max: float
    growth: float = 2.0
    shrink: float = 0.5
    max_failures: int = 20

    def __post_init__(self):
        if not 0 < self.dt_init <= self.dt_max:
            raise ValueError("need 0 < dt_init <= dt_max")
        if not self.growth > 1 > self.shrink > 0:
            raise ValueError("need growth > 1 > shrink > 0")


class SchurSolveError(ArithmeticError):
    def __init__(self, message: str, cond: float = math.inf):
        super().__init__(f"{message} (condition estimate {cond:.3g})")
        self.cond = cond


class NewtonFailure(RuntimeError):
    def __init__(self, message: str, iters: int = 0):
        super().__init__(message)
        self.iters = iters


class SimulationAborted(RuntimeError):
    def __init__(self, message: str, report: "SolveReport | None" = None):
        super().__init__(message)
        self.report = report


def schur_solve(blocks: JacobianBlocks) -> np.ndarray:
    """Solve the block system by eliminating the diagonal cell block.

    Returns the increment with vertex entries first.
    """
    D = np.asarray(blocks.D, dtype=float)
    if not np.all(np.isfinite(D)) or np.any(D == 0):
        raise SchurSolveError("cell block is singular")
    Dinv = 1.0 / D
    S = (blocks.A - blocks.B @ sp.diags(Dinv) @ blocks.C).tocsc()
    r = blocks.b1 - blocks.B @ (Dinv * blocks.b2)
    try:
        lu = splu(S, permc_spec="COLAMD")
        dv = lu.solve(r)
    except RuntimeError as exc:
        raise SchurSolveError(f"vertex system is singular: {exc}", _cond_estimate(S)) from None
    if not np.all(np.isfinite(dv)):
        raise SchurSolveError("vertex system is singular", _cond_estimate(S))
    dc = Dinv * (blocks.b2 - blocks.C @ dv)
    return np.concatenate([dv, dc])


def _cond_estimate(S) -> float:
    if S.shape[0] > 2000:
        return math.inf
    with np.errstate(all="ignore"):
        return float(np.linalg.cond(S.toarray()))


@dataclass(frozen=True, eq=False)
class NewtonResult:
    x: np.ndarray
    iters: int
    residual_inf: float
    increment_inf: float


def newton_solve(problem, x_prev, dt: float, t: float, cfg: NewtonConfig = NewtonConfig()) -> NewtonResult:
    """One implicit Euler step ending at time ``t``.

    For singular pressures the iterates are clamped from below by
    ``cfg.clamp_floor``.  Converges when the L-infinity norm of the change
    between iterates drops below ``cfg.tol_inc``; affine schemes stop after
    one exact solve.
    """
    floor = problem.clamp_floor(cfg.clamp_floor)
    x_prev = np.asarray(x_prev, dtype=float)
    x = x_prev.copy() if floor is None else np.maximum(x_prev, floor)
    x = problem.impose(x, t, floor)
    for it in range(1, cfg.max_iter + 1):
        try:
            blocks = problem.jacobian(x, x_prev, dt, t)
            delta = schur_solve(blocks)
        except (JacobianError, SchurSolveError, ValueError, FloatingPointError) as exc:
            raise NewtonFailure(f"linearization failed at iteration {it}: {exc}", it) from exc
        x_new = x + delta
        if floor is not None:
            x_new = np.maximum(x_new, floor)
        if not np.all(np.isfinite(x_new)):
            raise NewtonFailure(f"non-finite iterate at iteration {it}", it)
        inc = float(np.max(np.abs(x_new - x))) if x.size else 0.0
        x = x_new
        if inc <= cfg.tol_inc or problem.affine:
            res = float(np.max(np.abs(problem.residual(x, x_prev, dt, t))))
            return NewtonResult(x, it, res, inc)
    raise NewtonFailure(f"no convergence after {cfg.max_iter} iterations", cfg.max_iter)


Solve = Callable[..., NewtonResult]


def advance(
    problem,
    x_prev,
    t: float,
    dt: float,
    stepper: TimeStepper,
    t_stop: float,
    cfg: NewtonConfig = NewtonConfig(),
    solve: Solve = newton_solve,
):
    """Take one accepted step from ``t`` toward ``t_stop``.

    Returns ``(result, dt_used, dt_next, failures)``.  A failed Newton solve
    shrinks the step and retries; too many consecutive failures abort.
    """
    failures = 0
    while True:
        dt_used = min(stepper.dt_max, t_stop - t, dt)
        # land exactly on t_stop when the remainder is tiny
        t_new = t_stop if t_stop - (t + dt_used) <= 1e-12 * max(1.0, abs(t_stop)) else t + dt_used
        dt_used = t_new - t
        try:
            result = solve(problem, x_prev, dt_used, t_new, cfg)
        except NewtonFailure as exc:
            failures += 1
            log.info("step at t=%.6g with dt=%.3g failed: %s", t, dt_used, exc)
            if failures > stepper.max_failures:
                raise SimulationAborted(f"{failures} consecutive failures at t={t:.6g}: {exc}") from exc
            dt = dt_used * stepper.shrink
            continue
        dt_next = min(dt * stepper.growth, stepper.dt_max)
        return result, dt_used, dt_next, failures


@dataclass(frozen=True)
class StepRecord:
    t: float
    dt: float
    newton_iters: int
    energy: float
    dissipation: float
    mass: float
    u_min: float
    residual: float
    rel_entropy: float = math.nan
    energy_ok: bool = True


REPORT_COLUMNS = ("t", "dt", "newton_iters", "E_D", "dissipation", "mass", "u_min")


@dataclass
class SolveReport:
    steps: list[StepRecord] = field(default_factory=list)
    failures: int = 0
    initial: StepRecord | None = None

    @property
    def newton_total(self) -> int:
        return sum(s.newton_iters for s in self.steps)

    @property
    def u_min(self) -> float:
        """Smallest density over the accepted steps (initial data excluded)."""
        if not self.steps:
            return self.initial.u_min if self.initial else math.nan
        return float(min(s.u_min for s in self.steps))

    def rows(self) -> list[tuple]:
        recs = ([self.initial] if self.initial else []) + self.steps
        return [(r.t, r.dt, r.newton_iters, r.energy, r.dissipation, r.mass, r.u_min) for r in recs]


@dataclass
class Trajectory:
    times: list[float] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    dts: list[float] = field(default_factory=list)

    def append(self, t: float, x: np.ndarray, dt: float) -> None:
        self.times.append(float(t))
        self.states.append(np.array(x, dtype=float))
        self.dts.append(float(dt))

    def __len__(self) -> int:
        return len(self.times)

    def at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        if abs(self.times[i] - t) > 1e-12 * max(1.0, abs(t)):
            raise KeyError(f"no stored state at t={t}")
        return self.states[i]


def _density(problem, x) -> np.ndarray:
    if isinstance(problem, PressureProblem):
        uc, ucv = problem.derived_density(x)
        return np.concatenate([ucv, uc])
    return np.asarray(x)


def _record(problem, x, t, dt, iters, residual, reference) -> StepRecord:
    from .assembly import relative_entropy

    if isinstance(problem, Problem):
        energy, diss = problem.energy(x), problem.dissipation(x)
        rel = relative_entropy(x, reference, problem.disc.masses) if reference is not None else math.nan
    else:
        energy = diss = rel = math.nan
    return StepRecord(
        t=float(t),
        dt=float(dt),
        newton_iters=int(iters),
        energy=float(energy),
        dissipation=float(diss),
        mass=problem.mass(x),
        u_min=float(_density(problem, x).min()),
        residual=float(residual),
        rel_entropy=float(rel),
    )


def run_transient(
    problem,
    x0,
    t_final: float,
    stepper: TimeStepper,
    cfg: NewtonConfig = NewtonConfig(),
    output_times: Sequence[float] = (),
    stride: int = 1,
    reference: np.ndarray | None = None,
    solve: Solve = newton_solve,
):
    """March from ``x0`` at t=0 to ``t_final``.

    Every ``stride``-th accepted state is stored, plus the initial state, the
    final state and the states at ``output_times`` (steps are shortened to
    land on them).  ``reference`` holds steady-state samples for the
    relative entropy column.  For no-flux problems with the nonlinear scheme
    each step is checked against the discrete energy-dissipation inequality.
    """
    x = x0.to_array() if hasattr(x0, "to_array") else np.asarray(x0, dtype=float)
    report = SolveReport()
    traj = Trajectory()
    report.initial = _record(problem, x, 0.0, 0.0, 0, math.nan, reference)
    traj.append(0.0, x, 0.0)
    if t_final <= 0:
        return traj, report

    stops = sorted({float(s) for s in output_times if 0 < s < t_final} | {float(t_final)})
    # the inequality is a property of the nonlinear scheme only
    check_energy = isinstance(problem, Problem) and problem.bc is None and problem.scheme is FluxScheme.NONLINEAR
    prev = report.initial
    t, dt, n = 0.0, stepper.dt_init, 0
    for stop in stops:
        while t < stop:
            try:
                result, dt_used, dt, fails = advance(problem, x, t, dt, stepper, stop, cfg, solve)
            except SimulationAborted as exc:
                exc.report = report
                raise
            report.failures += fails
            t = stop if abs(stop - (t + dt_used)) <= 1e-12 * max(1.0, stop) else t + dt_used
            x = result.x
            n += 1
            rec = _record(problem, x, t, dt_used, result.iters, result.residual_inf, reference)
            if check_energy:
                ok = rec.energy + dt_used * rec.dissipation <= prev.energy + 1e-9 * (1 + abs(prev.energy))
                if not ok:
                    log.warning("energy inequality violated at t=%.6g", t)
                rec = StepRecord(**{**rec.__dict__, "energy_ok": ok})
            report.steps.append(rec)
            prev = rec
            if n % stride == 0 or t == stop:
                if traj.times[-1] != t:
                    traj.append(t, x, dt_used)
    return traj, report


# ---------------------------------------------------------------------------
# heterogeneous drain/barrier problem with the pressure as unknown


def barrier_region(x) -> np.ndarray:
    """Subdomain tag of points: 2 in the barrier layers, 1 in the drain."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    X, Y = x[:, 0], x[:, 1]
    barrier = (Y > 0.75) | ((Y > 0.375) & (Y < 0.5) & (X > 0.25))
    return np.where(barrier, 2, 1)


@dataclass
class PressureRun:
    problem: PressureProblem
    trajectory: Trajectory
    report: SolveReport
    initial_residual: float


def run_pressure_primary(
    mesh: Mesh,
    t_final: float,
    stepper: TimeStepper,
    cfg: NewtonConfig = NewtonConfig(),
    output_times: Sequence[float] = (),
    p_top: float = -4.0,
    p_bottom: float = 0.0,
    lumping: float = 0.1,
    region: Callable = barrier_region,
) -> PressureRun:
    """Drain/barrier infiltration with the pressure as unknown.

    Starts from the uniform equilibrium ``p = p_top`` (checked to have a
    zero residual with matching boundary data) and then switches the bottom
    boundary to ``p_bottom``.  Lateral sides are no-flux.
    """
    mesh = tag_cells(mesh, region)
    hetero = HeteroModel.drain_barrier()
    disc = Discretization(mesh, hetero.tensor, lumping)
    top = mesh.boundary_side("top")
    bottom = np.setdiff1d(mesh.boundary_side("bottom"), top)
    idx = np.concatenate([top, bottom])

    def data(pb):
        vals = np.concatenate([np.full(top.size, p_top), np.full(bottom.size, pb)])
        return lambda pts, t: vals

    p0 = np.full(mesh.n_dofs, p_top)
    eq = PressureProblem(disc, hetero, DirichletBC(idx, data(p_top)))
    init_res = float(np.max(np.abs(eq.residual(p0, p0, stepper.dt_init, 0.0))))
    problem = PressureProblem(disc, hetero, DirichletBC(idx, data(p_bottom)))
    traj, report = run_transient(problem, p0, t_final, stepper, cfg, output_times)
    return PressureRun(problem, traj, report, init_res)
