import math

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.optimize import fsolve

from vagflow.assembly import Discretization, JacobianBlocks, Problem
from vagflow.mesh import generate_structured
from vagflow.physics import Potential, TensorField, analytical_solution, gibbs_state, make_model
from vagflow.physics import test1_mass as steady_mass
from vagflow.solver import (
    NewtonConfig,
    NewtonFailure,
    NewtonResult,
    SchurSolveError,
    SimulationAborted,
    TimeStepper,
    advance,
    newton_solve,
    run_pressure_primary,
    run_transient,
    schur_solve,
)

ISO = TensorField.diagonal(1.0, 1.0)


def _blocks(A, B, C, D, b1, b2):
    return JacobianBlocks(sp.csr_matrix(A), sp.csr_matrix(B), sp.csr_matrix(C), np.asarray(D, float), np.asarray(b1, float), np.asarray(b2, float))


def test_schur_decoupled_system():
    A = np.diag([2.0, 4.0])
    x = schur_solve(_blocks(A, np.zeros((2, 3)), np.zeros((3, 2)), [1.0, 2.0, 5.0], [2.0, 4.0], [1.0, 1.0, 1.0]))
    np.testing.assert_allclose(x, [1.0, 1.0, 1.0, 0.5, 0.2])


@pytest.mark.parametrize("seed", range(5))
def test_schur_matches_dense_solve(seed):
    rng = np.random.default_rng(seed)
    nv, nc = 7, 5
    A = rng.normal(size=(nv, nv)) + 8 * np.eye(nv)
    B = rng.normal(size=(nv, nc))
    C = rng.normal(size=(nc, nv))
    D = rng.uniform(4, 6, nc)
    b1, b2 = rng.normal(size=nv), rng.normal(size=nc)
    full = np.block([[A, B], [C, np.diag(D)]])
    expected = np.linalg.solve(full, np.concatenate([b1, b2]))
    np.testing.assert_allclose(schur_solve(_blocks(A, B, C, D, b1, b2)), expected, rtol=1e-11, atol=1e-12)


def test_schur_rejects_singular_systems():
    with pytest.raises(SchurSolveError):
        schur_solve(_blocks(np.eye(2), np.zeros((2, 1)), np.zeros((1, 2)), [0.0], [1, 1], [1]))
    with pytest.raises(SchurSolveError) as info:
        schur_solve(_blocks(np.ones((2, 2)), np.zeros((2, 1)), np.zeros((1, 2)), [1.0], [1, 1], [1]))
    assert info.value.cond > 1e12


def _t1_problem(n=4, scheme="nonlinear"):
    mesh = generate_structured("split-triangles", n)
    disc = Discretization(mesh, TensorField.diagonal(1, 10))
    return Problem(disc, make_model("fokker_planck_log"), Potential.gravity(1.0), scheme)


def test_newton_at_equilibrium_converges_immediately():
    P = _t1_problem()
    w = gibbs_state(P.model, P.potential, steady_mass(1.0))(P.disc.points)
    res = newton_solve(P, w, 0.01, 0.01)
    assert res.iters <= 2
    np.testing.assert_allclose(res.x, w, rtol=1e-12)


def test_linear_scheme_without_potential_takes_one_iteration():
    mesh = generate_structured("split-triangles", 4)
    P = Problem(Discretization(mesh, ISO), make_model("fokker_planck_log"), scheme="linear")
    u0 = np.random.default_rng(0).uniform(0.5, 2, mesh.n_dofs)
    res = newton_solve(P, u0, 0.01, 0.01)
    assert res.iters == 1
    assert res.residual_inf < 1e-12


def _single_square_residual(z, zold, dt):
    # hand transcription: A = I, cell mass 0.9, vertex masses 0.025, no potential
    uc, uv = z[0], z[1:]
    F = 0.5 * (uc + uv) * (math.log(uc) - np.log(uv))
    rv = 0.025 * (uv - zold[1:]) / dt - F
    rc = 0.9 * (uc - zold[0]) / dt + F.sum()
    return np.concatenate([[rc], rv])


def test_single_square_step_matches_root_finder(unit_square):
    P = Problem(Discretization(unit_square, ISO), make_model("fokker_planck_log"))
    dt = 1e-3
    old_center_first = np.array([1.0, 2.0, 1.0, 1.0, 1.0])
    ref = fsolve(_single_square_residual, old_center_first, args=(old_center_first, dt), xtol=1e-13)
    old = np.r_[old_center_first[1:], old_center_first[0]]  # vertices first
    res = newton_solve(P, old, dt, dt)
    np.testing.assert_allclose(res.x, np.r_[ref[1:], ref[0]], rtol=1e-10)
    assert np.dot(P.disc.masses, res.x) == pytest.approx(np.dot(P.disc.masses, old), rel=1e-14)


def _fake_solve(fail_first=0):
    calls = {"n": 0, "dts": []}

    def solve(problem, x_prev, dt, t, cfg):
        calls["n"] += 1
        calls["dts"].append(dt)
        if calls["n"] <= fail_first:
            raise NewtonFailure("injected", 1)
        return NewtonResult(np.asarray(x_prev), 1, 0.0, 0.0)

    return solve, calls


def test_step_size_growth_and_cap():
    solve, calls = _fake_solve()
    st = TimeStepper(1e-3, 1.024e-2)
    t, dt, used = 0.0, st.dt_init, []
    for _ in range(7):
        _, dt_used, dt, _ = advance(None, np.zeros(1), t, dt, st, 10.0, solve=solve)
        t += dt_used
        used.append(dt_used)
    np.testing.assert_allclose(used, [1e-3, 2e-3, 4e-3, 8e-3, 1.024e-2, 1.024e-2, 1.024e-2], rtol=1e-15)


def test_failure_halves_the_step():
    solve, calls = _fake_solve(fail_first=1)
    _, dt_used, dt_next, fails = advance(None, np.zeros(1), 0.0, 1e-3, TimeStepper(1e-3, 1e-2), 1.0, solve=solve)
    assert fails == 1
    assert calls["dts"] == [1e-3, 5e-4]
    assert dt_used == 5e-4 and dt_next == 1e-3


def test_step_truncated_at_stop_time():
    solve, _ = _fake_solve()
    _, dt_used, _, _ = advance(None, np.zeros(1), 0.995, 1e-2, TimeStepper(1e-3, 1e-2), 1.0, solve=solve)
    assert 0.995 + dt_used == 1.0


def test_abort_after_too_many_failures():
    solve, calls = _fake_solve(fail_first=10**6)
    with pytest.raises(SimulationAborted):
        advance(None, np.zeros(1), 0.0, 1e-3, TimeStepper(1e-3, 1e-2, max_failures=3), 1.0, solve=solve)
    assert calls["n"] == 4


def test_abort_carries_the_partial_report():
    P = _t1_problem()
    x0 = np.ones(P.disc.nv + P.disc.nc)
    with pytest.raises(SimulationAborted) as info:
        run_transient(P, x0, 0.1, TimeStepper(1e-3, 1e-2, max_failures=2), NewtonConfig(max_iter=1))
    assert info.value.report is not None


@pytest.mark.parametrize("bad", [dict(dt_init=0.0, dt_max=1.0), dict(dt_init=1.0, dt_max=0.5), dict(dt_init=1e-3, dt_max=1.0, shrink=1.0)])
def test_stepper_validation(bad):
    with pytest.raises(ValueError):
        TimeStepper(**bad)


def test_zero_final_time_returns_initial_state():
    P = _t1_problem()
    x0 = analytical_solution("t1", P.disc.points, 0.0, 1, 10, 1)
    traj, report = run_transient(P, x0, 0.0, TimeStepper(1e-3, 1e-2))
    assert traj.times == [0.0] and not report.steps
    np.testing.assert_array_equal(traj.states[0], x0)


def test_transient_run_is_deterministic_and_conservative():
    P = _t1_problem()
    x0 = analytical_solution("t1", P.disc.points, 0.0, 1, 10, 1)
    a, ra = run_transient(P, x0, 0.05, TimeStepper(1e-3, 1e-2))
    b, rb = run_transient(P, x0, 0.05, TimeStepper(1e-3, 1e-2))
    assert a.times == b.times
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a.states, b.states))
    m0 = np.dot(P.disc.masses, x0)
    assert all(abs(s.mass - m0) < 1e-13 for s in ra.steps)
    assert all(s.energy_ok for s in ra.steps)
    assert a.times[-1] == 0.05


def test_output_times_are_hit_exactly():
    P = _t1_problem()
    x0 = analytical_solution("t1", P.disc.points, 0.0, 1, 10, 1)
    traj, _ = run_transient(P, x0, 0.1, TimeStepper(1e-3, 3e-2), output_times=(0.0123, 0.05), stride=1000)
    assert traj.times == [0.0, 0.0123, 0.05, 0.1]


def test_clamp_inactive_for_positive_iterates():
    mesh = generate_structured("split-triangles", 4)
    disc = Discretization(mesh, ISO)
    P = Problem(disc, make_model("pme_a"), Potential.gravity(1.0))
    x0 = 1.0 + 0.5 * disc.points[:, 0]
    a = newton_solve(P, x0, 0.01, 0.01, NewtonConfig(clamp_floor=1e-10))
    b = newton_solve(P, x0, 0.01, 0.01, NewtonConfig(clamp_floor=1e-14))
    assert a.x.tobytes() == b.x.tobytes()
    assert P.clamp_floor(1e-10) == 1e-10
    assert Problem(disc, make_model("pme_b")).clamp_floor(1e-10) is None
    assert Problem(disc, make_model("fokker_planck_log"), scheme="linear").clamp_floor(1e-10) is None


def test_pressure_primary_starts_from_equilibrium():
    run = run_pressure_primary(generate_structured("cartesian", 8), 0.02, TimeStepper(1e-3, 0.01))
    assert run.initial_residual == 0.0
    p = run.trajectory.states[-1]
    assert np.all(np.isfinite(p))
    # the pressure itself may undershoot slightly (no discrete maximum principle),
    # the derived density stays in (0, 1]
    uc, ucv = run.problem.derived_density(p)
    assert uc.min() > 0 and ucv.min() > 0
    assert uc.max() <= 1 + 1e-12 and ucv.max() <= 1 + 1e-12
