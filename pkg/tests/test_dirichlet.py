import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mongeampere.checks import check_aleksandrov
from mongeampere.convex import ConvexFn, DiscreteMeasure, ma_measure
from mongeampere.dirichlet import (
    DirichletProblem,
    PreconditionError,
    aleksandrov_constant,
    cauchy_flag,
    power_residual,
    solve,
    solve_dirichlet,
    solve_dirichlet_singular,
    solve_power,
)
from mongeampere.geometry import Ball, Interval, Polygon, grid_mesh, interval_mesh, radial_mesh
from mongeampere.ledger import ConsistencyError, IterationLimitError
from mongeampere.measures import MeasureSpec, realize

from oracles_ode import first_integral_depth, shooting_depth

I = Interval(-1.0, 1.0)
DISK = Ball((0.0, 0.0), 1.0)


@pytest.fixture(scope="module")
def m801():
    return interval_mesh(I, 801)


def _atom(mesh, mass=2.0):
    atoms = np.zeros(mesh.n_nodes)
    atoms[np.argmin(np.abs(mesh.nodes))] = mass
    return DiscreteMeasure(mesh, atoms, np.zeros(mesh.n_cells))


def test_1d_atom_gives_cone():
    m = interval_mesh(I, 41)
    u = solve(m, _atom(m))
    np.testing.assert_allclose(u.values, np.abs(m.nodes) - 1, atol=1e-15)


def test_1d_boundary_data():
    m = interval_mesh(I, 41)
    rep = solve_dirichlet(DirichletProblem(m, _atom(m), phi=lambda x: 0.5 * x))
    np.testing.assert_allclose(rep.solution.values, np.abs(m.nodes) - 1 + 0.5 * m.nodes, atol=1e-14)


def test_radial_lebesgue():
    m = radial_mesh(2, 1.0, 200)
    rep = solve_dirichlet(DirichletProblem(m, realize(MeasureSpec.lebesgue(), m)))
    assert rep.residual < 1e-10
    np.testing.assert_allclose(rep.solution.values, (m.nodes**2 - 1) / 2, atol=1e-12)


def test_op2d_disk_accuracy():
    g = grid_mesh(DISK, 33)
    rep = solve_dirichlet(DirichletProblem(g, realize(MeasureSpec.lebesgue(), g)), tol=1e-11)
    assert rep.residual <= 1e-11
    err = np.max(np.abs(rep.solution.values - (np.sum(g.nodes**2, 1) - 1) / 2))
    assert err < 5e-3
    mu = ma_measure(rep.solution)
    assert mu.clipped == 0


def test_op2d_unique_from_other_start():
    g = grid_mesh(DISK, 17)
    nu = realize(MeasureSpec.lebesgue(), g)
    a = solve_dirichlet(DirichletProblem(g, nu), tol=1e-12).solution.values
    b = solve_dirichlet(DirichletProblem(g, nu), tol=1e-12, init_scale=0.5).solution.values
    assert np.max(np.abs(a - b)) < 1e-8


def test_op2d_iteration_limit():
    g = grid_mesh(DISK, 17)
    with pytest.raises(IterationLimitError) as exc:
        solve_dirichlet(DirichletProblem(g, realize(MeasureSpec.lebesgue(), g)), tol=1e-14, max_iter=1)
    assert exc.value.ledger is not None


def test_op2d_nonconvex_boundary_data():
    sq = grid_mesh(Polygon(((-1, -1), (1, -1), (1, 1), (-1, 1))), 9)
    with pytest.raises(PreconditionError):
        solve_dirichlet(DirichletProblem(sq, realize(MeasureSpec.lebesgue(), sq), phi=lambda p: -p[:, 0] ** 2))


def test_singular_lebesgue_matches_truncated_closed_form(m801):
    rep = solve_dirichlet_singular(m801, MeasureSpec.lebesgue(), m_schedule=[2, 4, 8, 16])
    gaps = rep.info["gaps"]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    # exact solution of u'' = 1 on |x| < c, u'' = 0 outside, c = 1 - 1/16
    c = 1 - 1 / 16
    x = m801.nodes
    exact = np.where(np.abs(x) <= c, x**2 / 2 + c * (c - 1) - c**2 / 2, c * (np.abs(x) - 1))
    assert np.max(np.abs(rep.solution.values - exact)) < 1e-12
    assert rep.info["estimate_holds"]


def test_singular_hardy_dichotomy():
    m = interval_mesh(I, 4001)
    sched = [2, 4, 8, 16, 32, 64, 128, 256]
    fin = solve_dirichlet_singular(m, MeasureSpec.hardy(1.5), m_schedule=sched)
    assert fin.info["cauchy"] and fin.info["estimate_holds"]
    g = fin.info["gaps"]
    assert all(b / a < 0.9 for a, b in zip(g[-3:], g[-2:]))
    with pytest.warns(RuntimeWarning):
        inf = solve_dirichlet_singular(m, MeasureSpec.hardy(2.0), m_schedule=sched)
    assert not inf.info["cauchy"]


def test_singular_schedule_must_increase(m801):
    with pytest.raises(ValueError):
        solve_dirichlet_singular(m801, MeasureSpec.lebesgue(), m_schedule=[4, 2])


def test_cauchy_flag():
    assert cauchy_flag([1.0, 0.5, 0.25])
    assert not cauchy_flag([0.25, 0.25, 0.25])
    assert cauchy_flag([1.0])


def test_power_half_matches_shooting(m801):
    assert shooting_depth(0.5) == pytest.approx(first_integral_depth(0.5), rel=1e-10)
    nu = realize(MeasureSpec.lebesgue(), m801)
    rep = solve_power(m801, nu, 0.5)
    assert power_residual(rep.solution, nu, 0.5) < 1e-8
    assert rep.solution.sup_norm() == pytest.approx(shooting_depth(0.5), abs=1e-6)


@pytest.mark.parametrize("p", [0.25, 0.5, 0.9])
def test_power_atom_closed_form(p):
    m = interval_mesh(I, 41)
    rep = solve_power(m, _atom(m), p)
    np.testing.assert_allclose(rep.solution.values, np.abs(m.nodes) - 1, atol=1e-9)


def test_power_small_p_continuity(m801):
    nu = realize(MeasureSpec.lebesgue(), m801)
    u0 = solve(m801, nu)
    up = solve_power(m801, nu, 1e-3).solution
    assert np.max(np.abs(up.values - u0.values)) < 2e-3


def test_power_rejects_bad_p_and_infinite_mass():
    m = interval_mesh(I, 401)
    with pytest.raises(ValueError):
        solve_power(m, realize(MeasureSpec.lebesgue(), m), 1.5)
    with pytest.raises(PreconditionError):
        solve_power(interval_mesh(I, 4001), MeasureSpec.hardy(2.0), 0.5)


@given(st.integers(0, 2**31))
def test_comparison_principle(seed):
    rng = np.random.default_rng(seed)
    m = interval_mesh(I, 65)
    nu1 = DiscreteMeasure(m, rng.exponential(size=65) * m.interior, rng.exponential(size=64))
    nu2 = DiscreteMeasure(m, nu1.atoms + rng.exponential(size=65) * m.interior * (rng.random(65) < 0.3), nu1.cells)
    u1, u2 = solve(m, nu1), solve(m, nu2)
    assert np.all(u1.values >= u2.values - 1e-9)


def test_comparison_principle_2d():
    rng = np.random.default_rng(3)
    g = grid_mesh(DISK, 13)
    base = realize(MeasureSpec.lebesgue(), g)
    extra = base.cells * (rng.random(g.n_cells) < 0.3)
    u1 = solve(g, base, tol=1e-12)
    u2 = solve(g, DiscreteMeasure(g, base.atoms, base.cells + extra), tol=1e-12)
    assert np.all(u1.values >= u2.values - 1e-9)


@pytest.mark.parametrize("mesh", [interval_mesh(I, 101), grid_mesh(DISK, 17)], ids=["1d", "2d"])
def test_solutions_satisfy_aleksandrov(mesh):
    u = solve(mesh, realize(MeasureSpec.lebesgue(), mesh), tol=1e-11)
    for i in np.nonzero(mesh.interior)[0][::7]:
        assert check_aleksandrov(u, mesh.nodes[i]).passed


def test_constants():
    assert aleksandrov_constant(1) == 1.0
    assert aleksandrov_constant(2) == 4.0
