import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mongeampere.convex import (
    ConvexFn,
    ConvexityError,
    ContractError,
    DiscreteMeasure,
    ShapeError,
    canonical_approximation,
    cone,
    convex_envelope,
    energy,
    is_convex,
    lipschitz_decompose,
    ma_measure,
    mixed_energy,
    mixed_ma_measure,
    quadratic,
)
from mongeampere.geometry import Ball, Interval, Polygon, grid_mesh, interval_mesh, radial_mesh

DISK = Ball((0.0, 0.0), 1.0)


@pytest.fixture(scope="module")
def disk33():
    return grid_mesh(DISK, 33)


@pytest.fixture(scope="module")
def disk13():
    from mongeampere.checks import _disk_mesh

    return _disk_mesh(13)


def test_ma_1d_abs():
    m = interval_mesh(Interval(-1, 1), nodes=[-1, 0, 1])
    mu = ma_measure(ConvexFn(m, [1.0, 0.0, 1.0]))
    assert mu.atoms.tolist() == [0.0, 2.0, 0.0]


def test_ma_1d_nonconvex_raises_with_nodes():
    m = interval_mesh(Interval(-1, 1), nodes=[-1, -0.5, 0, 0.5, 1])
    with pytest.raises(ConvexityError) as exc:
        ma_measure(ConvexFn(m, [0, -1, -0.2, -1, 0]))
    assert exc.value.nodes is not None


def test_ma_2d_cone_total_pi(disk33):
    # the gradient image of the PL cone circumscribes the unit disk; first-order in h
    errs = []
    for mesh in (grid_mesh(DISK, 17), disk33, grid_mesh(DISK, 65)):
        mu = ma_measure(cone(mesh))
        assert mu.clipped == 0
        assert mu.total >= math.pi
        errs.append(mu.total / math.pi - 1)
    assert errs[1] < 5e-3 and errs[2] < errs[1] < errs[0]


def test_ma_radial_quadratic():
    m = radial_mesh(2, 1.0, 100)
    u = ConvexFn(m, (m.nodes**2 - 1) / 2, m.nodes)
    mu = ma_measure(u)
    assert mu.total == pytest.approx(math.pi, rel=1e-12)
    np.testing.assert_allclose(mu.cells, m.cell_volumes, rtol=1e-12)
    assert mu.atoms[0] == 0.0


def test_ma_radial_cone_origin_atom():
    m = radial_mesh(2, 1.0, 100)
    u = ConvexFn(m, m.nodes - 1, np.ones(m.n_nodes))
    mu = ma_measure(u)
    assert mu.atoms[0] == pytest.approx(math.pi)
    assert np.allclose(mu.cells, 0)


def test_mixed_equal_arguments(disk33):
    q = quadratic(disk33)
    np.testing.assert_allclose(mixed_ma_measure([q, q]).atoms, ma_measure(q).atoms, atol=1e-12)


def test_mixed_affine_slot_has_no_interior_mass(disk33):
    q = quadratic(disk33)
    aff = ConvexFn(disk33, 0.3 * disk33.nodes[:, 0] - 0.1 * disk33.nodes[:, 1])
    mm = mixed_ma_measure([q, aff])
    assert np.max(np.abs(mm.atoms[disk33.interior])) < 1e-12


def test_mixed_annulus_mass(disk33):
    m = grid_mesh(DISK, 65)
    mm = mixed_ma_measure([quadratic(m), ConvexFn(m, np.linalg.norm(m.nodes, axis=1))])
    r = np.linalg.norm(m.nodes, axis=1)
    assert mm.atoms[(r >= 0.5) & (r <= 1)].sum() == pytest.approx(math.pi / 2, rel=0.03)


def test_mixed_mesh_mismatch():
    a = cone(interval_mesh(Interval(-1, 1), 5))
    b = cone(interval_mesh(Interval(-1, 1), 7))
    with pytest.raises(ShapeError):
        mixed_energy(a, [b])


def _strict_pl(mesh, rng):
    """Positive combination of the whole extreme pool: strictly bent along (almost) every edge."""
    from mongeampere.checks import triangulation_extremes

    pool = np.array(triangulation_extremes(mesh))
    vals = rng.uniform(0.5, 1.0, len(pool)) @ pool
    vals[mesh.boundary] = 0.0
    return ConvexFn(mesh, vals)


@pytest.mark.parametrize("alpha,beta", [(0.5, 2.0), (1.0, 1.0), (3.0, 0.25)])
def test_mixed_multilinear(disk13, alpha, beta):
    rng = np.random.default_rng(11)
    v1, v2, w = (_strict_pl(disk13, rng) for _ in range(3))
    lhs = mixed_ma_measure([w, v1.scaled(alpha) + v2.scaled(beta)]).atoms
    rhs = alpha * mixed_ma_measure([w, v1]).atoms + beta * mixed_ma_measure([w, v2]).atoms
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * np.max(np.abs(rhs))


def test_energy_examples(disk33):
    m = interval_mesh(Interval(-1, 1), 3)
    assert energy(cone(m)) == 2.0
    assert energy(cone(m).scaled(2.0)) == 8.0
    assert energy(cone(disk33)) == pytest.approx(math.pi, rel=1e-3)


def test_energy_requires_zero_boundary():
    m = interval_mesh(Interval(-1, 1), 5)
    with pytest.raises(ContractError):
        energy(ConvexFn(m, np.full(5, -1.0)))


def test_mixed_energy_examples(disk33):
    c, q = cone(disk33), quadratic(disk33)
    assert mixed_energy(q, [q, q]) == pytest.approx(energy(q), rel=1e-12)
    # int (1 - |x|) dx over the disk = pi/3; discretization of the grid
    assert mixed_energy(c, [q, q]) == pytest.approx(math.pi / 3, rel=2e-2)


def test_mixed_energy_symmetry(disk13):
    rng = np.random.default_rng(12)
    a, b, c = (_strict_pl(disk13, rng) for _ in range(3))
    assert mixed_energy(a, [b, c]) == pytest.approx(mixed_energy(c, [b, a]), rel=1e-9)


def test_envelope_examples():
    m = interval_mesh(Interval(-1, 1), nodes=[-1, 0, 1])
    assert convex_envelope([0.0, 1.0, 0.0], m).values.tolist() == [0.0, 0.0, 0.0]
    m = interval_mesh(Interval(-1, 1), 21)
    q = quadratic(m)
    np.testing.assert_array_equal(convex_envelope(q.values, m).values, q.values)


@given(st.lists(st.floats(-5, 5), min_size=17, max_size=17))
def test_envelope_idempotent_below_input_1d(vals):
    m = interval_mesh(Interval(-1, 1), 17)
    f = np.array(vals)
    g = convex_envelope(f, m)
    assert np.all(g.values <= f + 1e-12)
    np.testing.assert_allclose(convex_envelope(g.values, m).values, g.values, atol=1e-12)
    assert is_convex(g)


@given(st.integers(0, 2**31))
def test_envelope_idempotent_2d(seed):
    m = grid_mesh(DISK, 9)
    f = np.random.default_rng(seed).normal(size=m.n_nodes)
    g = convex_envelope(f, m)
    assert np.all(g.values <= f + 1e-12)
    np.testing.assert_allclose(convex_envelope(g.values, m).values, g.values, atol=1e-10)


@given(st.integers(0, 2**31))
def test_ma_atoms_nonnegative(seed):
    rng = np.random.default_rng(seed)
    m = grid_mesh(DISK, 9)
    g = convex_envelope(rng.normal(size=m.n_nodes), m)
    assert np.all(ma_measure(g).atoms >= 0)


def test_lipschitz_decompose_zero():
    m = interval_mesh(Interval(-1, 1), 41)
    p1, p2 = lipschitz_decompose(np.zeros(41), m, 0.2)
    np.testing.assert_array_equal(p1.values, p2.values)


def test_lipschitz_decompose_bump():
    m = interval_mesh(Interval(-1, 1), 81)
    phi = np.maximum(0.0, 0.25 - m.nodes**2)
    p1, p2 = lipschitz_decompose(phi, m, 0.3)
    assert np.max(np.abs(p1.values - p2.values - phi)) < 1e-12
    assert is_convex(p1) and is_convex(p2)
    assert np.all(p1.boundary_trace == 0) and np.all(p2.boundary_trace == 0)


def test_lipschitz_decompose_random_bumps():
    rng = np.random.default_rng(7)
    m = interval_mesh(Interval(-1, 1), 81)
    d = grid_mesh(DISK, 13)
    for k in range(100):
        mesh = m if k % 2 else d
        x = mesh.nodes if mesh.dim == 1 else np.linalg.norm(mesh.nodes - rng.uniform(-0.2, 0.2, 2), axis=1)
        c = 0.0 if mesh.dim == 2 else rng.uniform(-0.3, 0.3)
        phi = rng.uniform(0.1, 2) * np.maximum(0.0, rng.uniform(0.05, 0.3) - (x - c) ** 2)
        p1, p2 = lipschitz_decompose(phi, mesh, 0.15)
        assert is_convex(p1) and is_convex(p2)
        assert np.max(np.abs(p1.values - p2.values - phi)) < 1e-10


def test_lipschitz_decompose_collar_violation():
    m = interval_mesh(Interval(-1, 1), 21)
    with pytest.raises(ValueError):
        lipschitz_decompose(np.ones(21), m, 0.1)


def test_canonical_approximation():
    m = interval_mesh(Interval(-1, 1), 9)
    atoms = np.zeros(9)
    atoms[4] = 3.0
    nu = DiscreteMeasure(m, atoms, np.zeros(8))
    ca = canonical_approximation(nu, 0)
    assert ca.total == pytest.approx(3.0)
    sq = grid_mesh(Polygon(((0, 0), (1, 0), (1, 1), (0, 1))), 9)
    leb = DiscreteMeasure(sq, np.zeros(sq.n_nodes), sq.cell_volumes.copy())
    for lev in (1, 2, 3):
        np.testing.assert_allclose(canonical_approximation(leb, lev).cells, leb.cells, rtol=1e-12)
    with pytest.raises(ValueError):
        canonical_approximation(leb, -1)


@given(st.integers(0, 2**31), st.integers(0, 4))
def test_canonical_mass_preserved(seed, level):
    rng = np.random.default_rng(seed)
    m = grid_mesh(DISK, 9)
    nu = DiscreteMeasure(m, rng.exponential(size=m.n_nodes), rng.exponential(size=m.n_cells))
    assert canonical_approximation(nu, level).total == pytest.approx(nu.total, rel=1e-12)
