import math

import numpy as np
import pytest

from mongeampere.checks import (
    CHECKS,
    SUITE_NAMES,
    as_expected,
    check_aj,
    check_aleksandrov,
    check_blocki_i,
    check_cauchy_schwarz,
    check_comparison,
    check_domination,
    check_energy_estimate,
    check_envelope_derivative,
    check_ibp,
    check_poincare,
    check_reverse_aleksandrov,
    check_vanishing_mass,
    envelope_pairs,
    equality_cases,
    hardy_probes,
    run_randomized,
    run_suite,
)
from mongeampere.convex import ConvexFn, DiscreteMeasure, cone, energy, quadratic
from mongeampere.dirichlet import PreconditionError, solve
from mongeampere.geometry import Interval, interval_mesh
from mongeampere.measures import MeasureSpec, realize

I = Interval(-1.0, 1.0)
M = interval_mesh(I, 101)


def _atom_solution(i, mass):
    atoms = np.zeros(M.n_nodes)
    atoms[i] = mass
    return solve(M, DiscreteMeasure(M, atoms, np.zeros(M.n_cells)))


def test_aleksandrov_cone():
    rep = check_aleksandrov(cone(M), 0.0)
    assert rep.passed
    assert rep.lhs == pytest.approx(1.0)
    assert rep.rhs == pytest.approx(2.0)


@pytest.mark.parametrize("i", [60, 80, 95, 99])
def test_aleksandrov_ratio_for_atoms(i):
    # one atom of mass M at a: |u(a)| = M (1 - a^2)/2, so lhs/rhs = (1 + a)/2
    a = M.nodes[i]
    rep = check_aleksandrov(_atom_solution(i, 3.0), a)
    assert rep.passed
    assert rep.lhs / rep.rhs == pytest.approx((1 + a) / 2, rel=1e-12)


def test_aleksandrov_needs_zero_boundary():
    with pytest.raises(ValueError):
        check_aleksandrov(ConvexFn(M, M.nodes**2), 0.0)


def test_energy_estimate_cone():
    rep = check_energy_estimate(cone(M), 0.0)
    assert energy(cone(M)) == pytest.approx(2.0)
    assert rep.passed and rep.lhs == pytest.approx(1.0) and rep.rhs == pytest.approx(2.0)


def test_aj_cone_vs_quadratic():
    u = cone(M, depth=2.0)
    ut = cone(M)
    for alpha in (0.0, 0.5, 1.0):
        assert check_aj(u, ut, 0.0, alpha).passed
    with pytest.raises(PreconditionError):
        check_aj(ut, u, 0.0, 0.5)
    with pytest.raises(ValueError):
        check_aj(u, ut, 0.0, 1.5)


def test_ibp_and_cauchy_schwarz_1d():
    u, q = cone(M, apex=0.3), quadratic(M)
    rep = check_ibp([u, q])
    assert rep.passed and rep.lhs < 1e-12
    cs = check_cauchy_schwarz([u, q])
    assert cs.passed and cs.lhs < cs.rhs
    cs_eq = check_cauchy_schwarz([q, q])
    assert cs_eq.lhs == pytest.approx(cs_eq.rhs, rel=1e-12)


def test_domination():
    u, v = cone(M), cone(M, depth=2.0)
    rep = check_domination(u, v)
    assert rep.passed and not rep.details["vacuous"]
    # mu_v sits at 0 where v < u: hypothesis fails, the check is vacuous
    assert check_domination(v, u).details["vacuous"]
    with pytest.raises(PreconditionError):
        check_domination(cone(M), ConvexFn(M, M.nodes**2))


def test_comparison_preconditions():
    nu = realize(MeasureSpec.lebesgue(), M)
    with pytest.raises(PreconditionError):
        check_comparison(cone(M), cone(M), 1.5, nu)


def test_blocki_i_identity():
    u = quadratic(M)
    assert check_blocki_i(u, u, [u]).passed
    with pytest.raises(PreconditionError):
        check_blocki_i(quadratic(M), cone(M), [u])


def test_reverse_aleksandrov_equality_for_eigenpair():
    eig = lambda x: np.cos(np.pi * np.asarray(x) / 2)
    m = interval_mesh(I, 801)
    u = ConvexFn(m, -eig(m.nodes))
    rep = check_reverse_aleksandrov(u, eig, np.pi**2 / 4, tol=1e-4)
    assert rep.passed
    assert rep.lhs == pytest.approx(rep.rhs, rel=1e-4)


def test_poincare_check():
    nu = realize(MeasureSpec.lebesgue(), M)
    assert check_poincare(np.pi**2 / 4 * 0.999, nu).passed
    assert not check_poincare(np.pi**2 / 4 * 1.5, nu).passed


def test_envelope_derivative_examples():
    pairs = envelope_pairs()
    assert len(pairs) == 20
    for u, v in pairs:
        assert check_envelope_derivative(u, v).passed
    u = quadratic(M)
    rep = check_envelope_derivative(u, u)
    # E(Gamma_{(1+t)u}) = (1+t)^2 E(u): derivative 2 E(u)
    assert rep.details["target"] == pytest.approx(2 * energy(u), rel=1e-12)


def test_vanishing_dichotomy():
    sched = [2, 4, 8, 16, 32, 64, 128, 256]
    probes = hardy_probes([1.0 / m for m in sched] + [0.25])
    leb = check_vanishing_mass(MeasureSpec.lebesgue(), probes, sched)
    assert leb.passed
    vals = leb.details["values"]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    hardy = check_vanishing_mass(MeasureSpec.hardy(2.0), probes, sched)
    assert not hardy.passed


def test_equality_cases():
    reps = equality_cases()
    assert len(reps) == 16
    for r in reps:
        assert r.passed, r.name
        assert abs(r.lhs - r.rhs) <= 1e-9 * max(abs(r.lhs), abs(r.rhs), 1.0), r.name


@pytest.mark.parametrize("name", sorted(CHECKS))
def test_randomized_instances_pass(name):
    reps = run_randomized(name, 6)
    assert all(r.passed for r in reps), [(r.lhs, r.rhs) for r in reps if not r.passed]


@pytest.mark.parametrize("suite", SUITE_NAMES)
def test_suites_as_expected(suite):
    reps = run_suite(suite, trials=12)
    assert len(reps) == 12
    assert all(as_expected(r) for r in reps)


def test_suites_deterministic():
    a = [r.instance for r in run_suite("maxprin", trials=10)]
    b = [r.instance for r in run_suite("maxprin", trials=10)]
    assert a == b
    c = [r.instance for r in run_suite("maxprin", trials=10, seed=7)]
    assert a != c


def test_unknown_suite():
    with pytest.raises(KeyError):
        run_suite("nope")
