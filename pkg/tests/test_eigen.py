import math

import numpy as np
import pytest
from scipy.optimize import brentq

from mongeampere.convex import ConvexFn, cone, energy, quadratic
from mongeampere.dirichlet import solve
from mongeampere.eigen import (
    DegenerateInputError,
    aitken_limit,
    eigen_ladder,
    eigen_residual,
    inverse_iterate,
    minimality_probe,
    poincare_probe,
    power_functional,
    power_minimize,
    rayleigh,
    subeigen_certificate,
)
from mongeampere.geometry import Interval, geometric_gaps, interval_mesh, radial_mesh
from mongeampere.measures import MeasureSpec, realize, truncate
from mongeampere.oracles import hardy_family, oracle, sample

from oracles_ode import normalized_eigen

I = Interval(-1.0, 1.0)


@pytest.fixture(scope="module")
def m401():
    return interval_mesh(I, 401)


@pytest.fixture(scope="module")
def leb401(m401):
    return realize(MeasureSpec.lebesgue(), m401)


@pytest.fixture(scope="module")
def lebesgue_pair(m401, leb401):
    return inverse_iterate(cone(m401), leb401, tol=1e-13)


def test_rayleigh_cos_profile(m401, leb401):
    u = ConvexFn(m401, -np.cos(np.pi * m401.nodes / 2))
    assert rayleigh(u, leb401) == pytest.approx(np.pi**2 / 4, rel=1e-3)


def test_rayleigh_scale_invariant(m401, leb401):
    u = quadratic(m401)
    assert rayleigh(u.scaled(3.7), leb401) == pytest.approx(rayleigh(u, leb401), rel=1e-13)


def test_rayleigh_zero_denominator(m401):
    zero = realize(MeasureSpec.lebesgue(), m401).scaled(0.0)
    with pytest.raises(DegenerateInputError):
        rayleigh(cone(m401), zero)


def test_radial_rayleigh_below_bound():
    case = oracle("radial_rayleigh", n=1, eps=0.05)
    assert case.extra["rayleigh_exact"] <= case.extra["bound"]
    # boundary layer of width ~ 10^{-6/((n+1) eps)} has to be resolved
    m = radial_mesh(1, 1.0, gaps=geometric_gaps(1.0, 1.01, 10.0 ** (-6.0 / (2 * 0.05))))
    u, nu = sample(case, m)
    r = rayleigh(u, nu)
    assert r == pytest.approx(case.extra["rayleigh_exact"], abs=1e-3)
    assert r <= case.extra["bound"]


def test_inverse_iteration_lebesgue(lebesgue_pair, m401):
    res = lebesgue_pair
    assert res.lam == pytest.approx(np.pi**2 / 4, rel=1e-4)
    assert res.residual < 1e-6
    np.testing.assert_allclose(res.eigenfunction.values, -np.cos(np.pi * m401.nodes / 2), atol=1e-4)
    assert res.eigenfunction.sup_norm() == pytest.approx(1.0)
    led = res.ledger
    assert led.check_monotone("energy", "up", 1e-9) is None
    assert led.check_monotone("rayleigh", "down", 1e-9) is None


def test_fixed_point_of_scheme(lebesgue_pair, leb401):
    # one more step from the converged eigenfunction reproduces it
    u, lam = lebesgue_pair.eigenfunction, lebesgue_pair.lam
    nxt = solve(u.mesh, leb401.weighted(np.abs(u.values), np.abs(u.at_midpoints())).scaled(lam))
    assert np.max(np.abs(nxt.values - u.values)) < 1e-6


def test_subeigen_certificate_sandwich(lebesgue_pair, leb401):
    u, lam = lebesgue_pair.eigenfunction, lebesgue_pair.lam
    assert subeigen_certificate(lam * (1 - 1e-6), u, leb401).passed
    assert not subeigen_certificate(lam * 1.1, u, leb401).passed


def test_subeigen_certificate_hardy_pair():
    m = interval_mesh(I, 801)
    case = hardy_family(0.0)
    v, nu = sample(case, m)
    # the sampled density is not integrable at the ends; certify on a truncation
    nu = truncate(nu, 16)
    assert subeigen_certificate(case.lam * (1 - 1e-3), v, nu, rel_tol=1e-6).passed
    assert not subeigen_certificate(case.lam * 1.1, v, nu, rel_tol=1e-6).passed


def _truncated_lebesgue_eigenvalue(m):
    # u = -cos(k x) on |x| < c = 1 - 1/m, affine outside; u(+-1) = 0 gives tan(k c) = m / k
    c = 1 - 1 / m
    k = brentq(lambda k: np.tan(k * c) - m / k, 1e-9, np.pi / (2 * c) - 1e-12)
    return k * k


def test_ladder_lebesgue_against_closed_form(m401):
    sched = [2, 4, 8, 16]
    lad = eigen_ladder(m401, MeasureSpec.lebesgue(), sched, tol=1e-12)
    lams = lad.lambdas
    assert len(lams) == 4
    assert all(b < a for a, b in zip(lams, lams[1:]))
    for m, lam in zip(sched, lams):
        assert lam == pytest.approx(_truncated_lebesgue_eigenvalue(m), rel=1e-3)
    assert lad.limit == pytest.approx(np.pi**2 / 4, rel=1e-2)


def test_hardy_truncated_eigenvalue(m401):
    nu8 = truncate(realize(MeasureSpec.hardy(2.0), m401), 8)
    res = inverse_iterate(cone(m401), nu8, tol=1e-12)
    assert 1.0 < res.lam < 2.0
    lad = eigen_ladder(m401, MeasureSpec.hardy(2.0), [2, 4, 8], tol=1e-12)
    assert lad.levels[-1][0] == 8
    assert lad.lambdas[-1] == pytest.approx(res.lam, rel=1e-6)
    assert all(b <= a + 1e-9 for a, b in zip(lad.lambdas, lad.lambdas[1:]))


def test_aitken():
    geometric = [1 + 0.5**k for k in range(6)]
    assert aitken_limit(geometric) == pytest.approx(1.0, abs=1e-12)
    assert aitken_limit([3.0, 2.0]) == 2.0
    assert aitken_limit([2.0, 2.0, 2.0]) == 2.0


def test_poincare_probe(leb401, m401):
    rep = poincare_probe(leb401)
    assert rep.passed
    assert rep.rhs <= np.pi**2 / 4 * 1.5
    # a huge measure drives every quotient below the floor
    assert not poincare_probe(leb401.scaled(1e12)).passed
    assert poincare_probe(leb401.scaled(0.0)).rhs == math.inf


@pytest.mark.parametrize("p", [3.0, -0.5])
def test_power_minimize_against_first_integral(p):
    m = interval_mesh(I, 801)
    res = power_minimize(m, MeasureSpec.lebesgue(), p)
    lam0, depth = normalized_eigen(p)
    assert res.lam0 == pytest.approx(lam0, rel=1e-4)
    assert res.minimizer.sup_norm() == pytest.approx(depth, rel=1e-4)
    assert res.experimental == (p > 1)
    assert res.residual < 1e-6


def test_power_functional_homogeneous(leb401, m401):
    u = quadratic(m401)
    for p in (3.0, -0.5):
        assert power_functional(u.scaled(2.5), leb401, p) == pytest.approx(power_functional(u, leb401, p), rel=1e-12)


def test_power_minimize_rejects_p(m401):
    with pytest.raises(ValueError):
        power_minimize(m401, MeasureSpec.lebesgue(), 0.5)


def test_minimality_probe(lebesgue_pair, leb401, m401):
    u = lebesgue_pair.eigenfunction
    assert minimality_probe(u, leb401, trials=200).passed
    big = minimality_probe(u.scaled(4.0), leb401, trials=50)
    small = minimality_probe(u, leb401, trials=50)
    assert big.lhs == pytest.approx(small.lhs, rel=1e-12)
    assert not minimality_probe(cone(m401), leb401, trials=50).passed


def test_eigen_residual_of_exact_pair(m401, leb401):
    u = ConvexFn(m401, -np.cos(np.pi * m401.nodes / 2))
    assert eigen_residual(u, leb401, np.pi**2 / 4) < 1e-6
