import math

import numpy as np
import pytest
import sympy as sp
from scipy import integrate

from mongeampere.convex import ConvexFn
from mongeampere.eigen import rayleigh
from mongeampere.geometry import Interval, grid_mesh, interval_mesh, radial_mesh, unit_ball_volume
from mongeampere.oracles import REGISTRY, OracleCase, TruncationRequiredError, oracle, sample

x, r = sp.symbols("x r", real=True)
INNER = np.linspace(-0.95, 0.95, 39)
RADII = np.linspace(0.05, 0.95, 19)


def _num(expr, var):
    return sp.lambdify(var, expr, "numpy")


def _radial_expected(n, alpha):
    W = -((1 - r**2) ** alpha)
    dW = sp.diff(W, r)
    d2W = sp.diff(W, r, 2)
    det = sp.simplify(d2W * (dW / r) ** (n - 1))
    return W, dW, d2W, det


@pytest.mark.parametrize("n,alpha", [(1, 0.5), (2, 0.5), (2, 2 / 3), (3, 0.75)])
def test_radial_alpha_symbolic(n, alpha):
    case = oracle("radial_alpha", n=n, alpha=alpha)
    W, dW, d2W, det = _radial_expected(n, sp.Rational(alpha).limit_denominator(100))
    g = 1 - RADII
    for mine, exact in ((case.u, W), (case.du, dW), (case.d2u, d2W), (case.density, det)):
        np.testing.assert_allclose(mine(RADII, g), _num(exact, r)(RADII), rtol=1e-10)
    assert np.max(np.abs(case.residual(RADII, g))) < 1e-8


def test_radial_alpha_center_density():
    case = oracle("radial_alpha", n=2, alpha=2 / 3)
    assert case.density(0.0, 1.0) == pytest.approx(16 / 9, rel=1e-14)
    assert case.residual(np.array([0.0]), np.array([1.0]))[0] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("alpha", [0.0, 0.1, 0.25, 0.4, -0.3])
def test_hardy_family_symbolic(alpha):
    case = oracle("hardy_family", alpha=alpha)
    a = sp.Rational(alpha).limit_denominator(100)
    v = -((1 + x) ** (sp.Rational(1, 2) + a)) * (1 - x) ** (sp.Rational(1, 2) - a)
    lam = 1 - 4 * a**2
    res = sp.diff(v, x, 2) - lam * (-v) / (1 - x**2) ** 2
    assert np.max(np.abs(_num(res, x)(INNER))) < 1e-8
    np.testing.assert_allclose(case.du(INNER), _num(sp.diff(v, x), x)(INNER), rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(case.d2u(INNER), _num(sp.diff(v, x, 2), x)(INNER), rtol=1e-10)
    assert case.lam == pytest.approx(float(lam))
    assert np.max(np.abs(case.residual(INNER))) < 1e-8


def test_hardy_family_asymmetry():
    case = oracle("hardy_family", alpha=0.4)
    assert case.u(0.5) != pytest.approx(case.u(-0.5))
    assert case.u(0.5) == pytest.approx(-(1.5**0.9) * 0.5**0.1)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_noncompact_sequence(m):
    case = oracle("noncompact_sequence", m=m)
    u = sp.Abs(x) ** (2 * m) - 1
    d2 = sp.diff(x ** (2 * m), x, 2)
    np.testing.assert_allclose(case.u(INNER), _num(u, x)(INNER), atol=1e-14)
    np.testing.assert_allclose(case.d2u(INNER), _num(d2, x)(INNER), rtol=1e-12, atol=1e-14)
    prof = integrate.quad(lambda t: (1 - t * t) * case.density(t), -1, 1)[0]
    dist = integrate.quad(lambda t: (1 - abs(t)) * case.density(t), -1, 1, points=[0.0])[0]
    assert prof == pytest.approx(case.extra["profile_weighted_mass"], rel=1e-10)
    assert dist == pytest.approx(case.extra["dist_weighted_mass"], rel=1e-10)


def test_flat_boundary_witness_symbolic():
    a_val = 0.25
    case = oracle("flat_boundary_witness", n=2, a=a_val)
    y1, y2 = sp.symbols("y1 y2", positive=True)
    a = sp.Rational(1, 4)
    w = y2 - y2**a * (1 - y1**2) ** (1 - a)
    H = sp.hessian(w, (y1, y2))
    grad = [sp.diff(w, s) for s in (y1, y2)]
    pts = np.array([[0.1, 0.2], [-0.3, 0.5], [0.5, 0.1], [0.0, 0.7], [0.2, 0.01]])
    f_det = sp.lambdify((y1, y2), H.det(), "numpy")
    f_w = sp.lambdify((y1, y2), w, "numpy")
    f_g = sp.lambdify((y1, y2), grad, "numpy")
    f_H = sp.lambdify((y1, y2), H, "numpy")
    np.testing.assert_allclose(case.u(pts), f_w(pts[:, 0], pts[:, 1]), rtol=1e-12)
    np.testing.assert_allclose(case.du(pts), np.array(f_g(pts[:, 0], pts[:, 1])).T, rtol=1e-10)
    for p, Hm in zip(pts, case.d2u(pts)):
        np.testing.assert_allclose(Hm, np.array(f_H(*p), dtype=float), rtol=1e-10)
    np.testing.assert_allclose(case.density(pts), f_det(pts[:, 0], pts[:, 1]), rtol=1e-10)
    assert np.max(np.abs(case.residual(pts))) < 1e-8


@pytest.mark.parametrize("n,k", [(2, 0), (2, 1), (2, 2), (3, 1), (3, 2)])
def test_mixed_parabola_cone_density(n, k):
    # mixed discriminant: coefficient of s^(n-k) t^k in det(s A + t B) over binom(n, k)
    case = oracle("mixed_parabola_cone", n=n, k=k)
    s, t = sp.symbols("s t")
    X = sp.Matrix(sp.symbols(f"x0:{n}", real=True))
    rr = sp.sqrt(sum(c**2 for c in X))
    A = sp.eye(n)
    B = sp.hessian(rr, list(X))
    poly = sp.Poly(sp.expand((s * A + t * B).det()), s, t)
    coeff = poly.coeff_monomial(s ** (n - k) * t**k) / sp.binomial(n, k)
    f = sp.lambdify(list(X), coeff, "numpy")
    rng = np.random.default_rng(1)
    pts = rng.uniform(-0.6, 0.6, (6, n))
    np.testing.assert_allclose(case.density(pts), [float(f(*p)) for p in pts], rtol=1e-10, atol=1e-14)


def test_mixed_annulus_mass():
    case = oracle("mixed_parabola_cone", n=2, k=1)
    # density 1/(2r) over the annulus 0.2 < r < 0.8: pi (0.8 - 0.2)
    assert case.extra["annulus_mass"](0.2, 0.8) == pytest.approx(math.pi * 0.6, rel=1e-12)


@pytest.mark.parametrize("n,eps", [(1, 0.05), (1, 0.2), (2, 0.1)])
def test_radial_rayleigh_closed_form(n, eps):
    case = oracle("radial_rayleigh", n=n, eps=eps)
    area = n * unit_ball_volume(n)
    det = lambda q: case.d2u(q, 1 - q) * (case.du(q, 1 - q) / q) ** (n - 1)
    num = integrate.quad(lambda q: abs(case.u(q, 1 - q)) * det(q) * area * q ** (n - 1), 0, 1, limit=400)[0]
    den = integrate.quad(lambda q: abs(case.u(q, 1 - q)) ** (n + 1) * case.density(q, 1 - q) * area * q ** (n - 1), 0, 1, limit=400)[0]
    assert num / den == pytest.approx(case.extra["rayleigh_exact"], rel=1e-7)
    assert case.extra["rayleigh_exact"] <= case.extra["bound"]
    assert case.extra["bound"] == pytest.approx(((n / (n + 1) + eps) / (n / (n + 1))) ** n)


def test_lebesgue_eigen_sampled_rayleigh():
    case = oracle("lebesgue_1d_eigen")
    u, nu = sample(case, interval_mesh(Interval(-1.0, 1.0), 401))
    assert rayleigh(u, nu) == pytest.approx(case.lam, rel=1e-4)
    assert np.max(np.abs(case.residual(INNER))) < 1e-12


def test_finite_differences_match_hand_derivatives():
    h = 1e-5
    for name, params in (("hardy_family", {"alpha": 0.25}), ("lebesgue_1d_eigen", {}), ("noncompact_sequence", {"m": 2})):
        case = oracle(name, **params)
        fd1 = (case.u(INNER + h) - case.u(INNER - h)) / (2 * h)
        fd2 = (case.du(INNER + h) - case.du(INNER - h)) / (2 * h)
        np.testing.assert_allclose(case.du(INNER), fd1, rtol=1e-6, atol=1e-6)
        np.testing.assert_allclose(case.d2u(INNER), fd2, rtol=1e-6, atol=1e-6)


def test_registry_and_errors():
    assert set(REGISTRY) == {
        "radial_alpha", "radial_rayleigh", "hardy_family", "mixed_parabola_cone",
        "flat_boundary_witness", "lebesgue_1d_eigen", "noncompact_sequence",
    }
    with pytest.raises(LookupError):
        oracle("nope")
    with pytest.raises(ValueError):
        oracle("hardy_family", alpha=0.5)
    with pytest.raises(ValueError):
        oracle("radial_alpha", alpha=1.0)
    for name in REGISTRY:
        d = oracle(name).to_dict()
        assert d["name"] == name


def test_truncation_required():
    # a 5-point Gauss rule on the middle cell evaluates the density at x = 0
    case = OracleCase("pole", Interval(-3.0, 3.0), {}, lambda t: np.zeros_like(t), density=lambda t: 1.0 / np.abs(t))
    with pytest.raises(TruncationRequiredError):
        sample(case, interval_mesh(Interval(-3.0, 3.0), 4))


def test_radial_sample_requires_radial_mesh():
    with pytest.raises(ValueError):
        sample(oracle("radial_alpha", n=2), grid_mesh(oracle("radial_alpha", n=2).domain, 9))
    with pytest.raises(ValueError):
        sample(oracle("radial_alpha", n=2), radial_mesh(1, 1.0, 20))
