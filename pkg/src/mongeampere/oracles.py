"""Closed-form convex functions, measures and eigenpairs used as independent references.

Derivatives are written out by hand (no automatic or symbolic differentiation)
so that the references stay independent of the discrete machinery.  Radial
cases take ``(r, gap)`` with ``gap = 1 - r`` so that 1 - r^2 = gap (2 - gap)
is evaluated without cancellation near the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .convex import ConvexFn, DiscreteMeasure, sample as sample_fn
from .geometry import Ball, Interval, Mesh, unit_ball_volume


class TruncationRequiredError(ValueError):
    pass


@dataclass
class OracleCase:
    """Exact data of one example.

    ``u``, ``du``, ``d2u`` evaluate the function and its derivatives (radial
    cases: of the profile, as functions of ``(r, gap)``); ``density`` is the
    exact density of the associated measure; ``lam`` the eigenvalue if any;
    ``residual`` the pointwise residual of the defining equation.
    """

    name: str
    domain: object
    params: dict
    u: Callable
    du: Callable | None = None
    d2u: Callable | None = None
    density: Callable | None = None
    lam: float | None = None
    residual: Callable | None = None
    radial: bool = False
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        dom = self.domain.to_dict() if hasattr(self.domain, "to_dict") else self.domain
        out = {"name": self.name, "params": dict(self.params), "domain": dom, "lambda": self.lam}
        for k, v in self.extra.items():
            if isinstance(v, (int, float, str)):
                out[k] = v
        return out


def _one_minus_r2(r, g):
    return g * (2.0 - g)


# --------------------------------------------------------------------------
# cases


def radial_alpha(n: int = 2, alpha: float = 0.5) -> OracleCase:
    """w = -(1 - r^2)^alpha on the unit ball in R^n, with its Monge-Ampere density."""
    if not (0 < alpha < 1):
        raise ValueError("alpha must lie in (0, 1)")

    def W(r, g):
        return -(_one_minus_r2(r, g) ** alpha)

    def dW(r, g):
        return 2 * alpha * r * _one_minus_r2(r, g) ** (alpha - 1)

    def d2W(r, g):
        s = _one_minus_r2(r, g)
        return 2 * alpha * s ** (alpha - 2) * (1 + r**2 * (1 - 2 * alpha))

    def det(r, g):
        s = _one_minus_r2(r, g)
        return (2 * alpha) ** n * s ** (n * (alpha - 1) - 1) * (1 + r**2 * (1 - 2 * alpha))

    def residual(r, g):
        # det D^2 w = W'' (W'/r)^{n-1}
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(r > 0, dW(r, g) / np.where(r > 0, r, 1.0), 2 * alpha * _one_minus_r2(r, g) ** (alpha - 1))
        return d2W(r, g) * ratio ** (n - 1) - det(r, g)

    return OracleCase("radial_alpha", Ball(tuple([0.0] * n), 1.0), {"n": n, "alpha": alpha}, W, dW, d2W, det, None, residual, True)


def radial_rayleigh(n: int = 1, eps: float = 0.05) -> OracleCase:
    """u_eps = -eps^{1/(n+1)} (1-r^2)^{a+eps} against nu = mu_v / |v|^n, v = -(1-r^2)^a, a = n/(n+1).

    ``extra`` holds the exact Rayleigh quotient (radial integrals in closed
    form through Beta functions) and the bound ((a + eps)/a)^n.
    """
    a = n / (n + 1)
    if not (0 < eps < 1 / (n + 1)):
        raise ValueError("eps must lie in (0, 1/(n+1))")
    ae = a + eps
    c = eps ** (1.0 / (n + 1))
    base = radial_alpha(n, ae)
    vcase = radial_alpha(n, a)

    def density(r, g):
        s = _one_minus_r2(r, g)
        return vcase.density(r, g) / s ** (n * a)

    def U(r, g):
        return c * base.u(r, g)

    def dU(r, g):
        return c * base.du(r, g)

    def d2U(r, g):
        return c * base.d2u(r, g)

    gamma = (n + 1) * (ae - 1)

    def radial_int(alpha_bracket):
        # int_0^1 r^{n-1} (1-r^2)^gamma [1 + r^2 (1 - 2 alpha)] dr via Beta functions
        return 0.5 * special.beta(n / 2, gamma + 1) + (1 - 2 * alpha_bracket) * 0.5 * special.beta(n / 2 + 1, gamma + 1)

    exact = (ae / a) ** n * radial_int(ae) / radial_int(a)
    extra = {"rayleigh_exact": exact, "bound": (ae / a) ** n, "alpha_n": a}
    return OracleCase("radial_rayleigh", Ball(tuple([0.0] * n), 1.0), {"n": n, "eps": eps}, U, dU, d2U, density, None, None, True, extra)


def hardy_family(alpha: float = 0.0) -> OracleCase:
    """v = -(1-x^2)^{1/2} ((1+x)/(1-x))^alpha with v'' = (1 - 4 alpha^2)|v| (1-x^2)^{-2}."""
    if not (-0.5 < alpha < 0.5):
        raise ValueError("alpha must lie in (-1/2, 1/2)")
    a, b = 0.5 + alpha, 0.5 - alpha

    def v(x):
        return -((1 + x) ** a) * (1 - x) ** b

    def dv(x):
        return -((1 + x) ** (a - 1)) * (1 - x) ** (b - 1) * (a * (1 - x) - b * (1 + x))

    def d2v(x):
        p, q = 1 + x, 1 - x
        return -(p**a) * q**b * (a * (a - 1) / p**2 - 2 * a * b / (p * q) + b * (b - 1) / q**2)

    def density(x):
        return 1.0 / ((1 - x) * (1 + x)) ** 2

    lam = 1 - 4 * alpha**2

    def residual(x):
        return d2v(x) - lam * np.abs(v(x)) * density(x)

    return OracleCase("hardy_family", Interval(-1.0, 1.0), {"alpha": alpha}, v, dv, d2v, density, lam, residual)


def mixed_parabola_cone(n: int = 2, k: int = 1) -> OracleCase:
    """Mixed measure of (n-k) copies of |x|^2/2 and k copies of |x|: density (n-k)/n r^{-k}."""
    if not (0 <= k <= n):
        raise ValueError("need 0 <= k <= n")

    def u(x):
        x = np.atleast_2d(x)
        return 0.5 * np.sum(x**2, axis=1)

    def v(x):
        x = np.atleast_2d(x)
        return np.linalg.norm(x, axis=1)

    def density(x):
        r = np.linalg.norm(np.atleast_2d(x), axis=1)
        return (n - k) / n * r ** (-float(k))

    def annulus_mass(r0, r1):
        f = lambda r: (n - k) / n * r ** (-k) * n * unit_ball_volume(n) * r ** (n - 1)
        return integrate.quad(f, r0, r1, epsabs=0, epsrel=1e-13)[0]

    extra = {"functions": (u, v), "annulus_mass": annulus_mass}
    return OracleCase("mixed_parabola_cone", Ball(tuple([0.0] * n), 1.0), {"n": n, "k": k}, u, None, None, density, None, None, False, extra)


def flat_boundary_witness(n: int = 2, a: float = 0.25) -> OracleCase:
    """w = x_n - x_n^a (1-|x'|^2)^{1-a} on {|x'| < 1, 0 < x_n < 1 - |x'|^2}."""
    if not (0 < a < 1):
        raise ValueError("a must lie in (0, 1)")

    def split(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x[:, :-1], x[:, -1]

    def w(x):
        xp, xn = split(x)
        s = 1 - np.sum(xp**2, axis=1)
        return xn - xn**a * s ** (1 - a)

    def grad(x):
        xp, xn = split(x)
        s = 1 - np.sum(xp**2, axis=1)
        gp = 2 * (1 - a) * (xn**a * s ** (-a))[:, None] * xp
        gn = 1 - a * xn ** (a - 1) * s ** (1 - a)
        return np.column_stack([gp, gn])

    def hessian(x):
        xp, xn = split(x)
        m = xp.shape[1]
        s = 1 - np.sum(xp**2, axis=1)
        H = np.zeros((len(xn), n, n))
        c = 2 * (1 - a) * xn**a * s ** (-a)
        H[:, :m, :m] = c[:, None, None] * (np.eye(m)[None] + (2 * a / s)[:, None, None] * xp[:, :, None] * xp[:, None, :])
        cross = 2 * a * (1 - a) * xn ** (a - 1) * s ** (-a)
        H[:, :m, m] = cross[:, None] * xp
        H[:, m, :m] = cross[:, None] * xp
        H[:, m, m] = a * (1 - a) * xn ** (a - 2) * s ** (1 - a)
        return H

    def density(x):
        xp, xn = split(x)
        s = 1 - np.sum(xp**2, axis=1)
        return a * (1 - a) * (2 - 2 * a) ** (n - 1) * xn ** (n * a - 2) * s ** (1 - n * a)

    def residual(x):
        return np.linalg.det(hessian(x)) - density(x)

    dom = {"kind": "parabolic_cap", "dim": n}
    return OracleCase("flat_boundary_witness", dom, {"n": n, "a": a}, w, grad, hessian, density, None, residual, False)


def lebesgue_1d_eigen() -> OracleCase:
    """u = -cos(pi x/2) on (-1, 1): u'' = (pi^2/4)|u|."""
    lam = math.pi**2 / 4
    u = lambda x: -np.cos(np.pi * x / 2)
    du = lambda x: (np.pi / 2) * np.sin(np.pi * x / 2)
    d2u = lambda x: (np.pi**2 / 4) * np.cos(np.pi * x / 2)
    dens = lambda x: np.ones_like(np.asarray(x, dtype=float))
    res = lambda x: d2u(x) - lam * np.abs(u(x))
    return OracleCase("lebesgue_1d_eigen", Interval(-1.0, 1.0), {}, u, du, d2u, dens, lam, res)


def noncompact_sequence(m: int = 1) -> OracleCase:
    """u_m = |x|^{2m} - 1 with nu_m = 2m(2m-1) x^{2m-2} dx on (-1, 1).

    ``extra``: int (1-x^2) dnu_m = 8m/(2m+1) and int dist dnu_m = 2.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    u = lambda x: np.abs(x) ** (2 * m) - 1
    du = lambda x: 2 * m * np.sign(x) * np.abs(x) ** (2 * m - 1)
    d2u = lambda x: 2 * m * (2 * m - 1) * np.abs(x) ** (2 * m - 2)
    dens = lambda x: 2 * m * (2 * m - 1) * np.abs(x) ** (2 * m - 2)
    res = lambda x: d2u(x) - dens(x)
    extra = {"profile_weighted_mass": 8 * m / (2 * m + 1), "dist_weighted_mass": 2.0}
    return OracleCase("noncompact_sequence", Interval(-1.0, 1.0), {"m": m}, u, du, d2u, dens, None, res, False, extra)


REGISTRY = {
    "radial_alpha": radial_alpha,
    "radial_rayleigh": radial_rayleigh,
    "hardy_family": hardy_family,
    "mixed_parabola_cone": mixed_parabola_cone,
    "flat_boundary_witness": flat_boundary_witness,
    "lebesgue_1d_eigen": lebesgue_1d_eigen,
    "noncompact_sequence": noncompact_sequence,
}


def oracle(name: str, **params) -> OracleCase:
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise LookupError(f"unknown oracle {name!r}; known: {sorted(REGISTRY)}") from None
    return factory(**params)


# --------------------------------------------------------------------------
# sampling

_GL5 = np.polynomial.legendre.leggauss(5)


def _gauss_1d(mesh: Mesh, f):
    t, w = _GL5
    x0, x1 = mesh.nodes[:-1], mesh.nodes[1:]
    half = 0.5 * (x1 - x0)
    pts = 0.5 * (x0 + x1)[:, None] + half[:, None] * t[None, :]
    vals = f(pts)
    return np.sum(vals * w[None, :], axis=1) * half


def _gauss_radial(mesh: Mesh, f):
    n = mesh.dim
    t, w = _GL5
    g0, g1 = mesh.gap[:-1], mesh.gap[1:]
    half = 0.5 * (g0 - g1)
    g = 0.5 * (g0 + g1)[:, None] + half[:, None] * t[None, :]
    r = 1.0 - g
    vals = n * unit_ball_volume(n) * r ** (n - 1) * f(r, g)
    return np.sum(vals * w[None, :], axis=1) * half


def _triangle_quadrature(mesh: Mesh, f):
    # 6-point rule of degree 4 on each triangle
    A, B = 0.445948490915965, 0.091576213509771
    wa, wb = 0.223381589678011, 0.109951743655322
    bary = np.array([[A, A, 1 - 2 * A], [A, 1 - 2 * A, A], [1 - 2 * A, A, A], [B, B, 1 - 2 * B], [B, 1 - 2 * B, B], [1 - 2 * B, B, B]])
    wts = np.array([wa] * 3 + [wb] * 3)
    P = mesh.nodes[mesh.cells]
    out = np.zeros(mesh.n_cells)
    for lam, wt in zip(bary, wts):
        pts = np.einsum("k,ckd->cd", lam, P)
        out += wt * f(pts)
    return out * mesh.cell_volumes


def _checked(vals, name):
    vals = np.asarray(vals, dtype=float)
    if not np.all(np.isfinite(vals)):
        raise TruncationRequiredError(f"{name}: density is singular on this mesh; truncate it first")
    return vals


def sample(case: OracleCase, mesh: Mesh):
    """Nodal samples of the exact function and the exact measure integrated per cell.

    Cells use a 5-point Gauss rule (1D and radial) or a degree-4 triangle rule.
    Radial samples carry exact slopes and exact midpoint values.
    """
    if case.radial:
        if mesh.kind != "radial":
            raise ValueError("radial oracle needs a radial mesh")
        if mesh.dim != case.params["n"]:
            raise ValueError("mesh dimension does not match the oracle")
        with np.errstate(divide="ignore"):
            u = sample_fn(mesh, case.u, case.du, exact_midpoints=True)
        if not np.isfinite(u.slopes[-1]):
            # infinite boundary slope: use the secant slope of the outermost shell
            slopes = u.slopes.copy()
            slopes[-1] = (u.values[-1] - u.values[-2]) / mesh.gap[-2]
            u = ConvexFn(mesh, u.values, slopes, u.mid_values)
        cells = _checked(_gauss_radial(mesh, case.density), case.name) if case.density else np.zeros(mesh.n_cells)
        return u, DiscreteMeasure(mesh, np.zeros(mesh.n_nodes), cells)
    if mesh.kind == "pl1d":
        with np.errstate(divide="ignore", invalid="ignore"):
            u = sample_fn(mesh, case.u, exact_midpoints=True)
            cells = _checked(_gauss_1d(mesh, case.density), case.name) if case.density else np.zeros(mesh.n_cells)
        return u, DiscreteMeasure(mesh, np.zeros(mesh.n_nodes), cells)
    vals = np.asarray(case.u(mesh.nodes), dtype=float)
    cells = _checked(_triangle_quadrature(mesh, case.density), case.name) if case.density else np.zeros(mesh.n_cells)
    return ConvexFn(mesh, vals), DiscreteMeasure(mesh, np.zeros(mesh.n_nodes), cells)
