"""Executable maximum principles, energy inequalities and comparison principles.

Each check evaluates an inequality lhs <= rhs on concrete discrete data and
returns a :class:`CheckReport`.  Randomized instance generators build inputs
that satisfy the hypotheses by construction, so suites of them should pass.
"""

from __future__ import annotations

import functools
import math

import numpy as np
from scipy import integrate

from .convex import (
    ConvexFn,
    DiscreteMeasure,
    ShapeError,
    _check_same_mesh,
    cone,
    convex_envelope,
    energy,
    ma_measure,
    mixed_ma_measure,
    quadratic,
)
from .dirichlet import PreconditionError, aleksandrov_constant
from .eigen import probe_family, rayleigh, subeigen_certificate
from .geometry import Ball, Interval, Mesh, grid_mesh, interval_mesh
from .ledger import CheckReport, digest
from .measures import MeasureSpec, boundary_profile, realize

SEED = 0xA1E5
EXACT_TOL = 1e-9  # relative, pl1d backend
QUAD_TOL = 1e-4  # relative, planar and radial backends
DERIVATIVE_TOL = 1e-3
VANISHING_LEVEL = 1e-3
H_LIST = (1e-2, 1e-3, 1e-4)


def rel_tol(mesh: Mesh) -> float:
    return EXACT_TOL if mesh.kind == "pl1d" else QUAD_TOL


def _tol(mesh, *vals):
    return rel_tol(mesh) * max(max(abs(float(v)) for v in vals), 1e-300)


def _node(mesh: Mesh, x0) -> int:
    if isinstance(x0, (int, np.integer)):
        return int(x0)
    x0 = np.asarray(x0, dtype=float)
    if mesh.kind == "radial":
        return int(np.argmin(np.abs(mesh.nodes - float(np.linalg.norm(x0)))))
    if mesh.nodes.ndim == 1:
        return int(np.argmin(np.abs(mesh.nodes - float(x0))))
    return int(np.argmin(np.linalg.norm(mesh.nodes - x0, axis=1)))


def _interior_mass(mu: DiscreteMeasure) -> float:
    return float(mu.atoms[mu.mesh.interior].sum() + mu.cells.sum())


def _integrate(mu: DiscreteMeasure, f: ConvexFn | np.ndarray, mids=None) -> float:
    if isinstance(f, ConvexFn):
        return mu.integrate(f.values, f.at_midpoints())
    return mu.integrate(f, mids)


def _diff_fn(a: ConvexFn, b: ConvexFn):
    """Nodal and midpoint values of a - b."""
    return a.values - b.values, a.at_midpoints() - b.at_midpoints()


def _zero_boundary(u: ConvexFn, what: str = "u"):
    tr = u.boundary_trace
    if tr.size and np.max(np.abs(tr)) > 1e-12 * max(u.sup_norm(), 1.0):
        raise PreconditionError(f"{what} must vanish on the boundary")


def _lumped_interior(mu: DiscreteMeasure) -> np.ndarray:
    return mu.interior_lumped()


# --------------------------------------------------------------------------
# maximum principles


def check_aleksandrov(u: ConvexFn, x0) -> CheckReport:
    """|u(x0)|^n <= C(n) diam^{n-1} dist(x0) mu_u(Omega)."""
    _zero_boundary(u)
    mesh, n = u.mesh, u.dim
    i = _node(mesh, x0)
    mass = _interior_mass(ma_measure(u))
    lhs = abs(u.values[i]) ** n
    rhs = aleksandrov_constant(n) * mesh.domain.diameter ** (n - 1) * mesh.node_dist[i] * mass
    return CheckReport("aleksandrov", lhs, rhs, _tol(mesh, lhs, rhs), digest(u.values, [i]), {"node": i})


def check_energy_estimate(u: ConvexFn, x0) -> CheckReport:
    """|u(x0)|^{n+1} <= C(n) diam^{n-1} dist(x0) E(u)."""
    _zero_boundary(u)
    mesh, n = u.mesh, u.dim
    i = _node(mesh, x0)
    lhs = abs(u.values[i]) ** (n + 1)
    rhs = aleksandrov_constant(n) * mesh.domain.diameter ** (n - 1) * mesh.node_dist[i] * energy(u)
    return CheckReport("energy_estimate", lhs, rhs, _tol(mesh, lhs, rhs), digest(u.values, [i]), {"node": i})


def check_aj(u: ConvexFn, ut: ConvexFn, x0, alpha: float) -> CheckReport:
    """|ut(x0) - u(x0)|^n <= C diam^{n-1} dist^alpha(x0) int dist^{1-alpha} d(mu_u - mu_ut)."""
    _check_same_mesh(u, ut)
    _zero_boundary(u)
    _zero_boundary(ut, "ut")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    mesh, n = u.mesh, u.dim
    mu, mut = ma_measure(u), ma_measure(ut)
    excess = _lumped_interior(mu) - _lumped_interior(mut)
    if np.min(excess, initial=0.0) < -1e-12 * max(mu.total, 1e-300):
        raise PreconditionError("check_aj needs mu_u >= mu_ut nodewise")
    i = _node(mesh, x0)
    diff = mu - mut
    weight = diff.integrate(mesh.node_dist ** (1 - alpha), mesh.cell_dist ** (1 - alpha))
    lhs = abs(ut.values[i] - u.values[i]) ** n
    rhs = aleksandrov_constant(n) * mesh.domain.diameter ** (n - 1) * mesh.node_dist[i] ** alpha * weight
    return CheckReport(f"aj[alpha={alpha:g}]", lhs, rhs, _tol(mesh, lhs, rhs), digest(u.values, ut.values, [i, alpha]), {"node": i})


def check_comparison(u: ConvexFn, v: ConvexFn, p: float, nu: DiscreteMeasure) -> CheckReport:
    """Supersolution u (zero boundary) lies above a negative subsolution v of mu = |.|^p nu.

    lhs is the larger of the relative violations of u >= v (nodewise) and of
    mu_u <= mu_v (lumped nodal masses); rhs is 0.
    """
    _check_same_mesh(u, v)
    mesh, n = u.mesh, u.dim
    if not 0.0 < p < n:
        raise PreconditionError(f"comparison needs 0 < p < n = {n}")
    _zero_boundary(u)
    if np.any(v.values[mesh.interior] >= 0) or np.any(v.boundary_trace > 1e-12 * max(v.sup_norm(), 1.0)):
        raise PreconditionError("v must be negative inside and nonpositive on the boundary")
    mu_u, mu_v = ma_measure(u), ma_measure(v)
    rhs_u = nu.weighted(np.abs(u.values) ** p, np.abs(u.at_midpoints()) ** p).interior_lumped()
    rhs_v = nu.weighted(np.abs(v.values) ** p, np.abs(v.at_midpoints()) ** p).interior_lumped()
    lu, lv = _lumped_interior(mu_u), _lumped_interior(mu_v)
    eps = 1e-12 * max(rhs_u.sum(), rhs_v.sum(), lu.sum(), lv.sum(), 1e-300)
    if np.any(lu - rhs_u > eps):
        raise PreconditionError("u is not a supersolution")
    if np.any(rhs_v - lv > eps):
        raise PreconditionError("v is not a subsolution")
    viol_fn = float(np.max(v.values - u.values)) / max(v.sup_norm(), 1e-300)
    viol_mass = float(np.max(lu - lv)) / max(lv.sum(), 1e-300)
    lhs = max(viol_fn, viol_mass)
    return CheckReport("comparison", lhs, 0.0, rel_tol(mesh), digest(u.values, v.values, [p]), {"fn": viol_fn, "mass": viol_mass})


def check_domination(u: ConvexFn, v: ConvexFn) -> CheckReport:
    """If mu_u puts no mass on {u < v} and u >= v on the boundary, then u >= v.

    Instances where the mass hypothesis fails pass vacuously and are flagged
    in ``details``.
    """
    _check_same_mesh(u, v)
    mesh = u.mesh
    b = mesh.boundary
    scale = max(1.0, u.sup_norm(), v.sup_norm())
    if np.any(u.values[b] < v.values[b] - 1e-12 * scale):
        raise PreconditionError("domination needs u >= v on the boundary")
    mu = ma_measure(u)
    lumped = mu.lumped()
    below = u.values < v.values - 1e-12
    bad_mass = float(lumped[below & mesh.interior].sum())
    tag = digest(u.values, v.values)
    if bad_mass > 1e-12 * max(mu.total, 1e-300):
        return CheckReport("domination", 0.0, 0.0, 0.0, tag, {"vacuous": True, "mass_below": bad_mass})
    lhs = float(np.max(v.values - u.values))
    return CheckReport("domination", lhs, 0.0, 1e-9 * scale, tag, {"vacuous": False})


# --------------------------------------------------------------------------
# mixed-measure inequalities


def _norms(fns):
    return [f.sup_norm() for f in fns]


def _check_blocki_inputs(v, w, us):
    _check_same_mesh(v, w, *us)
    mesh = v.mesh
    scale = max(1.0, v.sup_norm(), w.sup_norm())
    if np.any(v.values > w.values + 1e-12 * scale):
        raise PreconditionError("Blocki inequalities need v <= w")
    if np.any(np.abs(v.boundary_trace - w.boundary_trace) > 1e-12 * scale):
        raise PreconditionError("Blocki inequalities need v = w on the boundary")
    for f in us:
        if np.any(f.values > 1e-12 * max(1.0, f.sup_norm())):
            raise PreconditionError("the u_i must be nonpositive")
    if len(us) != mesh.dim:
        raise ShapeError(f"need {mesh.dim} functions u_i")


def check_blocki_i(v: ConvexFn, w: ConvexFn, u_list) -> CheckReport:
    """int (w-v)^n dmu_n[u] <= n! |u_1|...|u_{n-1}| int |u_n| d(mu_v - mu_w)."""
    us = list(u_list)
    _check_blocki_inputs(v, w, us)
    mesh, n = v.mesh, v.dim
    gap, gap_mid = _diff_fn(w, v)
    lhs = mixed_ma_measure(us).integrate(gap**n, gap_mid**n)
    un = us[-1]
    rhs = math.factorial(n) * float(np.prod(_norms(us[:-1]))) * (ma_measure(v) - ma_measure(w)).integrate(
        np.abs(un.values), np.abs(un.at_midpoints())
    )
    return CheckReport("blocki_i", lhs, rhs, _tol(mesh, lhs, rhs), digest(v.values, w.values, *[f.values for f in us]))


def check_blocki_ii(v: ConvexFn, w: ConvexFn, u_list, ut_list) -> CheckReport:
    """int (w-v)^{n+1} d(mu_n[u] - mu_n[ut]) <= 2 (n+1)! sum_k d_k m_k int |v| d(mu_v - mu_w)."""
    us, uts = list(u_list), list(ut_list)
    _check_blocki_inputs(v, w, us)
    _check_blocki_inputs(v, w, uts)
    mesh, n = v.mesh, v.dim
    if np.any(v.values > 1e-12 * max(1.0, v.sup_norm())):
        raise PreconditionError("part (ii) needs v <= 0")
    gap, gap_mid = _diff_fn(w, v)
    diff = mixed_ma_measure(us) - mixed_ma_measure(uts)
    lhs = diff.integrate(gap ** (n + 1), gap_mid ** (n + 1))
    nu_, nut = _norms(us), _norms(uts)
    total = 0.0
    for k in range(n):
        d_k = float(np.max(np.abs(us[k].values - uts[k].values)))
        m_k = float(np.prod(nu_[:k])) * float(np.prod(nut[k + 1 :]))
        total += d_k * m_k
    rhs = 2 * math.factorial(n + 1) * total * (ma_measure(v) - ma_measure(w)).integrate(np.abs(v.values), np.abs(v.at_midpoints()))
    return CheckReport(
        "blocki_ii", lhs, rhs, _tol(mesh, lhs, rhs), digest(v.values, w.values, *[f.values for f in us + uts]), {"d_m": total}
    )


def check_cauchy_schwarz(u_list) -> CheckReport:
    """int |u_0| dmu_n[u_1..u_n] <= prod_i E(u_i)^{1/(n+1)}."""
    us = list(u_list)
    _check_same_mesh(*us)
    mesh, n = us[0].mesh, us[0].dim
    if len(us) != n + 1:
        raise ShapeError(f"need {n + 1} functions")
    for f in us:
        _zero_boundary(f)
    u0 = us[0]
    lhs = mixed_ma_measure(us[1:]).integrate(np.abs(u0.values), np.abs(u0.at_midpoints()))
    rhs = float(np.prod([energy(f) ** (1.0 / (n + 1)) for f in us]))
    return CheckReport("cauchy_schwarz", lhs, rhs, _tol(mesh, lhs, rhs), digest(*[f.values for f in us]))


def check_ibp(u_list) -> CheckReport:
    """int u_0 dmu_n[u_1..u_n] = int u_n dmu_n[u_0..u_{n-1}]; lhs is the absolute difference."""
    us = list(u_list)
    _check_same_mesh(*us)
    mesh, n = us[0].mesh, us[0].dim
    if len(us) != n + 1:
        raise ShapeError(f"need {n + 1} functions")
    for f in us:
        _zero_boundary(f)
    a = _integrate(mixed_ma_measure(us[1:]), us[0])
    b = _integrate(mixed_ma_measure(us[:-1]), us[-1])
    tol = rel_tol(mesh) * max(abs(a), abs(b), 1.0)
    return CheckReport("ibp", abs(a - b), 0.0, tol, digest(*[f.values for f in us]), {"first": a, "second": b})


def check_mixed_inequality(u_list, f_list, nu: DiscreteMeasure) -> CheckReport:
    """mu_n[u_1..u_n] >= (prod f_i)^{1/n} nu at every interior node, given mu_{u_i} >= f_i nu.

    ``f_list`` holds nodal densities.  lhs is the largest nodal violation.
    """
    us = list(u_list)
    _check_same_mesh(*us)
    mesh, n = us[0].mesh, us[0].dim
    if len(us) != n or len(f_list) != n:
        raise ShapeError(f"need {n} functions and {n} densities")
    nu_l = nu.interior_lumped()
    fs = [np.asarray(f, dtype=float) for f in f_list]
    if any(np.any(f < 0) for f in fs):
        raise PreconditionError("densities must be nonnegative")
    for u, f in zip(us, fs):
        lu = ma_measure(u).interior_lumped()
        if np.any(f * nu_l - lu > 1e-12 * max(lu.sum(), 1e-300)):
            raise PreconditionError("mu_{u_i} >= f_i nu fails")
    geo = np.prod(np.stack(fs), axis=0) ** (1.0 / n) * nu_l
    mixed = mixed_ma_measure(us).interior_lumped()
    viol = (geo - mixed)[mesh.interior]
    lhs = float(np.max(viol)) if viol.size else 0.0
    lhs = max(lhs, 0.0) if abs(lhs) < 1e-300 else lhs
    return CheckReport("mixed_inequality", lhs, 0.0, rel_tol(mesh) * max(mixed.sum(), 1e-300), digest(*[u.values for u in us], nu_l))


# --------------------------------------------------------------------------
# variational derivative of the energy of envelopes


def envelope_energy(u: ConvexFn, v: ConvexFn, t: float) -> float:
    return energy(convex_envelope(u.values + t * v.values, u.mesh))


def _richardson(h, s, order):
    """Extrapolate s(h) = s0 + c h^order from the two smallest steps."""
    (h1, s1), (h2, s2) = sorted(zip(h, s), reverse=True)[-2:]
    q = (h1 / h2) ** order
    return (q * s2 - s1) / (q - 1)


def check_envelope_derivative(u: ConvexFn, v: ConvexFn, h_list=H_LIST) -> CheckReport:
    """d/dt E(Gamma_{u+tv}) at 0 against (n+1) int (-v) dmu_u, from both sides.

    One-sided difference quotients at each step h are extrapolated to h = 0
    (first order); lhs is the larger deviation of the two one-sided limits
    from the target, rhs the relative tolerance 1e-3 times |target|.
    """
    _check_same_mesh(u, v)
    _zero_boundary(u)
    _zero_boundary(v, "v")
    mesh, n = u.mesh, u.dim
    base = convex_envelope(u.values, mesh)
    mu = ma_measure(base)
    target = (n + 1) * mu.integrate(-v.values, -v.at_midpoints())
    D0 = energy(base)
    hs = list(h_list)
    plus = [(envelope_energy(base, v, h) - D0) / h for h in hs]
    minus = [(D0 - envelope_energy(base, v, -h)) / h for h in hs]
    central = [(p + m) / 2 for p, m in zip(plus, minus)]
    right = _richardson(hs, plus, 1)
    left = _richardson(hs, minus, 1)
    lhs = max(abs(right - target), abs(left - target))
    rhs = DERIVATIVE_TOL * max(abs(target), 1e-300)
    details = {"target": target, "right": right, "left": left, "central": _richardson(hs, central, 2)}
    return CheckReport("envelope_derivative", lhs, rhs, 0.0, digest(u.values, v.values), details)


# --------------------------------------------------------------------------
# vanishing mass near the boundary


def _density_callable(spec, domain: Interval):
    """Density as a function of (x, d), d the distance of x to the nearer end."""
    if callable(spec) and not isinstance(spec, MeasureSpec):
        return spec
    if spec.kind == "lebesgue":
        return lambda x, d: 1.0
    if spec.kind == "hardy":
        s = spec.params["s"]
        L = domain.diameter
        return lambda x, d: (d * (L - d) / (0.5 * L)) ** (-s)
    if spec.kind == "density":
        f = spec.params["f"]
        return lambda x, d: f(x)
    raise ValueError(f"no continuum density for measure kind {spec.kind!r}")


_S_MAX = 300.0


def collar_integral(spec, probe, level: int, domain: Interval) -> float:
    """int over {dist <= 1/level} of |probe|^2 dnu on an interval, by adaptive quadrature.

    ``probe`` and callable densities take ``(x, d)`` with d the distance to the
    nearer end, so that boundary powers are evaluated without cancellation.
    Each end collar is integrated in s = -log(d), turning algebraic boundary
    behaviour into exponential decay.
    """
    rho = _density_callable(spec, domain)
    width = min(1.0 / level, 0.5 * domain.diameter)
    total = 0.0
    for end, sign in ((domain.a, 1.0), (domain.b, -1.0)):
        def f(s, end=end, sign=sign):
            t = math.exp(-s)
            x = end + sign * t
            return float(probe(x, t)) ** 2 * float(rho(x, t)) * t

        val, _ = integrate.quad(f, -math.log(width), _S_MAX, limit=1000, epsabs=1e-15, epsrel=1e-10)
        # beyond d = e^{-S_MAX} the integrand is a pure power of d: add its exponential tail
        f1, f0 = f(_S_MAX), f(_S_MAX - 1.0)
        if f1 > 0 and f0 > f1:
            val += f1 / math.log(f0 / f1)
        total += val
    return total


def _discrete_collar(nu: DiscreteMeasure, probe: ConvexFn, level: int) -> float:
    mesh = nu.mesh
    n = mesh.dim
    cut = 1.0 / level
    atoms = np.where(mesh.node_dist <= cut, nu.atoms, 0.0)
    cells = np.where(mesh.cell_dist <= cut, nu.cells, 0.0)
    return DiscreteMeasure(mesh, atoms, cells).integrate_fn(probe, n + 1, sign=None)


def hardy_probes(epsilons):
    """u_eps = -sqrt(eps) (1 - x^2)^{1/2 + eps} on (-1, 1), as functions of (x, d)."""
    return [(lambda x, d, e=e: -math.sqrt(e) * (d * (2.0 - d)) ** (0.5 + e)) for e in epsilons]


def check_vanishing_mass(spec, probe_family, m_schedule, domain: Interval | None = None) -> CheckReport:
    """sup over probes of int_{dist <= 1/m} |v|^{n+1} dnu, per m; passes when the last value is below 1e-3.

    Probes are callables on an interval (continuum quadrature) or ConvexFn's
    on a common mesh, in which case ``spec`` may also be a DiscreteMeasure.
    """
    probes = list(probe_family)
    schedule = list(m_schedule)
    values = []
    if probes and isinstance(probes[0], ConvexFn):
        mesh = probes[0].mesh
        nu = spec if isinstance(spec, DiscreteMeasure) else realize(spec, mesh)
        for m in schedule:
            values.append(max(_discrete_collar(nu, p, m) for p in probes))
        desc = "discrete"
    else:
        dom = domain or Interval(-1.0, 1.0)
        for m in schedule:
            values.append(max(collar_integral(spec, p, m, dom) for p in probes))
        desc = spec.kind if isinstance(spec, MeasureSpec) else "density"
    lhs = values[-1]
    name = f"vanishing_mass[{desc}]"
    return CheckReport(name, lhs, VANISHING_LEVEL, 0.0, digest(values), {"levels": schedule, "values": values})


# --------------------------------------------------------------------------
# eigenvalue-side checks


def check_poincare(lam: float, nu: DiscreteMeasure, probes=None, tol: float = 1e-6) -> CheckReport:
    """Every probe's Rayleigh quotient is at least the computed eigenvalue."""
    probes = probe_family(nu.mesh) if probes is None else list(probes)
    vals = [rayleigh(v, nu) for v in probes]
    return CheckReport("poincare", lam, min(vals), tol * max(abs(lam), 1.0), digest(nu.cells, [lam]), {"values": vals})


_GL5 = np.polynomial.legendre.leggauss(5)


def check_reverse_aleksandrov(u: ConvexFn, w, lam: float, tol: float = 1e-6) -> CheckReport:
    """int mu_u^{1/n} |w|^n <= lam^{1/n} int |u| |w|^n dx for an eigenpair (w, lam), 1D meshes.

    ``w`` is a callable evaluating the eigenfunction.  In one dimension the
    measure enters linearly, so atoms of mu_u are used as they are.
    """
    mesh = u.mesh
    if mesh.kind != "pl1d":
        raise NotImplementedError("reverse Aleksandrov check is implemented on interval meshes")
    mu = ma_measure(u)
    x = mesh.nodes
    mids = mesh.cell_midpoints.ravel()
    lhs = float(mu.atoms @ np.abs(w(x)) + mu.cells @ np.abs(w(mids)))
    t, wt = _GL5
    x0, x1 = x[:-1], x[1:]
    half = 0.5 * (x1 - x0)
    pts = 0.5 * (x0 + x1)[:, None] + half[:, None] * t[None, :]
    lam_w = (t[None, :] + 1) / 2
    upts = u.values[:-1, None] * (1 - lam_w) + u.values[1:, None] * lam_w
    rhs = lam * float(np.sum(np.abs(upts) * np.abs(w(pts)) * wt[None, :] * half[:, None]))
    return CheckReport("reverse_aleksandrov", lhs, rhs, tol * max(abs(lhs), abs(rhs), 1e-300), digest(u.values, [lam]))


# --------------------------------------------------------------------------
# random instances


@functools.lru_cache(maxsize=None)
def _interval_mesh(n_nodes: int) -> Mesh:
    return interval_mesh(Interval(-1.0, 1.0), n_nodes)


@functools.lru_cache(maxsize=None)
def _disk_mesh(n: int) -> Mesh:
    return grid_mesh(Ball((0.0, 0.0), 1.0), n)


def random_mesh(rng, dim: int) -> Mesh:
    if dim == 1:
        return _interval_mesh(int(rng.choice([9, 17, 33, 65])))
    return _disk_mesh(int(rng.choice([9, 11, 13])))


def random_convex(mesh: Mesh, rng) -> ConvexFn:
    """Random zero-boundary convex function.

    Interval meshes: sums of cones with random apexes plus possibly a
    parabola.  Planar meshes: positive combinations of extreme functions of
    the cone of functions convex on the mesh triangulation (see
    :func:`triangulation_extremes`), so that all generated functions crease
    only along mesh edges and their sums stay on the same triangulation.
    """
    if mesh.kind == "grid2d":
        pool = triangulation_extremes(mesh)
        k = int(rng.integers(1, 5))
        idx = rng.choice(len(pool), size=k, replace=False)
        vals = sum(float(rng.uniform(0.2, 1.0)) * pool[i] for i in idx)
        vals = np.asarray(vals, dtype=float).copy()
        vals[mesh.boundary] = 0.0
        return ConvexFn(mesh, vals)
    interior = np.nonzero(mesh.interior)[0]
    vals = np.zeros(mesh.n_nodes)
    for _ in range(int(rng.integers(1, 4))):
        j = int(rng.choice(interior))
        vals += cone(mesh, apex=mesh.nodes[j], depth=float(rng.uniform(0.1, 1.0))).values
    if rng.random() < 0.5:
        vals += quadratic(mesh, float(rng.uniform(0.1, 1.0))).values
    vals[mesh.boundary] = 0.0
    return ConvexFn(mesh, vals)


def edge_convexity_rows(mesh: Mesh) -> np.ndarray:
    """Rows B with (B f)_e >= 0 iff the piecewise linear interpolant of f is convex across interior edge e.

    For triangles (a, b, c) and (a, b, d) sharing the edge ab, the row
    evaluates f(d) minus the affine extension of the plane through a, b, c.
    """
    cells = mesh.cells
    P = mesh.nodes
    edges = {}
    for t, tri in enumerate(cells):
        for k in range(3):
            a, b = sorted((int(tri[k]), int(tri[(k + 1) % 3])))
            edges.setdefault((a, b), []).append((t, int(tri[(k + 2) % 3])))
    rows = []
    for (a, b), adj in edges.items():
        if len(adj) != 2:
            continue
        c, d = adj[0][1], adj[1][1]
        M = np.array([[P[a, 0], P[b, 0], P[c, 0]], [P[a, 1], P[b, 1], P[c, 1]], [1.0, 1.0, 1.0]])
        lam = np.linalg.solve(M, np.array([P[d, 0], P[d, 1], 1.0]))
        row = np.zeros(mesh.n_nodes)
        row[d] += 1.0
        row[[a, b, c]] -= lam
        rows.append(row)
    return np.array(rows)


@functools.lru_cache(maxsize=None)
def _extremes_cached(key):
    mesh = _disk_mesh(key)
    return _compute_extremes(mesh, 24, SEED + key)


def triangulation_extremes(mesh: Mesh, size: int = 24, seed: int = SEED) -> list:
    """Vertices of {f convex on the mesh triangulation, f = 0 on the boundary, sum(-f w) = 1}.

    Each one is found by a linear program with a random objective; nodal
    values are rescaled to sup norm 1.
    """
    for n in (9, 11, 13, 17, 21):
        if _disk_mesh(n) is mesh:
            return _extremes_cached(n)
    return _compute_extremes(mesh, size, seed)


def _compute_extremes(mesh: Mesh, size: int, seed: int) -> list:
    from scipy.optimize import linprog

    rng = np.random.default_rng(seed)
    inner = np.nonzero(mesh.interior)[0]
    B = edge_convexity_rows(mesh)[:, inner]
    out = []
    attempts = 0
    while len(out) < size and attempts < 4 * size:
        attempts += 1
        w = rng.uniform(0.5, 1.5, len(inner))
        c = rng.normal(size=len(inner))
        res = linprog(c, A_ub=-B, b_ub=np.zeros(len(B)), A_eq=-w[None, :], b_eq=[1.0], bounds=(None, 0.0), method="highs")
        if res.status != 0:
            continue
        f = np.zeros(mesh.n_nodes)
        f[inner] = res.x
        f = convex_envelope(f, mesh).values.copy()
        f[mesh.boundary] = 0.0
        f /= max(np.max(np.abs(f)), 1e-300)
        if any(np.max(np.abs(f - g)) < 1e-9 for g in out):
            continue
        out.append(f)
    return out


def _pick_dim(rng, planar_share: float = 0.5) -> int:
    return 2 if rng.random() < planar_share else 1


def _interior_node(mesh, rng) -> int:
    return int(rng.choice(np.nonzero(mesh.interior)[0]))


def instance(check: str, rng):
    """Arguments for one randomized instance of ``check`` satisfying its hypotheses."""
    dim = _pick_dim(rng, 0.8 if check == "mixed_inequality" else 0.5)
    mesh = random_mesh(rng, dim)
    R = lambda: random_convex(mesh, rng)
    if check in ("aleksandrov", "energy_estimate"):
        return (R(), _interior_node(mesh, rng))
    if check == "aj":
        ut = R()
        return (ut + R(), ut, _interior_node(mesh, rng), float(rng.choice([0.0, 0.5, 1.0])))
    if check == "blocki_i":
        w = R()
        return (w + R() * float(rng.uniform(0.1, 1.0)), w, [R() for _ in range(dim)])
    if check == "blocki_ii":
        w = R()
        return (w + R() * float(rng.uniform(0.1, 1.0)), w, [R() for _ in range(dim)], [R() for _ in range(dim)])
    if check in ("cauchy_schwarz", "ibp"):
        return ([R() for _ in range(dim + 1)],)
    if check == "mixed_inequality":
        us = [R() for _ in range(dim)]
        areas = DiscreteMeasure(mesh, np.zeros(mesh.n_nodes), mesh.cell_volumes.copy()).interior_lumped()
        nu_atoms = areas * rng.uniform(0.5, 1.5, mesh.n_nodes)
        nu = DiscreteMeasure(mesh, nu_atoms, np.zeros(mesh.n_cells))
        fs = []
        for u in us:
            lu = ma_measure(u).interior_lumped()
            f = np.divide(lu, nu_atoms, out=np.zeros_like(lu), where=nu_atoms > 0)
            fs.append(f * rng.uniform(0.5, 1.0, mesh.n_nodes))
        return (us, fs, nu)
    if check == "comparison":
        return _comparison_instance(mesh, rng)
    if check == "domination":
        return _domination_instance(mesh, rng)
    raise KeyError(check)


def _comparison_instance(mesh, rng):
    n = mesh.dim
    # w solves mu_w = |w|^p nu exactly for nu = mu_w / |w|^p; scaling makes a sub/super pair
    w = random_convex(mesh, rng)
    p = float(rng.uniform(0.1, 0.9)) * n
    nu = realize(MeasureSpec.from_convex(w, p), mesh)
    c, C = float(rng.uniform(0.3, 0.95)), float(rng.uniform(1.05, 2.0))
    u = w * c
    psi = random_convex(mesh, rng)
    t = float(rng.uniform(0.0, 0.5))
    for _ in range(40):
        v = w * C + psi * t
        lv = ma_measure(v).interior_lumped()
        need = nu.weighted(np.abs(v.values) ** p, np.abs(v.at_midpoints()) ** p).interior_lumped()
        if np.all(need - lv <= 1e-12 * max(lv.sum(), 1e-300)):
            break
        t *= 0.5
    else:
        v = w * C
    return (u, v, p, nu)


def _domination_instance(mesh, rng):
    u = random_convex(mesh, rng)
    lumped = ma_measure(u).lumped()
    support = (lumped > 0) | mesh.boundary
    x = mesh.nodes
    if x.ndim == 1:
        slope = float(rng.normal())
        lin = slope * x
    else:
        slope = rng.normal(size=2)
        lin = x @ slope
    b = float(np.min((u.values - lin)[support])) - float(rng.uniform(0.0, 0.1))
    ell = lin + b
    v = np.maximum(u.values - float(rng.uniform(0.0, 0.2)), ell)
    return (u, ConvexFn(mesh, v))


CHECKS = {
    "aleksandrov": check_aleksandrov,
    "energy_estimate": check_energy_estimate,
    "aj": check_aj,
    "blocki_i": check_blocki_i,
    "blocki_ii": check_blocki_ii,
    "cauchy_schwarz": check_cauchy_schwarz,
    "ibp": check_ibp,
    "mixed_inequality": check_mixed_inequality,
    "comparison": check_comparison,
    "domination": check_domination,
}


def _rng(seed: int, check: str, trial: int):
    tag = sum((i + 1) * ord(ch) for i, ch in enumerate(check))
    return np.random.default_rng([seed, tag, trial])


def run_randomized(check: str, trials: int, seed: int = SEED) -> list:
    """``trials`` independent instances of one check; each instance has its own seeded stream."""
    fn = CHECKS[check]
    return [fn(*instance(check, _rng(seed, check, k))) for k in range(trials)]


# --------------------------------------------------------------------------
# equality cases


def equality_cases() -> list:
    """Checks evaluated on inputs where both sides coincide."""
    m1 = _interval_mesh(33)
    m2 = _disk_mesh(11)
    out = []
    for mesh in (m1, m2):
        u = cone(mesh)
        q = quadratic(mesh)
        zero = ConvexFn(mesh, np.zeros(mesh.n_nodes))
        n = mesh.dim
        out.append(check_aleksandrov(zero, _interior_node(mesh, np.random.default_rng(0))))
        out.append(check_ibp([u] + [q] * (n - 1) + [u]))
        out.append(check_cauchy_schwarz([q] * (n + 1)))
        out.append(check_blocki_i(u, u, [q] * n))
        out.append(check_blocki_ii(u + q, u, [q] * n, [q] * n))
        out.append(check_domination(u, u))
        lu = ma_measure(q).interior_lumped()
        nu = DiscreteMeasure(mesh, lu, np.zeros(mesh.n_cells))
        out.append(check_mixed_inequality([q] * n, [np.where(lu > 0, 1.0, 0.0)] * n, nu))
        w = q
        p = 0.5 * n
        nuw = realize(MeasureSpec.from_convex(w, p), mesh)
        out.append(check_comparison(w, w, p, nuw))
    return out


# --------------------------------------------------------------------------
# envelope pairs


def envelope_pairs() -> list:
    """Twenty fixed (u, v) pairs on interval and disk meshes, the first being v = u."""
    m = _interval_mesh(101)
    x = m.nodes
    pairs = [(cone(m), cone(m))]
    pairs.append((quadratic(m), _hat(m, 0.0, 0.5)))
    pairs.append((cone(m), cone(m, depth=3.0)))
    pairs.append((cone(m), cone(m, apex=0.3, depth=2.0)))
    pairs.append((quadratic(m), cone(m, apex=-0.4)))
    pairs.append((quadratic(m, 2.0), quadratic(m)))
    pairs.append((cone(m, apex=-0.5), quadratic(m)))
    pairs.append((cone(m) + quadratic(m), cone(m, apex=0.7)))
    pairs.append((ConvexFn(m, x**4 - 1), cone(m, apex=0.2)))
    pairs.append((ConvexFn(m, x**4 - 1), _hat(m, 0.5, 0.3)))
    pairs.append((quadratic(m), _hat(m, -0.6, 0.2)))
    pairs.append((cone(m, apex=0.1) + cone(m, apex=-0.3), quadratic(m, 0.5)))
    rng = np.random.default_rng(SEED)
    for _ in range(3):
        pairs.append((random_convex(m, rng), random_convex(m, rng)))
    d = _disk_mesh(13)
    pairs.append((cone(d), cone(d)))
    pairs.append((quadratic(d), quadratic(d)))
    pairs.append((quadratic(d), cone(d)))
    pairs.append((cone(d), quadratic(d, 0.5)))
    pairs.append((quadratic(d) + cone(d), cone(d, apex=(0.2, 0.1))))
    return pairs


def _hat(mesh: Mesh, center: float, radius: float) -> ConvexFn:
    """Negative hat -max(0, 1 - |x - c|/r) made convex by taking its envelope."""
    x = mesh.nodes
    return convex_envelope(-np.maximum(0.0, 1.0 - np.abs(x - center) / radius), mesh)


# --------------------------------------------------------------------------
# suites


SUITES = {
    "maxprin": ("aleksandrov", "energy_estimate", "aj", "comparison", "domination"),
    "blocki": ("blocki_i", "blocki_ii"),
    "energy": ("cauchy_schwarz", "ibp", "mixed_inequality"),
}


def _eigen_cert_reports(trials: int) -> list:
    from .oracles import hardy_family, lebesgue_1d_eigen
    from .geometry import graded_interval_mesh
    from .measures import truncate

    mesh = graded_interval_mesh(Interval(-1.0, 1.0), 2001, 2.0)
    nu = truncate(realize(MeasureSpec.hardy(2.0), mesh), 64)
    lin = _interval_mesh(401)
    leb = realize(MeasureSpec.lebesgue(), lin)
    eig = lebesgue_1d_eigen()
    makers = []
    for a in (0.0, 0.1, 0.25, 0.4):
        case = hardy_family(a)
        makers.append(lambda case=case: _named(subeigen_certificate(case.lam - 1e-3, ConvexFn(mesh, case.u(mesh.nodes)), nu), f"subeigen[alpha={case.params['alpha']}]"))
    makers.append(lambda: check_poincare(eig.lam * (1 - 1e-4), leb))
    rng_base = SEED
    makers.append(None)
    out = []
    for k in range(trials):
        mk = makers[k % len(makers)]
        if mk is None:
            rng = _rng(rng_base, "reverse_aleksandrov", k)
            out.append(check_reverse_aleksandrov(random_convex(lin, rng), lambda x: np.cos(np.pi * np.asarray(x) / 2), eig.lam))
        else:
            out.append(mk())
    return out


def _named(rep: CheckReport, name: str) -> CheckReport:
    rep.name = name
    return rep


def _vanishing_reports(trials: int) -> list:
    from .oracles import radial_alpha

    sched = [2, 4, 8, 16, 32, 64, 128, 256]
    eps = [1.0 / m for m in sched] + [0.25]
    probes = hardy_probes(eps)
    w = radial_alpha(1, 0.75)
    mu_w = lambda x, d: float(w.density(1.0 - d, d))
    makers = [
        lambda: check_vanishing_mass(MeasureSpec.lebesgue(), probes, sched),
        lambda: _named(check_vanishing_mass(mu_w, probes, sched), "vanishing_mass[mu_w]"),
        lambda: _expect_fail(check_vanishing_mass(MeasureSpec.hardy(2.0), probes, sched)),
    ]
    cache = {}
    out = []
    for k in range(trials):
        j = k % len(makers)
        if j not in cache:
            cache[j] = makers[j]()
        out.append(cache[j])
    return out


def _expect_fail(rep: CheckReport) -> CheckReport:
    rep.details["expect_pass"] = False
    return rep


def run_suite(name: str, trials: int = 200, seed: int = SEED) -> list:
    """``trials`` reports for a named suite, cycling through its checks."""
    if name in SUITES:
        names = SUITES[name]
        out = []
        for k in range(trials):
            c = names[k % len(names)]
            out.append(CHECKS[c](*instance(c, _rng(seed, c, k // len(names)))))
        return out
    if name == "envelope":
        pairs = envelope_pairs()
        return [check_envelope_derivative(*pairs[k % len(pairs)]) for k in range(trials)]
    if name == "eigen-cert":
        return _eigen_cert_reports(trials)
    if name == "vanishing":
        return _vanishing_reports(trials)
    raise KeyError(f"unknown suite {name!r}")


SUITE_NAMES = ("maxprin", "blocki", "energy", "envelope", "eigen-cert", "vanishing")


def as_expected(rep: CheckReport) -> bool:
    return rep.passed == rep.details.get("expect_pass", True)
