"""Aleksandrov solutions of mu_u = nu and mu_u = |u|^p nu on the three backends."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix, diags
from scipy.sparse.linalg import spsolve

from .convex import (
    ConvexFn,
    DiscreteMeasure,
    ShapeError,
    _polygon_areas,
    convex_envelope,
    energy,
    hull_jacobian,
    lower_hull,
    ma_measure,
)
from .geometry import Mesh, _pow_diff, unit_ball_volume
from .ledger import ConsistencyError, IterationLedger, IterationLimitError
from .measures import INFINITE, MeasureSpec, realize, truncate, weighted_mass


class PreconditionError(ValueError):
    pass


# audited constants for |u(x0)|^n <= C diam^{n-1} dist(x0) mu(Omega) and relatives
ALEKSANDROV_CONSTANT = {1: 1.0, 2: 4.0}


def aleksandrov_constant(n: int) -> float:
    if n not in ALEKSANDROV_CONSTANT:
        raise ValueError(f"no audited constant in dimension {n}")
    return ALEKSANDROV_CONSTANT[n]


@dataclass
class DirichletProblem:
    """mu_u = nu in the domain of ``mesh``, u = phi on its boundary nodes.

    ``phi`` is None (zero data), a constant, a callable of node coordinates,
    or an array of values on the boundary nodes (in mesh order).
    """

    mesh: Mesh
    nu: DiscreteMeasure
    phi: object = None

    def __post_init__(self):
        if not self.nu.mesh.same_as(self.mesh):
            raise ShapeError("measure and problem live on different meshes")
        if not (np.isfinite(self.nu.total)):
            raise PreconditionError("measure must have finite total mass")

    @property
    def domain(self):
        return self.mesh.domain

    @property
    def backend(self) -> str:
        return {"pl1d": "pl1d", "radial": "radial", "grid2d": "op2d"}[self.mesh.kind]

    def boundary_values(self) -> np.ndarray:
        mesh = self.mesh
        b = np.nonzero(mesh.boundary)[0]
        if self.phi is None:
            return np.zeros(len(b))
        if np.isscalar(self.phi):
            return np.full(len(b), float(self.phi))
        if callable(self.phi):
            return np.asarray(self.phi(mesh.nodes[b]), dtype=float).reshape(len(b))
        vals = np.asarray(self.phi, dtype=float)
        if vals.shape != (len(b),):
            raise ShapeError("boundary data does not match the boundary nodes")
        return vals


@dataclass
class SolveReport:
    solution: ConvexFn
    residual: float
    iterations: int
    ledger: IterationLedger
    info: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# 1D


def green_apply(x, w, a, b):
    """u_i = sum_j G(x_i, x_j) w_j with G(x,y) = (min-a)(b-max)/(b-a), in O(N)."""
    s1 = np.cumsum((x - a) * w)
    s2 = np.concatenate([np.cumsum(((b - x) * w)[::-1])[::-1][1:], [0.0]])
    return ((b - x) * s1 + (x - a) * s2) / (b - a)


def _solve_pl1d(problem: DirichletProblem):
    mesh = problem.mesh
    x = mesh.nodes
    a, b = x[0], x[-1]
    phi = problem.boundary_values()
    target = problem.nu.lumped()
    target[mesh.boundary] = 0.0
    lin = phi[0] + (phi[1] - phi[0]) * (x - a) / (b - a)
    u = lin - green_apply(x, target, a, b)
    u[0], u[-1] = phi[0], phi[1]
    return ConvexFn(mesh, u), target


# --------------------------------------------------------------------------
# radial

_GL8 = np.polynomial.legendre.leggauss(8)


def _radial_masses(nu: DiscreteMeasure):
    """Origin atom and shell masses, with atoms on inner spheres spread into the adjacent shells."""
    mesh = nu.mesh
    shells = nu.cells.copy()
    a = nu.atoms
    if np.any(a[1:] != 0):
        shells[:-1] += 0.5 * a[1:-1]
        shells[1:] += 0.5 * a[1:-1]
        shells[-1] += a[-1]
    return float(a[0]), shells


def _solve_radial(problem: DirichletProblem):
    mesh = problem.mesh
    n = mesh.dim
    wn = unit_ball_volume(n)
    g = mesh.gap
    R = mesh.nodes[-1] + g[-1]
    phi = problem.boundary_values()[0]
    atom0, shells = _radial_masses(problem.nu)
    F = atom0 + np.concatenate([[0.0], np.cumsum(shells)])
    slopes = (np.maximum(F, 0.0) / wn) ** (1.0 / n)
    # integrate W' over each shell in gap coordinates
    t, w = _GL8
    g0, g1 = g[:-1], g[1:]
    half = 0.5 * (g0 - g1)
    gq = 0.5 * (g0 + g1)[:, None] + half[:, None] * t[None, :]
    denom = _pow_diff(g1, g0, R, n)
    frac = np.where(denom[:, None] > 0, _pow_diff(gq, g0[:, None], R, n) / np.where(denom > 0, denom, 1.0)[:, None], 0.0)
    Fq = F[:-1, None] + shells[:, None] * frac
    integ = np.sum((np.maximum(Fq, 0.0) / wn) ** (1.0 / n) * w[None, :], axis=1) * half
    W = phi - np.concatenate([np.cumsum(integ[::-1])[::-1], [0.0]])
    target_atoms = np.zeros(mesh.n_nodes)
    target_atoms[0] = atom0
    return ConvexFn(mesh, W, slopes), DiscreteMeasure(mesh, target_atoms, shells)


# --------------------------------------------------------------------------
# planar


def boundary_envelope(mesh: Mesh, phi_b: np.ndarray) -> np.ndarray:
    """Largest discretely convex function with the given boundary values."""
    vals = np.empty(mesh.n_nodes)
    vals[mesh.boundary] = phi_b
    vals[mesh.interior] = float(np.max(phi_b)) + 1.0 + float(np.ptp(phi_b))
    env = convex_envelope(vals, mesh).values
    if np.max(np.abs(env[mesh.boundary] - phi_b)) > 1e-10 * (np.ptp(phi_b) + 1.0):
        raise PreconditionError("boundary data is not the trace of a convex function")
    return env


def _cell_areas(mesh: Mesh, values):
    hd = lower_hull(mesh.nodes, values)
    if hd.flat:
        return hd, np.zeros(mesh.n_nodes)
    F = len(hd.simplices)
    areas = _polygon_areas(hd.simplices.ravel(), hd.grads[np.repeat(np.arange(F), 3)], mesh.n_nodes)
    areas = np.where(hd.is_vertex, areas, 0.0)
    areas[mesh.boundary] = 0.0
    return hd, areas


def _initial_guess(mesh: Mesh, env, target_total, scale):
    dom = mesh.domain
    c = np.asarray(dom.center, dtype=float)
    r2 = np.sum((mesh.nodes - c) ** 2, axis=1)
    R2 = float(np.max(r2[mesh.boundary]))
    area = float(mesh.cell_volumes.sum())
    k = scale * math.sqrt(max(target_total, 1e-300) / (4.0 * area))
    u = env + k * (r2 - R2)
    u[mesh.boundary] = env[mesh.boundary]
    return u


def _solve_op2d(problem: DirichletProblem, tol, max_iter, init_scale=1.0, ledger=None):
    mesh = problem.mesh
    phi_b = problem.boundary_values()
    env = boundary_envelope(mesh, phi_b)
    target = problem.nu.lumped()
    target[mesh.boundary] = 0.0
    I = np.nonzero(mesh.interior)[0]
    pos = target[I] > 0
    if target.sum() <= 0:
        return ConvexFn(mesh, env), target, 0, 0.0
    u = _initial_guess(mesh, env, target.sum(), init_scale)
    N = mesh.n_nodes
    hd, areas = _cell_areas(mesh, u)
    res_vec = areas[I] - target[I]
    res = float(np.max(np.abs(res_vec)))
    it = 0
    while True:
        rows, cols, w = hull_jacobian(mesh, hd)
        J = coo_matrix(
            (np.concatenate([w, w, -w, -w]), (np.concatenate([rows, cols, rows, cols]), np.concatenate([cols, rows, rows, cols]))),
            shape=(N, N),
        ).tocsr()[I][:, I]
        reg = 1e-12 * float(np.max(np.abs(J.diagonal())) + 1e-300)
        J = J - diags(np.full(len(I), reg))
        delta = spsolve(J.tocsc(), -res_vec)
        step = float(np.max(np.abs(delta)))
        # stop on a small residual and a small predicted correction
        if res <= tol and step <= tol:
            break
        if it >= max_iter:
            raise IterationLimitError(f"op2d did not reach residual {tol:.1e} (at {res:.3e})", ledger)
        norm0 = float(np.linalg.norm(res_vec))
        tau = 1.0
        for _ in range(40):
            trial = u.copy()
            trial[I] += tau * delta
            hd_t, areas_t = _cell_areas(mesh, trial)
            rv = areas_t[I] - target[I]
            if np.all(areas_t[I][pos] > 0) and np.linalg.norm(rv) <= (1.0 - 0.25 * tau) * norm0:
                break
            tau *= 0.5
        else:
            if res <= tol:
                break
            raise IterationLimitError("op2d line search failed", ledger)
        u = trial
        u[I] = np.minimum(u[I], convex_envelope(u, mesh).values[I])
        hd, areas = _cell_areas(mesh, u)
        res_vec = areas[I] - target[I]
        res = float(np.max(np.abs(res_vec)))
        it += 1
        if ledger is not None:
            ledger.append(step=it, residual=res, damping=tau, sup_change=tau * step)
    return ConvexFn(mesh, u), target, it, res


# --------------------------------------------------------------------------
# public solvers


def solve_dirichlet(problem: DirichletProblem, tol: float = 1e-10, max_iter: int = 60, init_scale: float = 1.0) -> SolveReport:
    """Solve mu_u = nu with u = phi on the boundary.

    pl1d: exact Green's function solve with nu lumped to nodes (cell masses
    split equally between the two cell ends); the output is the exact PL
    solution for the lumped measure.  radial: exact slopes W'(r) =
    (nu(B_r)/|B_1|)^{1/n} with shell mass uniform in volume, integrated by
    Gauss-Legendre per shell.  op2d: nodal values with subgradient-cell areas
    equal to the lumped target, found by damped Newton on the cell areas.
    ``tol`` is an absolute bound on the max nodal residual.
    """
    mesh = problem.mesh
    ledger = IterationLedger(("step", "residual", "damping", "sup_change"))
    if mesh.kind == "pl1d":
        u, target = _solve_pl1d(problem)
        mu = ma_measure(u)
        res = float(np.max(np.abs(mu.atoms - target)))
        ledger.append(step=1, residual=res, damping=1.0, sup_change=u.sup_norm())
        return SolveReport(u, res, 1, ledger, {"backend": "pl1d"})
    if mesh.kind == "radial":
        u, target = _solve_radial(problem)
        mu = ma_measure(u)
        res = float(max(np.max(np.abs(mu.atoms - target.atoms)), np.max(np.abs(mu.cells - target.cells))))
        ledger.append(step=1, residual=res, damping=1.0, sup_change=u.sup_norm())
        return SolveReport(u, res, 1, ledger, {"backend": "radial"})
    u, target, it, res = _solve_op2d(problem, tol, max_iter, init_scale, ledger)
    return SolveReport(u, res, it, ledger, {"backend": "op2d"})


def solve(mesh: Mesh, nu: DiscreteMeasure, phi=None, **kw) -> ConvexFn:
    return solve_dirichlet(DirichletProblem(mesh, nu, phi), **kw).solution


def _measure_of(spec_or_nu, mesh):
    if isinstance(spec_or_nu, DiscreteMeasure):
        return spec_or_nu
    return realize(spec_or_nu, mesh)


def default_schedule():
    return [2**k for k in range(1, 9)]


def cauchy_flag(gaps, threshold: float = 0.9) -> bool:
    """True when the last successive sup-gaps contract (or vanish)."""
    g = [x for x in gaps if x is not None]
    if len(g) < 2:
        return True
    tail = g[-3:]
    for a, b in zip(tail[:-1], tail[1:]):
        if b == 0.0:
            continue
        if a == 0.0 or b / a > threshold:
            return False
    return True


def solve_dirichlet_singular(mesh: Mesh, spec, phi=None, m_schedule=None, tol: float = 1e-10, stop_early: bool = False) -> SolveReport:
    """Monotone truncation: solve mu_u = nu_m for each m and track sup-gaps.

    Comparison forces u_m >= u_m' for m <= m'; a violation beyond 1e-9
    raises :class:`ConsistencyError`.  ``info`` carries the gaps, whether they
    contract (``cauchy``), the weighted mass, and the bound
    ||(phi - u)^+||^n <= C diam^{n-1} int dist dnu.
    """
    nu = _measure_of(spec, mesh)
    schedule = list(m_schedule or default_schedule())
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("m_schedule must be strictly increasing")
    wm = weighted_mass(nu, 1.0)
    if wm == INFINITE:
        warnings.warn("int dist dnu appears infinite; truncated solves need not converge", RuntimeWarning, stacklevel=2)
    ledger = IterationLedger(("m", "sup_gap", "residual", "energy"))
    prev = None
    gaps = []
    report = None
    zero_data = phi is None or (np.isscalar(phi) and float(phi) == 0.0)
    for m in schedule:
        report = solve_dirichlet(DirichletProblem(mesh, truncate(nu, m), phi), tol=tol)
        u = report.solution
        gap = None
        if prev is not None:
            diff = u.values - prev.values
            if np.max(diff) > 1e-9 * max(1.0, prev.sup_norm()):
                raise ConsistencyError(f"truncated solutions not monotone at m={m}", ledger)
            gap = float(np.max(np.abs(diff)))
            gaps.append(gap)
        en = energy(u) if zero_data else float("nan")
        ledger.append(m=m, sup_gap=float("nan") if gap is None else gap, residual=report.residual, energy=en)
        prev = u
        if stop_early and gap is not None and gap < tol:
            break
    n = mesh.dim
    phi_ext = (
        np.zeros(mesh.n_nodes)
        if zero_data
        else (np.full(mesh.n_nodes, float(phi)) if np.isscalar(phi) else boundary_envelope(mesh, DirichletProblem(mesh, nu, phi).boundary_values()))
    )
    lhs = float(np.max(np.maximum(phi_ext - prev.values, 0.0))) ** n
    diam = mesh.domain.diameter
    rhs = aleksandrov_constant(n) * diam ** (n - 1) * (wm if wm != INFINITE else math.inf) if n in ALEKSANDROV_CONSTANT else math.nan
    info = {
        "gaps": gaps,
        "cauchy": cauchy_flag(gaps),
        "weighted_mass": wm,
        "estimate_lhs": lhs,
        "estimate_rhs": rhs,
        "estimate_holds": bool(lhs <= rhs * (1 + 1e-9)),
    }
    return SolveReport(report.solution, report.residual, len(ledger), ledger, info)


def _power_rhs(u: ConvexFn, nu: DiscreteMeasure, p: float) -> DiscreteMeasure:
    return nu.weighted(np.abs(u.values) ** p, np.abs(u.at_midpoints()) ** p)


def power_residual(u: ConvexFn, nu: DiscreteMeasure, p: float, lam: float = 1.0) -> float:
    """max nodal |mu_u - lam |u|^p nu| with the measure lumped to interior nodes."""
    mu = ma_measure(u)
    rhs = _power_rhs(u, nu, p).scaled(lam)
    if u.mesh.kind == "radial":
        _, shells = _radial_masses(rhs)
        return float(max(abs(mu.atoms[0] - rhs.atoms[0]), np.max(np.abs(mu.cells - shells))))
    return float(np.max(np.abs(mu.lumped() - rhs.interior_lumped())[u.mesh.interior]))


def solve_power(mesh: Mesh, spec, p: float, tol: float = 1e-12, max_iter: int = 500, phi=None) -> SolveReport:
    """Nonzero solution of mu_u = |u|^p nu for 0 < p < n (zero boundary data).

    Fixed-point iteration u <- solve(|u|^p nu).  The map is order preserving,
    so starting from c*w (w solves mu_w = nu, c small enough that one step
    goes down) the iterates decrease monotonically to the solution.
    """
    n = mesh.dim
    if not (0.0 < p < n):
        raise ValueError(f"power p must lie in (0, {n})")
    nu = _measure_of(spec, mesh)
    if weighted_mass(nu, 1.0) == INFINITE:
        raise PreconditionError("int dist dnu is infinite")
    w = solve(mesh, nu, tol=tol)
    c = 1.0
    for _ in range(60):
        u = w.scaled(c)
        nxt = solve(mesh, _power_rhs(u, nu, p), tol=tol)
        if np.all(nxt.values <= u.values + 1e-14 * c * w.sup_norm()):
            break
        c *= 0.1
    else:
        raise ConsistencyError("no admissible starting multiple found")
    ledger = IterationLedger(("step", "sup_norm", "sup_change", "residual"))
    u = nxt
    it = 1
    for it in range(1, max_iter + 1):
        nxt = solve(mesh, _power_rhs(u, nu, p), tol=tol)
        change = float(np.max(np.abs(nxt.values - u.values)))
        if np.max(nxt.values - u.values) > 1e-9 * max(u.sup_norm(), 1e-300):
            raise ConsistencyError(f"power iteration lost monotonicity at step {it}", ledger)
        u = nxt
        ledger.append(step=it, sup_norm=u.sup_norm(), sup_change=change, residual=float("nan"))
        if change <= tol * max(u.sup_norm(), 1.0):
            break
    else:
        raise IterationLimitError("power iteration did not converge", ledger)
    res = power_residual(u, nu, p)
    ledger.rows[-1]["residual"] = res
    # a priori bound |u|^{n-p} <= C diam^{n-1} int dist dnu
    upper = math.nan
    if n in ALEKSANDROV_CONSTANT:
        upper = (aleksandrov_constant(n) * mesh.domain.diameter ** (n - 1) * weighted_mass(nu, 1.0)) ** (1.0 / (n - p))
    info = {"start_multiple": c, "lower_bound": w.scaled(c).sup_norm(), "upper_bound": upper, "p": p}
    return SolveReport(u, res, it, ledger, info)
