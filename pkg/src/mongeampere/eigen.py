"""Rayleigh quotients, inverse iteration for mu_u = lambda |u|^n nu, and related probes."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .convex import ConvexFn, DiscreteMeasure, ShapeError, cone, convex_envelope, energy, ma_measure, quadratic
from .dirichlet import PreconditionError, _radial_masses, solve
from .geometry import Ball, Interval, Mesh
from .ledger import CheckReport, ConsistencyError, IterationLedger, IterationLimitError, digest
from .measures import INFINITE, MeasureSpec, realize, truncate, weighted_mass

LEDGER_COLUMNS = ("step", "energy", "norm", "rayleigh", "residual", "sup_change")
POINCARE_FLOOR = 1e-8


class DegenerateInputError(ValueError):
    pass


@dataclass
class EigenResult:
    lam: float
    eigenfunction: ConvexFn
    ledger: IterationLedger
    residual: float
    iterations: int
    ladder: list = field(default_factory=list)
    certificate_slack: float = math.nan


def _denominator(u: ConvexFn, nu: DiscreteMeasure, power: float) -> float:
    return nu.integrate_fn(u, power, sign=None)


def rayleigh(u: ConvexFn, nu: DiscreteMeasure) -> float:
    """E(u) / int |u|^{n+1} dnu."""
    if not u.mesh.same_as(nu.mesh):
        raise ShapeError("function and measure live on different meshes")
    den = _denominator(u, nu, u.dim + 1)
    if not den > 0:
        raise DegenerateInputError("int |u|^{n+1} dnu vanishes")
    return energy(u) / den


def eigen_residual(u: ConvexFn, nu: DiscreteMeasure, lam: float, power: float | None = None) -> float:
    """max nodal |mu_u - lam |u|^power nu| (power defaults to n), lumped to interior nodes."""
    power = u.dim if power is None else power
    mu = ma_measure(u)
    rhs = nu.weighted(np.abs(u.values) ** power, np.abs(u.at_midpoints()) ** power).scaled(lam)
    if u.mesh.kind == "radial":
        a0, shells = _radial_masses(rhs)
        return float(max(abs(mu.atoms[0] - a0), np.max(np.abs(mu.cells - shells))))
    return float(np.max(np.abs(mu.lumped() - rhs.interior_lumped())[u.mesh.interior]))


# --------------------------------------------------------------------------
# Poincare probe


def _bump_envelope(mesh: Mesh, center, radius):
    if mesh.kind == "radial":
        x = mesh.nodes
        b = np.maximum(0.0, 1.0 - (x / radius) ** 2)
        return convex_envelope(-b, mesh)
    x = mesh.nodes
    d2 = (x - center) ** 2 if x.ndim == 1 else np.sum((x - np.asarray(center)) ** 2, axis=1)
    b = np.maximum(0.0, 1.0 - d2 / radius**2)
    b[mesh.boundary] = 0.0
    return convex_envelope(-b, mesh)


def probe_family(mesh: Mesh) -> list:
    """Eight fixed zero-boundary convex functions used by the Poincare probe.

    Two cones, two parabola-like profiles, two asymmetric wedges (off-center
    cones) and two envelopes of inverted bumps.  Radial meshes replace the
    off-center functions by radial power profiles.
    """
    dom = mesh.domain
    out = [cone(mesh), quadratic(mesh)]
    if mesh.kind == "radial":
        R = mesh.nodes[-1] + mesh.gap[-1]
        r, g = mesh.nodes, mesh.gap
        prof = g * (2 * R - g)
        out.append(cone(mesh, depth=2.0))
        out.append(ConvexFn(mesh, -np.sqrt(prof)))
        out.append(ConvexFn(mesh, (r**4 - R**4) / R**4))
        out.append(ConvexFn(mesh, -(prof / R**2) ** 0.75))
        out.append(_bump_envelope(mesh, 0.0, 0.5 * R))
        out.append(_bump_envelope(mesh, 0.0, 0.8 * R))
        return out
    if isinstance(dom, Interval):
        c, hw = dom.center, 0.5 * dom.diameter
        out.append(cone(mesh, apex=c - 0.5 * hw))
        x = mesh.nodes
        prof = np.maximum((x - dom.a) * (dom.b - x), 0.0) / hw**2
        out.append(ConvexFn(mesh, -np.sqrt(prof)))
        out.append(cone(mesh, apex=c + 0.6 * hw))
        out.append(cone(mesh, apex=c - 0.8 * hw, depth=0.5))
        out.append(_bump_envelope(mesh, c - 0.3 * hw, 0.4 * hw))
        out.append(_bump_envelope(mesh, c + 0.4 * hw, 0.3 * hw))
        return out
    c = np.asarray(dom.center, dtype=float)
    hw = 0.5 * dom.diameter
    if isinstance(dom, Ball):
        r2 = np.sum((mesh.nodes - c) ** 2, axis=1)
        prof = np.maximum(dom.radius**2 - r2, 0.0) / dom.radius**2
        out.append(ConvexFn(mesh, -np.sqrt(prof)))
    else:
        out.append(cone(mesh, depth=2.0))
    e = np.array([1.0, 0.0])
    f = np.array([0.0, 1.0])
    out.append(cone(mesh, apex=c + 0.3 * hw * e))
    out.append(cone(mesh, apex=c - 0.3 * hw * f, depth=0.5))
    out.append(_bump_envelope(mesh, c - 0.2 * hw * e, 0.4 * hw))
    out.append(_bump_envelope(mesh, c + 0.25 * hw * f, 0.3 * hw))
    return out


def poincare_probe(nu: DiscreteMeasure, floor: float = POINCARE_FLOOR) -> CheckReport:
    """min over the probe family of the Rayleigh quotient, against ``floor``."""
    vals = []
    for v in probe_family(nu.mesh):
        den = _denominator(v, nu, v.dim + 1)
        vals.append(math.inf if den <= 0 else energy(v) / den)
    worst = min(vals)
    return CheckReport("poincare_probe", floor, worst, 0.0, digest(nu.atoms, nu.cells), {"values": vals})


# --------------------------------------------------------------------------
# inverse iteration


def _scheme_rhs(u: ConvexFn, nu: DiscreteMeasure, factor: float) -> DiscreteMeasure:
    n = u.dim
    return nu.weighted(np.abs(u.values) ** n, np.abs(u.at_midpoints()) ** n).scaled(factor)


def inverse_iterate(u0: ConvexFn, nu: DiscreteMeasure, tol: float = 1e-10, max_k: int = 5000, check_probe: bool = True, slack: float = 1e-9) -> EigenResult:
    """Inverse iterative scheme mu_{u_{k+1}} = R(u_k) |u_k|^n nu, without renormalization.

    Stops when successive Rayleigh quotients differ by less than ``tol``
    (relative to max(1, R)).  The ledger must show E and the L^{n+1}(nu) norm
    nondecreasing and R nonincreasing up to ``slack``; otherwise
    :class:`ConsistencyError` is raised.
    """
    if not u0.mesh.same_as(nu.mesh):
        raise ShapeError("initial function and measure live on different meshes")
    if check_probe:
        rep = poincare_probe(nu)
        if not rep.passed:
            raise PreconditionError(f"Poincare probe failed: min Rayleigh quotient {rep.rhs:.3e}")
    n = u0.dim
    ledger = IterationLedger(LEDGER_COLUMNS)
    u = u0
    R = rayleigh(u, nu)
    ledger.append(step=0, energy=energy(u), norm=_denominator(u, nu, n + 1) ** (1 / (n + 1)), rayleigh=R, residual=math.nan, sup_change=math.nan)
    k = 0
    while True:
        if k >= max_k:
            raise IterationLimitError("inverse iteration did not converge", ledger)
        nxt = solve(u.mesh, _scheme_rhs(u, nu, R))
        k += 1
        R_next = rayleigh(nxt, nu)
        ledger.append(
            step=k,
            energy=energy(nxt),
            norm=_denominator(nxt, nu, n + 1) ** (1 / (n + 1)),
            rayleigh=R_next,
            residual=eigen_residual(nxt, nu, R_next),
            sup_change=float(np.max(np.abs(nxt.values - u.values))),
        )
        done = abs(R_next - R) < tol * max(1.0, abs(R))
        u, R = nxt, R_next
        if done:
            break
    for col, direction in (("energy", "up"), ("norm", "up"), ("rayleigh", "down")):
        bad = ledger.check_monotone(col, direction, slack)
        if bad is not None:
            raise ConsistencyError(f"{col} not monotone at step {bad}", ledger)
    ef = u.scaled(1.0 / u.sup_norm())
    return EigenResult(R, ef, ledger, eigen_residual(ef, nu, R), k)


def aitken_limit(values) -> float:
    """Aitken delta-squared extrapolation of the last three values."""
    v = [float(x) for x in values]
    if len(v) < 3:
        return v[-1]
    a, b, c = v[-3:]
    d1, d2 = b - a, c - b
    den = d2 - d1
    scale = max(abs(a), abs(b), abs(c), 1e-300)
    if abs(d1) <= 1e-12 * scale or abs(d2) <= 1e-12 * scale or abs(den) <= 1e-14 * scale:
        return c
    return c - d2 * d2 / den


@dataclass
class Ladder:
    levels: list  # (m, lambda_m, iterations, residual)
    limit: float
    results: dict = field(default_factory=dict)

    @property
    def lambdas(self):
        return [row[1] for row in self.levels]


def eigen_ladder(mesh: Mesh, spec, m_schedule, tol: float = 1e-10, max_k: int = 5000, u0: ConvexFn | None = None) -> Ladder:
    """lambda_m for the truncated measures nu_m, checked nonincreasing, plus an Aitken limit."""
    nu = spec if isinstance(spec, DiscreteMeasure) else realize(spec, mesh)
    schedule = list(m_schedule)
    levels, results = [], {}
    start = cone(mesh) if u0 is None else u0
    for m in schedule:
        nu_m = truncate(nu, m)
        if nu_m.total <= 0:
            warnings.warn(f"truncated measure at m={m} is zero; level skipped", RuntimeWarning, stacklevel=2)
            continue
        try:
            res = inverse_iterate(start, nu_m, tol=tol, max_k=max_k)
        except PreconditionError as exc:
            warnings.warn(f"level m={m} skipped: {exc}", RuntimeWarning, stacklevel=2)
            continue
        levels.append((m, res.lam, res.iterations, res.residual))
        results[m] = res
        start = res.eigenfunction
    lams = [row[1] for row in levels]
    for k in range(1, len(lams)):
        if lams[k] > lams[k - 1] + 1e-8 * max(1.0, abs(lams[k - 1])):
            raise ConsistencyError(f"ladder increased at m={levels[k][0]}")
    return Ladder(levels, aitken_limit(lams) if lams else math.nan, results)


# --------------------------------------------------------------------------
# certificates and probes


def subeigen_certificate(lam_cert: float, v: ConvexFn, nu: DiscreteMeasure, rel_tol: float = 1e-9) -> CheckReport:
    """Nodewise mu_v >= Lambda |v|^n nu, up to rel_tol times the total mass.

    lhs is the largest nodal violation (Lambda |v|^n nu - mu_v), rhs 0.
    """
    if not v.mesh.same_as(nu.mesh):
        raise ShapeError("function and measure live on different meshes")
    n = v.dim
    mu = ma_measure(v)
    rhs = nu.weighted(np.abs(v.values) ** n, np.abs(v.at_midpoints()) ** n).scaled(lam_cert)
    if v.mesh.kind == "radial":
        a0, shells = _radial_masses(rhs)
        viol = np.concatenate([[a0 - mu.atoms[0]], shells - mu.cells])
        total = float(a0 + shells.sum())
    else:
        target = rhs.interior_lumped()
        viol = (target - mu.lumped())[v.mesh.interior]
        total = float(target.sum())
    worst = float(np.max(viol)) if viol.size else 0.0
    return CheckReport("subeigen_certificate", worst, 0.0, rel_tol * max(total, 1e-300), digest(v.values, nu.cells), {"lambda": lam_cert})


def power_functional(u: ConvexFn, nu: DiscreteMeasure, p: float) -> float:
    """E(u) / (int |u|^{p+1} dnu)^{(n+1)/(p+1)}."""
    n = u.dim
    den = _denominator(u, nu, p + 1)
    if not den > 0:
        raise DegenerateInputError("int |u|^{p+1} dnu vanishes")
    return energy(u) / den ** ((n + 1) / (p + 1))


@dataclass
class PowerResult:
    minimizer: ConvexFn
    value: float
    lam0: float
    residual: float
    ledger: IterationLedger
    converged: bool
    experimental: bool


def power_minimize(mesh: Mesh, spec, p: float, tol: float = 1e-12, max_iter: int = 2000, u0: ConvexFn | None = None) -> PowerResult:
    """Minimize F(u) = E(u)/(int |u|^{p+1} dnu)^{(n+1)/(p+1)} by normalized fixed-point iteration.

    u <- solve(|u|^p nu) rescaled to sup norm 1.  The best iterate is
    returned rescaled so that int |u|^{p+1} dnu = 1, where lam0 = E(u) = F(u)
    and the residual of mu_u = lam0 |u|^p nu is reported.  Convergence for
    p > n is not guaranteed (``experimental``).
    """
    n = mesh.dim
    if not ((-1.0 < p < 0.0) or p > n):
        raise ValueError(f"power p must lie in (-1, 0) or ({n}, inf)")
    nu = spec if isinstance(spec, DiscreteMeasure) else realize(spec, mesh)
    beta = (p + 1) / (n + 1)
    wm = weighted_mass(nu, beta)
    if wm == INFINITE:
        raise PreconditionError(f"int dist^{beta:.3g} dnu is infinite")
    u = cone(mesh) if u0 is None else u0.scaled(1.0 / u0.sup_norm())
    ledger = IterationLedger(("step", "functional", "sup_change"))
    best, best_F = u, power_functional(u, nu, p)
    ledger.append(step=0, functional=best_F, sup_change=math.nan)
    converged = False
    for k in range(1, max_iter + 1):
        rhs = nu.weighted(np.abs(u.values) ** p, np.abs(u.at_midpoints()) ** p)
        rhs = DiscreteMeasure(mesh, np.where(u.values != 0, rhs.atoms, 0.0), rhs.cells)
        w = solve(mesh, rhs)
        w = w.scaled(1.0 / w.sup_norm())
        change = float(np.max(np.abs(w.values - u.values)))
        u = w
        F = power_functional(u, nu, p)
        ledger.append(step=k, functional=F, sup_change=change)
        if F <= best_F:
            best, best_F = u, F
        if change <= tol:
            converged = True
            break
    scale = _denominator(best, nu, p + 1) ** (-1.0 / (p + 1))
    out = best.scaled(scale)
    lam0 = energy(out)
    return PowerResult(out, best_F, lam0, eigen_residual(out, nu, lam0, p), ledger, converged, p > n)


def _random_bump(mesh: Mesh, rng):
    dom = mesh.domain
    if mesh.kind == "radial":
        R = mesh.nodes[-1] + mesh.gap[-1]
        c, rad = 0.0, rng.uniform(0.2, 0.7) * R
        x = mesh.nodes
        return np.maximum(0.0, 1 - ((x - c) / rad) ** 2) ** 2 * (mesh.gap > 0)
    x = mesh.nodes
    if x.ndim == 1:
        hw = 0.5 * dom.diameter
        c = dom.center + rng.uniform(-0.6, 0.6) * hw
        rad = rng.uniform(0.1, 0.4) * hw
        b = np.maximum(0.0, 1 - ((x - c) / rad) ** 2) ** 2
    else:
        hw = 0.5 * dom.diameter
        c = np.asarray(dom.center) + rng.uniform(-0.4, 0.4, 2) * hw
        rad = rng.uniform(0.15, 0.4) * hw
        b = np.maximum(0.0, 1 - np.sum((x - c) ** 2, axis=1) / rad**2) ** 2
    b = b * (mesh.node_dist > 0)
    return b


def minimality_probe(u: ConvexFn, nu: DiscreteMeasure, trials: int = 200, seed: int = 0xA1E5, tol: float = 1e-6) -> CheckReport:
    """Random convex perturbations Gamma(u + t*bump) never lower the Rayleigh quotient.

    Uses t in {+-1e-2, +-1e-1} relative to sup|u|.  lhs = R(u), rhs = the
    smallest perturbed quotient.
    """
    rng = np.random.default_rng(seed)
    base = rayleigh(u, nu)
    scale = u.sup_norm()
    ts = [1e-2, -1e-2, 1e-1, -1e-1]
    best = math.inf
    for k in range(trials):
        b = _random_bump(u.mesh, rng)
        t = ts[k % len(ts)] * scale
        w = convex_envelope(u.values + t * b, u.mesh)
        try:
            r = rayleigh(w, nu)
        except DegenerateInputError:
            continue
        best = min(best, r)
    return CheckReport("minimality_probe", base, best, tol, digest(u.values, nu.cells), {"trials": trials})
