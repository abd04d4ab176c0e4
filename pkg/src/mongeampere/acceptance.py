"""Reproduction table: one function per acceptance criterion.

Each criterion returns a :class:`Criterion` with a pass flag and a one-line
summary of the numbers it was decided on.  The checks are literal; a
criterion that cannot be met numerically is reported as failing.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .checks import (
    CHECKS,
    SEED,
    check_envelope_derivative,
    collar_integral,
    envelope_pairs,
    equality_cases,
    hardy_probes,
    run_randomized,
    run_suite,
)
from .convex import ConvexFn, cone, ma_measure, mixed_ma_measure, quadratic
from .dirichlet import DirichletProblem, solve, solve_dirichlet, solve_dirichlet_singular
from .eigen import eigen_ladder, inverse_iterate, rayleigh, subeigen_certificate
from .geometry import Ball, Interval, geometric_gaps, graded_interval_mesh, grid_mesh, interval_mesh, radial_mesh
from .measures import INFINITE, MeasureSpec, density_weighted_mass, realize, truncate, weighted_mass
from .oracles import oracle, sample


@dataclass
class Criterion:
    number: int
    title: str
    passed: bool
    summary: str
    runtime: float = 0.0
    data: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  [{self.number:2d}] {self.title}: {self.summary} ({self.runtime:.1f} s)"


def _timed(number, title, budget=None):
    def wrap(fn):
        def run() -> Criterion:
            t0 = time.perf_counter()
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                ok, summary, data = fn()
            dt = time.perf_counter() - t0
            if budget is not None and dt >= budget:
                ok = False
                summary += f"; runtime {dt:.1f} s exceeds {budget} s"
            return Criterion(number, title, bool(ok), summary, dt, data)

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        run.number = number
        return run

    return wrap


def _strictly_decreasing(vals) -> bool:
    return all(b < a for a, b in zip(vals, vals[1:]))


HARDY_SCHEDULE = [2, 4, 8, 16, 32, 64, 128, 256]


@_timed(1, "Hardy eigenvalue ladder", budget=30.0)
def hardy_ladder():
    """Ladder lambda_m for (1-x^2)^{-2} dx on 801 nodes; Aitken limit in [0.95, 1.05]."""
    mesh = interval_mesh(Interval(-1.0, 1.0), 801)
    lad = eigen_ladder(mesh, MeasureSpec.hardy(2.0), HARDY_SCHEDULE)
    lams = lad.lambdas
    mono = len(lams) == len(HARDY_SCHEDULE) and _strictly_decreasing(lams)
    ok = mono and 0.95 <= lad.limit <= 1.05
    summary = f"lambda_2={lams[0]:.4f} .. lambda_256={lams[-1]:.4f}, strictly decreasing={mono}, Aitken limit={lad.limit:.4f} (target [0.95, 1.05])"
    return ok, summary, {"levels": lad.levels, "limit": lad.limit}


@_timed(2, "Hardy family certificates", budget=5.0)
def hardy_certificates():
    """v_alpha certifies 1-4alpha^2-1e-3 and fails to certify 1-4alpha^2+1e-2 (truncation at 1/64)."""
    mesh = graded_interval_mesh(Interval(-1.0, 1.0), 2001, 2.0)
    rows = []
    ok = True
    for a in (0.0, 0.1, 0.25, 0.4):
        case = oracle("hardy_family", alpha=a)
        v, nu = sample(case, mesh)
        nu = truncate(nu, 64)
        below = subeigen_certificate(case.lam - 1e-3, v, nu)
        above = subeigen_certificate(case.lam + 1e-2, v, nu)
        rows.append((a, case.lam, below.passed, above.passed))
        ok &= below.passed and not above.passed
    summary = ", ".join(f"alpha={a}: lam={lam:.2f} below={'ok' if b else 'no'} above={'rejected' if not c else 'ACCEPTED'}" for a, lam, b, c in rows)
    return ok, summary, {"rows": rows}


@_timed(3, "1D Lebesgue eigenpair", budget=10.0)
def lebesgue_eigenpair():
    mesh = interval_mesh(Interval(-1.0, 1.0), 801)
    nu = realize(MeasureSpec.lebesgue(), mesh)
    res = inverse_iterate(cone(mesh), nu)
    exact = math.pi**2 / 4
    lam_err = abs(res.lam - exact)
    fn_err = float(np.max(np.abs(res.eigenfunction.values + np.cos(np.pi * mesh.nodes / 2))))
    led = res.ledger
    mono = all(led.check_monotone(c, d, 1e-9) is None for c, d in (("energy", "up"), ("norm", "up"), ("rayleigh", "down")))
    ok = lam_err < 1e-3 and fn_err < 1e-3 and mono
    summary = f"lambda={res.lam:.6f} (|err|={lam_err:.2e}), sup error={fn_err:.2e}, {res.iterations} steps, ledger monotone={mono}"
    return ok, summary, {"lam": res.lam, "fn_err": fn_err}


@_timed(4, "Mixed-measure annulus mass")
def mixed_annulus():
    mesh = grid_mesh(Ball((0.0, 0.0), 1.0), 65)
    half_square = quadratic(mesh)
    norm = ConvexFn(mesh, np.linalg.norm(mesh.nodes, axis=1))
    mixed = mixed_ma_measure([half_square, norm])
    r = np.linalg.norm(mesh.nodes, axis=1)
    mass = float(mixed.atoms[(r >= 0.5) & (r <= 1.0)].sum())
    rel = abs(mass - math.pi / 2) / (math.pi / 2)
    return rel <= 0.03, f"annulus mass={mass:.5f} vs pi/2={math.pi / 2:.5f} (rel {rel:.2%}, limit 3%)", {"mass": mass}


@_timed(5, "Rayleigh bound of the radial family")
def radial_rayleigh_bound():
    tol = 1e-3
    ok = True
    parts = []
    data = {}
    for n in (1, 2):
        seq = []
        for eps in (0.2, 0.1, 0.05, 0.02):
            case = oracle("radial_rayleigh", n=n, eps=eps)
            g_min = max(10.0 ** (-6.0 / ((n + 1) * eps)), 1e-300)
            mesh = radial_mesh(n, 1.0, gaps=geometric_gaps(1.0, 1.01, g_min))
            u, nu = sample(case, mesh)
            R = rayleigh(u, nu)
            bound = case.extra["bound"]
            exact = case.extra["rayleigh_exact"]
            ok &= R <= bound + tol and abs(R - exact) <= tol and R >= 1.0 - tol
            seq.append(R)
        ok &= all(b <= a + tol for a, b in zip(seq, seq[1:]))
        data[n] = seq
        parts.append(f"n={n}: R=" + ", ".join(f"{x:.4f}" for x in seq))
    return ok, "; ".join(parts) + " (eps = 0.2 .. 0.02)", data


@_timed(6, "2D Dirichlet accuracy")
def dirichlet_2d():
    errs = []
    for n in (33, 65):
        mesh = grid_mesh(Ball((0.0, 0.0), 1.0), n)
        rep = solve_dirichlet(DirichletProblem(mesh, realize(MeasureSpec.lebesgue(), mesh)), tol=1e-11)
        exact = (np.sum(mesh.nodes**2, axis=1) - 1.0) / 2.0
        errs.append(float(np.max(np.abs(rep.solution.values - exact))))
    ratio = errs[0] / errs[1]
    ok = errs[0] < 5e-3 and 2.0 * 0.7 <= ratio <= 2.0 * 1.3
    summary = f"error 33x33={errs[0]:.3e}, 65x65={errs[1]:.3e}, ratio={ratio:.2f} (halving band [1.4, 2.6])"
    return ok, summary, {"errors": errs, "ratio": ratio}


SUITE_CHECKS = ("aleksandrov", "blocki_i", "blocki_ii", "cauchy_schwarz", "ibp", "mixed_inequality", "comparison", "domination")


@_timed(7, "Inequality suites", budget=60.0)
def inequality_suites(trials: int = 200):
    counts = {}
    for name in SUITE_CHECKS:
        reps = run_randomized(name, trials, SEED)
        counts[name] = sum(r.passed for r in reps)
    eq = equality_cases()
    eq_worst = max(abs(r.slack) / max(abs(r.lhs), abs(r.rhs), 1.0) for r in eq)
    ok = all(c == trials for c in counts.values()) and eq_worst <= 1e-9
    summary = ", ".join(f"{k} {v}/{trials}" for k, v in counts.items()) + f"; equality |slack|/scale <= {eq_worst:.1e}"
    return ok, summary, {"counts": counts, "equality_worst": eq_worst}


@_timed(8, "Envelope derivative")
def envelope_derivative():
    reps = [check_envelope_derivative(u, v) for u, v in envelope_pairs()]
    worst = max(r.lhs for r in reps)
    n_ok = sum(r.passed for r in reps)
    return n_ok == len(reps), f"{n_ok}/{len(reps)} pairs, worst relative error {worst:.2e} (limit 1e-3)", {"worst": worst}


@_timed(9, "Vanishing-mass dichotomy")
def vanishing_dichotomy():
    reps = run_suite("vanishing", 3)
    leb, mu_w, hardy = reps
    collar = collar_integral(MeasureSpec.hardy(2.0), hardy_probes([1.0 / 64])[0], 64, Interval(-1.0, 1.0))
    ok = leb.passed and mu_w.passed and not hardy.passed and 0.4 <= collar <= 0.6
    summary = (
        f"Lebesgue tail={leb.lhs:.1e} ({'pass' if leb.passed else 'fail'}), mu_w tail={mu_w.lhs:.1e} ({'pass' if mu_w.passed else 'fail'}), "
        f"Hardy tail={hardy.lhs:.3f} ({'pass' if hardy.passed else 'fail'}), collar at eps=1/64={collar:.4f}"
    )
    return ok, summary, {"collar": collar}


@_timed(10, "Weighted-mass gate")
def weighted_mass_gate():
    mesh = interval_mesh(Interval(-1.0, 1.0), 4001)
    ok = True
    parts = []
    for s in (1.2, 1.5, 2.0):
        nu = realize(MeasureSpec.hardy(s), mesh)
        wm = weighted_mass(nu, 1.0)
        finite = wm != INFINITE
        rep = solve_dirichlet_singular(mesh, nu, m_schedule=HARDY_SCHEDULE)
        cauchy = rep.info["cauchy"]
        ok &= finite == (s < 2.0) and cauchy == finite
        parts.append(f"s={s}: mass={'INFINITE' if not finite else f'{wm:.4f}'}, Cauchy={cauchy}")
    return ok, "; ".join(parts), {}


@_timed(11, "Noncompactness regression")
def noncompactness():
    mesh = interval_mesh(Interval(-1.0, 1.0), 801)
    mass_err = 0.0
    sols = []
    for m in (1, 2, 4, 8, 16):
        case = oracle("noncompact_sequence", m=m)
        wm = density_weighted_mass(case.density, mesh, 1.0, weight="profile")
        mass_err = max(mass_err, abs(wm - 8 * m / (2 * m + 1)))
        sols.append(solve(mesh, realize(MeasureSpec.density(case.density), mesh, rule="gauss5")))
    gaps = [float(np.max(np.abs(b.values - a.values))) for a, b in zip(sols, sols[1:])]
    to_limit = float(np.max(np.abs(sols[-1].values)))
    ok = mass_err <= 1e-10 and min(gaps) > 0.5
    summary = (
        f"max |mass - 8m/(2m+1)|={mass_err:.1e}; successive sup-gaps="
        + ", ".join(f"{g:.4f}" for g in gaps)
        + f" (required > 0.5); distance of u_16 to the limit solution 0 = {to_limit:.4f}"
    )
    return ok, summary, {"gaps": gaps, "mass_err": mass_err, "to_limit": to_limit}


CRITERIA = (
    hardy_ladder,
    hardy_certificates,
    lebesgue_eigenpair,
    mixed_annulus,
    radial_rayleigh_bound,
    dirichlet_2d,
    inequality_suites,
    envelope_derivative,
    vanishing_dichotomy,
    weighted_mass_gate,
    noncompactness,
)


def run_all(select=None) -> list:
    out = []
    for fn in CRITERIA:
        if select is None or fn.number in select:
            out.append(fn())
    return out


def table(results) -> str:
    return "\n".join(r.line() for r in results)
