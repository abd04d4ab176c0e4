"""Construction, truncation and weighted-mass diagnostics of measures on meshes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .convex import ConvexFn, DiscreteMeasure, ShapeError, ma_measure
from .geometry import Ball, Interval, Mesh, Polygon, _pow_diff, unit_ball_volume

INFINITE = math.inf

KINDS = ("lebesgue", "hardy", "radial_density", "density", "from_convex", "atoms", "custom")


class SingularityError(ArithmeticError):
    pass


@dataclass(frozen=True)
class MeasureSpec:
    """Recipe for a measure; ``realize`` turns it into a DiscreteMeasure on a mesh.

    kinds and their params:
      lebesgue        -
      hardy           s: density rho^{-s}, rho a boundary-distance profile
      radial_density  f: callable of the radius
      density         f: callable of points (1D arrays or (N, 2) arrays)
      from_convex     v: ConvexFn, q: divide mu_v by |v|^q
      atoms           points: list of (x, mass)
      custom          measure: DiscreteMeasure
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown measure kind {self.kind!r}")
        if self.kind == "from_convex" and self.params.get("q", 1.0) < 0:
            raise ValueError("from_convex needs q >= 0")

    @classmethod
    def lebesgue(cls):
        return cls("lebesgue")

    @classmethod
    def hardy(cls, s: float):
        return cls("hardy", {"s": float(s)})

    @classmethod
    def radial_density(cls, f: Callable):
        return cls("radial_density", {"f": f})

    @classmethod
    def density(cls, f: Callable):
        return cls("density", {"f": f})

    @classmethod
    def from_convex(cls, v: ConvexFn, q: float = 1.0):
        return cls("from_convex", {"v": v, "q": float(q)})

    @classmethod
    def atoms(cls, points):
        return cls("atoms", {"points": [(p, float(w)) for p, w in points]})

    @classmethod
    def custom(cls, measure: DiscreteMeasure):
        return cls("custom", {"measure": measure})

    def describe(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind}
        for k, v in self.params.items():
            if isinstance(v, (int, float, str)):
                out[k] = v
        return out


def boundary_profile(mesh: Mesh, points=None):
    """Boundary-distance profile used by the Hardy density.

    Interval (a, b): (x-a)(b-x)/((b-a)/2); ball: (R^2 - |x-c|^2)/R; polygon: dist.
    All three agree with dist to first order at the boundary, and the first two
    give 1 - |x|^2 on the unit interval/ball.
    """
    dom = mesh.domain
    if mesh.kind == "radial":
        R = mesh.nodes[-1] + mesh.gap[-1]
        g = mesh.gap if points is None else points
        return g * (2 * R - g) / R
    x = mesh.nodes if points is None else points
    if isinstance(dom, Interval):
        return (x - dom.a) * (dom.b - x) / (0.5 * (dom.b - dom.a))
    if isinstance(dom, Ball):
        c = np.asarray(dom.center)
        r2 = np.sum((x - c) ** 2, axis=-1) if np.ndim(x) > 1 else (x - c[0]) ** 2
        return (dom.radius**2 - r2) / dom.radius
    return dom.dist(x)


_GL5 = np.polynomial.legendre.leggauss(5)


def _gauss_cells_1d(mesh: Mesh, f):
    x0, x1 = mesh.nodes[:-1], mesh.nodes[1:]
    t, w = _GL5
    half = 0.5 * (x1 - x0)
    mid = 0.5 * (x1 + x0)
    pts = mid[:, None] + half[:, None] * t[None, :]
    return np.sum(f(pts) * w[None, :], axis=1) * half


def _gauss_cells_radial(mesh: Mesh, f_of_gap):
    """Shell integrals n|B_1| int r^{n-1} f dr, in gap coordinates."""
    n = mesh.dim
    R = mesh.nodes[-1] + mesh.gap[-1]
    g0, g1 = mesh.gap[:-1], mesh.gap[1:]
    t, w = _GL5
    half = 0.5 * (g0 - g1)
    mid = 0.5 * (g0 + g1)
    g = mid[:, None] + half[:, None] * t[None, :]
    r = R - g
    vals = n * unit_ball_volume(n) * r ** (n - 1) * f_of_gap(g)
    return np.sum(vals * w[None, :], axis=1) * half


def _density_cells(mesh: Mesh, dens_points, dens_gap, rule):
    if mesh.kind == "radial":
        if rule == "gauss5":
            return _gauss_cells_radial(mesh, dens_gap)
        g = 0.5 * (mesh.gap[:-1] + mesh.gap[1:])
        return dens_gap(g) * mesh.cell_volumes
    if mesh.kind == "pl1d" and rule == "gauss5":
        return _gauss_cells_1d(mesh, dens_points)
    return dens_points(mesh.cell_midpoints) * mesh.cell_volumes


def realize(spec: MeasureSpec, mesh: Mesh, rule: str = "midpoint") -> DiscreteMeasure:
    """Discretize ``spec`` on ``mesh``.

    Cell masses are midpoint density times cell volume (``rule="midpoint"``)
    or a 5-point Gauss rule per cell (``rule="gauss5"``, 1D and radial).
    Densities are never evaluated at nodes, so boundary singularities are fine.
    """
    if rule not in ("midpoint", "gauss5"):
        raise ValueError(f"unknown quadrature rule {rule!r}")
    zeros_a = np.zeros(mesh.n_nodes)
    k = spec.kind
    if k == "lebesgue":
        return DiscreteMeasure(mesh, zeros_a, mesh.cell_volumes.copy())
    if k == "hardy":
        s = spec.params["s"]
        R = mesh.nodes[-1] + mesh.gap[-1] if mesh.kind == "radial" else None
        cells = _density_cells(
            mesh,
            lambda x: boundary_profile(mesh, x) ** (-s),
            lambda g: (g * (2 * R - g) / R) ** (-s),
            rule,
        )
        return DiscreteMeasure(mesh, zeros_a, cells)
    if k == "radial_density":
        f = spec.params["f"]
        if mesh.kind != "radial":
            c = np.asarray(getattr(mesh.domain, "center", 0.0), dtype=float)
            radius = lambda x: np.abs(x - c) if np.ndim(x) == 1 or mesh.dim == 1 else np.linalg.norm(x - c, axis=-1)
            return DiscreteMeasure(mesh, zeros_a, _density_cells(mesh, lambda x: f(radius(x)), None, rule))
        R = mesh.nodes[-1] + mesh.gap[-1]
        return DiscreteMeasure(mesh, zeros_a, _density_cells(mesh, None, lambda g: f(R - g), rule))
    if k == "density":
        f = spec.params["f"]
        return DiscreteMeasure(mesh, zeros_a, _density_cells(mesh, f, None, rule))
    if k == "from_convex":
        v: ConvexFn = spec.params["v"]
        q = spec.params.get("q", 1.0)
        if not v.mesh.same_as(mesh):
            raise ShapeError("from_convex function lives on a different mesh")
        mu = ma_measure(v)
        av, am = np.abs(v.values), np.abs(v.at_midpoints())
        bad = (mu.atoms > 0) & (av < 1e-14)
        if bad.any():
            i = int(np.nonzero(bad)[0][0])
            raise SingularityError(f"|v| vanishes at node {i} carrying mass; truncate first")
        badc = (mu.cells > 0) & (am < 1e-14)
        if badc.any():
            raise SingularityError("|v| vanishes inside a cell carrying mass; truncate first")
        atoms = np.divide(mu.atoms, av**q, out=np.zeros_like(av), where=mu.atoms > 0)
        cells = np.divide(mu.cells, am**q, out=np.zeros_like(am), where=mu.cells > 0)
        return DiscreteMeasure(mesh, atoms, cells)
    if k == "atoms":
        atoms = zeros_a.copy()
        for p, w in spec.params["points"]:
            if mesh.kind == "radial":
                i = int(np.argmin(np.abs(mesh.nodes - float(np.linalg.norm(np.atleast_1d(p))))))
            else:
                d = np.abs(mesh.nodes - p) if mesh.nodes.ndim == 1 else np.linalg.norm(mesh.nodes - np.asarray(p), axis=1)
                i = int(np.argmin(d))
            atoms[i] += w
        return DiscreteMeasure(mesh, atoms, np.zeros(mesh.n_cells))
    nu = spec.params["measure"]
    if not nu.mesh.same_as(mesh):
        raise ShapeError("custom measure lives on a different mesh")
    return nu


def truncate(nu: DiscreteMeasure, m: int) -> DiscreteMeasure:
    """Keep only the part of nu at boundary distance > 1/m."""
    if m < 1:
        raise ValueError("truncation level m must be >= 1")
    mesh = nu.mesh
    cut = 1.0 / m
    return DiscreteMeasure(
        mesh,
        np.where(mesh.node_dist > cut, nu.atoms, 0.0),
        np.where(mesh.cell_dist > cut, nu.cells, 0.0),
    )


def _collar_sums(nu: DiscreteMeasure, beta: float, min_cells: int = 4):
    """Integrals of dist^beta over dyadic boundary collars resolved by the mesh."""
    mesh = nu.mesh
    nd, cd = mesh.node_dist, mesh.cell_dist
    D = float(max(nd.max(), cd.max()))
    out = []
    k = 0
    while True:
        hi, lo = D * 2.0**-k, D * 2.0 ** -(k + 1)
        in_cells = (cd > lo) & (cd <= hi)
        if k > 0 and in_cells.sum() < min_cells:
            break
        in_nodes = (nd > lo) & (nd <= hi)
        val = float(np.sum(nu.cells[in_cells] * cd[in_cells] ** beta) + np.sum(nu.atoms[in_nodes] * nd[in_nodes] ** beta))
        out.append(val)
        k += 1
        if k > 200:
            break
    return out


def _weights(mesh: Mesh, beta: float, weight: str):
    if weight == "dist":
        return mesh.node_dist**beta, mesh.cell_dist**beta
    if weight == "profile":
        return boundary_profile(mesh) ** beta, _cell_profile(mesh) ** beta
    raise ValueError(f"unknown weight {weight!r}")


def _cell_profile(mesh: Mesh):
    if mesh.kind == "radial":
        return boundary_profile(mesh, mesh.cell_dist)
    return boundary_profile(mesh, mesh.cell_midpoints.ravel() if mesh.dim == 1 else mesh.cell_midpoints)


def density_weighted_mass(f, mesh: Mesh, beta: float = 1.0, weight: str = "profile") -> float:
    """int w^beta f dx on an interval mesh, 5-point Gauss per cell with the weight inside the rule.

    ``weight`` is "dist" or "profile" (see :func:`boundary_profile`); ``f`` is
    a density callable.  Converges like h^10 for smooth integrands, so it
    serves as a near-exact reference for weighted masses of smooth densities.
    """
    if mesh.kind != "pl1d":
        raise ShapeError("density_weighted_mass works on interval meshes")
    dom = mesh.domain
    if weight == "dist":
        wfun = lambda x: np.minimum(x - dom.a, dom.b - x) ** beta
    elif weight == "profile":
        wfun = lambda x: boundary_profile(mesh, x) ** beta
    else:
        raise ValueError(f"unknown weight {weight!r}")
    return float(np.sum(_gauss_cells_1d(mesh, lambda x: wfun(x) * f(x))))


def weighted_mass(nu: DiscreteMeasure, beta: float, ratio_threshold: float = 0.9, weight: str = "dist"):
    """Integral of dist^beta against nu, or INFINITE when the collar sums do not decay.

    ``weight`` selects dist (default) or the smooth boundary profile as the
    weight in the returned integral; divergence is always judged on dist.
    The last three resolved dyadic collars (widths D/2^k, halving) give two
    successive ratios; a convergent integrand makes them tend to 2^{-gamma}
    with gamma > 0, a divergent one to >= 1.  Both ratios at or above
    ``ratio_threshold`` flags divergence.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    mesh = nu.mesh
    wn, wc = _weights(mesh, beta, weight)
    total = float(nu.atoms @ wn + nu.cells @ wc)
    J = _collar_sums(nu, beta)
    if len(J) >= 3:
        j0, j1, j2 = J[-3:]
        r1 = j1 / j0 if j0 > 0 else (0.0 if j1 == 0 else math.inf)
        r2 = j2 / j1 if j1 > 0 else (0.0 if j2 == 0 else math.inf)
        if r1 >= ratio_threshold and r2 >= ratio_threshold:
            return INFINITE
    return total


def collar_ratios(nu: DiscreteMeasure, beta: float) -> list:
    J = _collar_sums(nu, beta)
    return [J[i + 1] / J[i] if J[i] > 0 else 0.0 for i in range(len(J) - 1)]


def lp_norm(u: ConvexFn, nu: DiscreteMeasure, p: float) -> float:
    if p < 1:
        raise ValueError("lp_norm needs p >= 1")
    if not u.mesh.same_as(nu.mesh):
        raise ShapeError("function and measure live on different meshes")
    val = nu.integrate_fn(u, p, sign=None)
    return float(max(val, 0.0) ** (1.0 / p))
