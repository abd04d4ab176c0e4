"""Piecewise-linear convex functions and their Monge-Ampere measures.

Three backends share one representation (nodal values on a :class:`Mesh`):

* ``pl1d``   - piecewise linear on sorted nodes; the measure is the slope jumps.
* ``radial`` - profile W(r) of a radial function on a ball in R^n.  When exact
  derivatives W'(r_k) are attached (``slopes``) the measure is an origin atom
  plus shell masses |B_1| (W'(r_{k+1})^n - W'(r_k)^n); otherwise W is treated
  as piecewise linear in r and the measure sits on the node spheres.
* ``grid2d`` - planar nodes; the function is identified with the lower convex
  hull of its lifted graph and the atom at a node is the area of the polygon
  spanned by the gradients of the hull facets around it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .geometry import Ball, Interval, Mesh, Polygon, _pow_diff, unit_ball_volume


class ConvexityError(ValueError):
    """Nodal data that is not discretely convex; carries the offending node triple."""

    def __init__(self, message, nodes=None):
        super().__init__(message)
        self.nodes = nodes


class ShapeError(ValueError):
    pass


class ContractError(ValueError):
    pass


class PolarizationError(ArithmeticError):
    pass


def _ro(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ConvexFn:
    """Nodal values of a convex function on a mesh.

    ``slopes`` (radial only) are exact profile derivatives W'(r_k); ``mid_values``
    optionally carries exact values at cell midpoints for sampled functions.
    """

    mesh: Mesh
    values: np.ndarray
    slopes: np.ndarray | None = None
    mid_values: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", _ro(self.values))
        if self.values.shape != (self.mesh.n_nodes,):
            raise ShapeError(f"expected {self.mesh.n_nodes} nodal values, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("convex function values must be finite")
        if self.slopes is not None:
            if self.mesh.kind != "radial":
                raise ShapeError("slopes are only stored for radial profiles")
            object.__setattr__(self, "slopes", _ro(self.slopes))
        if self.mid_values is not None:
            object.__setattr__(self, "mid_values", _ro(self.mid_values))

    @property
    def backend(self) -> str:
        return self.mesh.kind

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @property
    def boundary_trace(self) -> np.ndarray:
        return self.values[self.mesh.boundary]

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def at_midpoints(self) -> np.ndarray:
        if self.mid_values is not None:
            return self.mid_values
        return self.mesh.midpoint_values(self.values)

    def scaled(self, c: float) -> "ConvexFn":
        return ConvexFn(
            self.mesh,
            c * self.values,
            None if self.slopes is None else c * self.slopes,
            None if self.mid_values is None else c * self.mid_values,
        )

    def __mul__(self, c):
        return self.scaled(float(c))

    __rmul__ = __mul__

    def __add__(self, other: "ConvexFn") -> "ConvexFn":
        _check_same_mesh(self, other)
        slopes = None
        if self.slopes is not None and other.slopes is not None:
            slopes = self.slopes + other.slopes
        mids = None
        if self.mid_values is not None and other.mid_values is not None:
            mids = self.mid_values + other.mid_values
        return ConvexFn(self.mesh, self.values + other.values, slopes, mids)

    def with_values(self, values) -> "ConvexFn":
        return ConvexFn(self.mesh, values)


def _check_same_mesh(*fns):
    m0 = fns[0].mesh
    for f in fns[1:]:
        if not m0.same_as(f.mesh):
            raise ShapeError("convex functions live on different meshes")


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Nonnegative measure as node atoms plus per-cell masses (uniform over the cell).

    ``atoms`` has one entry per node (zero where there is no atom) and
    ``cells`` one entry per cell.  ``clipped`` counts subgradient cells that
    had to be cut by the Lipschitz ball when the measure came from
    :func:`ma_measure`.
    """

    mesh: Mesh
    atoms: np.ndarray
    cells: np.ndarray
    clipped: int = field(default=0)

    def __post_init__(self):
        atoms = _ro(self.atoms)
        cells = _ro(self.cells)
        if atoms.shape != (self.mesh.n_nodes,) or cells.shape != (self.mesh.n_cells,):
            raise ShapeError("measure arrays do not match the mesh")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def zero(cls, mesh: Mesh) -> "DiscreteMeasure":
        return cls(mesh, np.zeros(mesh.n_nodes), np.zeros(mesh.n_cells))

    @property
    def total(self) -> float:
        return float(self.atoms.sum() + self.cells.sum())

    def is_nonnegative(self) -> bool:
        return bool(np.all(self.atoms >= 0) and np.all(self.cells >= 0))

    def scaled(self, c: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.mesh, c * self.atoms, c * self.cells)

    def __add__(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        if not self.mesh.same_as(other.mesh):
            raise ShapeError("measures live on different meshes")
        return DiscreteMeasure(self.mesh, self.atoms + other.atoms, self.cells + other.cells)

    def __sub__(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        if not self.mesh.same_as(other.mesh):
            raise ShapeError("measures live on different meshes")
        return DiscreteMeasure(self.mesh, self.atoms - other.atoms, self.cells - other.cells)

    def weighted(self, node_weights, cell_weights) -> "DiscreteMeasure":
        """The measure g*nu with g given at nodes (for atoms) and cell midpoints."""
        return DiscreteMeasure(self.mesh, self.atoms * node_weights, self.cells * cell_weights)

    def integrate(self, node_values, mid_values=None) -> float:
        """Quadrature of g against the measure: nodal g for atoms, midpoint g for cells."""
        node_values = np.asarray(node_values, dtype=float)
        if mid_values is None:
            mid_values = self.mesh.midpoint_values(node_values)
        return float(self.atoms @ node_values + self.cells @ np.asarray(mid_values, dtype=float))

    def integrate_fn(self, u: ConvexFn, power: float = 1.0, sign: float = 1.0) -> float:
        """Integral of (sign*u)^power, or |u|^power when ``sign`` is None."""
        mids = u.at_midpoints()
        if sign is None:
            return self.integrate(np.abs(u.values) ** power, np.abs(mids) ** power)
        return self.integrate((sign * u.values) ** power, (sign * mids) ** power)

    def lumped(self) -> np.ndarray:
        """Nodal masses: atoms plus cell masses split equally among cell vertices."""
        out = self.atoms.copy()
        k = self.mesh.cells.shape[1]
        np.add.at(out, self.mesh.cells.ravel(), np.repeat(self.cells / k, k))
        return out

    def interior_lumped(self) -> np.ndarray:
        out = self.lumped()
        out[self.mesh.boundary] = 0.0
        return out


# --------------------------------------------------------------------------
# constructors


def sample(mesh: Mesh, f, df=None, exact_midpoints: bool = False) -> ConvexFn:
    """Nodal samples of a function; for radial meshes ``f`` and ``df`` take the
    radius and the gap to the boundary, i.e. ``f(r, gap)``."""
    if mesh.kind == "radial":
        vals = np.asarray(f(mesh.nodes, mesh.gap), dtype=float)
        slopes = None if df is None else np.asarray(df(mesh.nodes, mesh.gap), dtype=float)
        mids = None
        if exact_midpoints:
            g = 0.5 * (mesh.gap[:-1] + mesh.gap[1:])
            mids = np.asarray(f(mesh.nodes[-1] + mesh.gap[-1] - g, g), dtype=float)
        return ConvexFn(mesh, vals, slopes, mids)
    vals = np.asarray(f(mesh.nodes), dtype=float)
    mids = np.asarray(f(mesh.cell_midpoints), dtype=float) if exact_midpoints else None
    return ConvexFn(mesh, vals, None, mids)


def cone(mesh: Mesh, apex=None, depth: float = 1.0) -> ConvexFn:
    """Cone with vertex (apex, -depth) over the domain, zero on the boundary."""
    dom = mesh.domain
    if mesh.kind == "pl1d":
        a, b = dom.a, dom.b
        x0 = dom.center if apex is None else float(apex)
        x = mesh.nodes
        vals = np.where(x <= x0, -depth * (x - a) / (x0 - a), -depth * (b - x) / (b - x0))
        vals[mesh.boundary] = 0.0
        return ConvexFn(mesh, vals)
    if mesh.kind == "radial":
        R = mesh.nodes[-1] + mesh.gap[-1]
        vals = -depth * mesh.gap / R
        return ConvexFn(mesh, vals, np.full(mesh.n_nodes, depth / R))
    x0 = np.asarray(dom.center if apex is None else apex, dtype=float)
    y = mesh.nodes - x0
    r = np.linalg.norm(y, axis=1)
    gauge = np.zeros(mesh.n_nodes)
    for i in np.nonzero(r > 0)[0]:
        gauge[i] = r[i] / dom.ray_exit(x0, y[i] / r[i])
    vals = -depth * (1.0 - gauge)
    vals[mesh.boundary] = 0.0
    return ConvexFn(mesh, np.minimum(vals, 0.0))


def quadratic(mesh: Mesh, scale: float = 1.0) -> ConvexFn:
    """scale*(|x-c|^2 - R^2)/2 on a ball (exact derivatives on radial meshes)."""
    dom = mesh.domain
    if mesh.kind == "radial":
        R = mesh.nodes[-1] + mesh.gap[-1]
        g = mesh.gap
        return ConvexFn(mesh, -scale * g * (2 * R - g) / 2, scale * mesh.nodes)
    if mesh.kind == "pl1d":
        c, R = dom.center, 0.5 * dom.diameter
        return ConvexFn(mesh, scale * ((mesh.nodes - c) ** 2 - R**2) / 2)
    c = np.asarray(dom.center)
    R = dom.radius if isinstance(dom, Ball) else 0.5 * dom.diameter
    vals = scale * (np.sum((mesh.nodes - c) ** 2, axis=1) - R**2) / 2
    if isinstance(dom, Ball):
        vals[mesh.boundary] = 0.0
    return ConvexFn(mesh, vals)


# --------------------------------------------------------------------------
# 1D and radial measures


def _slopes_1d(x, v):
    return np.diff(v) / np.diff(x)


def _raise_nonconvex(jumps, scale, offset=0):
    tol = 1e-10 * max(scale, 1e-300)
    bad = np.nonzero(jumps < -tol)[0]
    if bad.size:
        i = int(bad[0]) + offset
        raise ConvexityError(
            f"nodal values not convex at nodes ({i - 1}, {i}, {i + 1}): slope jump {jumps[bad[0]]:.3e}",
            (i - 1, i, i + 1),
        )


def _ma_pl1d(u: ConvexFn) -> DiscreteMeasure:
    mesh = u.mesh
    s = _slopes_1d(mesh.nodes, u.values)
    jumps = s[1:] - s[:-1]
    _raise_nonconvex(jumps, np.max(np.abs(s)) + 1.0, offset=1)
    atoms = np.zeros(mesh.n_nodes)
    atoms[1:-1] = np.maximum(jumps, 0.0)
    return DiscreteMeasure(mesh, atoms, np.zeros(mesh.n_cells))


def radial_pl_slopes(u: ConvexFn) -> np.ndarray:
    g = u.mesh.gap
    return np.diff(u.values) / (g[:-1] - g[1:])


def _ma_radial(u: ConvexFn) -> DiscreteMeasure:
    mesh, n = u.mesh, u.mesh.dim
    wn = unit_ball_volume(n)
    atoms = np.zeros(mesh.n_nodes)
    if u.slopes is not None:
        s = u.slopes
        scale = np.max(np.abs(s)) + 1.0
        if s[0] < -1e-10 * scale:
            raise ConvexityError("radial profile needs W'(0+) >= 0", (0, 0, 1))
        _raise_nonconvex(np.diff(s), scale, offset=0)
        s = np.maximum.accumulate(np.maximum(s, 0.0))
        atoms[0] = wn * s[0] ** n
        cells = wn * (s[1:] ** n - s[:-1] ** n)
        return DiscreteMeasure(mesh, atoms, np.maximum(cells, 0.0))
    d = radial_pl_slopes(u)
    scale = np.max(np.abs(d)) + 1.0
    if d[0] < -1e-10 * scale:
        raise ConvexityError("radial profile needs W'(0+) >= 0", (0, 0, 1))
    _raise_nonconvex(np.diff(d), scale, offset=1)
    d = np.maximum.accumulate(np.maximum(d, 0.0))
    atoms[0] = wn * d[0] ** n
    atoms[1:-1] = wn * (d[1:] ** n - d[:-1] ** n)
    return DiscreteMeasure(mesh, np.maximum(atoms, 0.0), np.zeros(mesh.n_cells))


# --------------------------------------------------------------------------
# planar lower hulls


@dataclass
class HullData:
    simplices: np.ndarray  # lower facets (F, 3)
    grads: np.ndarray  # facet gradients (F, 2)
    planes: np.ndarray  # (F, 3): value = planes[:,0]*x + planes[:,1]*y + planes[:,2]
    neighbors: np.ndarray  # (F, 3) neighbor facet across the edge opposite local vertex k, -1 if not lower
    is_vertex: np.ndarray  # (N,) bool
    flat: bool = False


def lower_hull(nodes: np.ndarray, values: np.ndarray) -> HullData:
    """Lower convex hull of the lifted points (x_i, values_i)."""
    n = len(nodes)
    span = np.ptp(nodes, axis=0).max()
    vscale = float(np.ptp(values))
    A =np.column_stack([nodes, np.ones(n)])
    coef, *_ = np.linalg.lstsq(A, values, rcond=None)
    resid = values - A @ coef
    if vscale == 0.0 or np.max(np.abs(resid)) <= 1e-13 * max(vscale, 1e-300) + 1e-300:
        return HullData(
            np.zeros((0, 3), int), np.zeros((0, 2)), coef[None, :], np.zeros((0, 3), int), np.ones(n, bool), True
        )
    sz = span / vscale
    z = (values - values.mean()) * sz
    hull = ConvexHull(np.column_stack([nodes, z]), qhull_options="Qt Q12")
    eq = hull.equations
    lower = eq[:, 2] < -1e-10
    idx = np.nonzero(lower)[0]
    remap = -np.ones(len(eq), dtype=int)
    remap[idx] = np.arange(len(idx))
    # planes through the three vertices of each facet; qhull's own equations
    # are fitted over merged near-coplanar facets and are less accurate
    simp = hull.simplices[idx]
    p0 = nodes[simp[:, 0]]
    e1 = nodes[simp[:, 1]] - p0
    e2 = nodes[simp[:, 2]] - p0
    dz1 = values[simp[:, 1]] - values[simp[:, 0]]
    dz2 = values[simp[:, 2]] - values[simp[:, 0]]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    grads = np.column_stack([(dz1 * e2[:, 1] - dz2 * e1[:, 1]) / det, (e1[:, 0] * dz2 - e2[:, 0] * dz1) / det])
    offs = values[simp[:, 0]] - np.sum(grads * p0, axis=1)
    planes = np.column_stack([grads, offs])
    neigh = remap[hull.neighbors[idx]]
    is_vertex = np.zeros(n, dtype=bool)
    is_vertex[np.unique(hull.simplices[idx])] = True
    return HullData(hull.simplices[idx], grads, planes, neigh, is_vertex)


def _polygon_areas(vertex_ids, points, n_nodes):
    """Areas of the convex polygons with given (vertex id, point) incidences."""
    cnt = np.bincount(vertex_ids, minlength=n_nodes)
    cx = np.bincount(vertex_ids, points[:, 0], n_nodes) / np.maximum(cnt, 1)
    cy = np.bincount(vertex_ids, points[:, 1], n_nodes) / np.maximum(cnt, 1)
    px = points[:, 0] - cx[vertex_ids]
    py = points[:, 1] - cy[vertex_ids]
    ang = np.arctan2(py, px)
    order = np.lexsort((ang, vertex_ids))
    vs, qx, qy = vertex_ids[order], px[order], py[order]
    starts = np.concatenate([[0], np.cumsum(cnt)])
    pos = np.arange(len(vs))
    nxt = pos + 1
    ends = starts[vs + 1]
    nxt[nxt >= ends] = starts[vs][nxt >= ends]
    cross = qx * qy[nxt] - qy * qx[nxt]
    return 0.5 * np.bincount(vs, cross, n_nodes)


def _clip_polygon(poly, radius, sides=256):
    t = 2 * math.pi * np.arange(sides) / sides
    clip = radius * np.column_stack([np.cos(t), np.sin(t)])
    out = list(map(tuple, poly))
    for k in range(sides):
        p, q = clip[k], clip[(k + 1) % sides]
        e = q - p
        inside = lambda z: e[0] * (z[1] - p[1]) - e[1] * (z[0] - p[0]) >= 0
        new = []
        for i in range(len(out)):
            cur, prev = np.array(out[i]), np.array(out[i - 1])
            if inside(cur):
                if not inside(prev):
                    new.append(_seg_intersect(prev, cur, p, q))
                new.append(tuple(cur))
            elif inside(prev):
                new.append(_seg_intersect(prev, cur, p, q))
        out = new
        if not out:
            break
    return np.array(out)


def _seg_intersect(a, b, p, q):
    d1, d2 = b - a, q - p
    den = d1[0] * d2[1] - d1[1] * d2[0]
    t = ((p[0] - a[0]) * d2[1] - (p[1] - a[1]) * d2[0]) / den
    return tuple(a + t * d1)


def _shoelace(poly):
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def lipschitz_radius(u: ConvexFn) -> float:
    """Gradient bound 2*osc(u)/collar used to clip planar subgradient cells."""
    mesh = u.mesh
    collar = float(np.min(mesh.node_dist[mesh.interior])) if mesh.interior.any() else 1.0
    osc = float(np.ptp(u.values))
    return 2.0 * max(osc, 1e-300) / max(collar, 1e-300)


def _ma_grid2d(u: ConvexFn, check: bool = True) -> DiscreteMeasure:
    mesh = u.mesh
    N = mesh.n_nodes
    hd = lower_hull(mesh.nodes, u.values)
    if hd.flat:
        return DiscreteMeasure(mesh, np.zeros(N), np.zeros(mesh.n_cells))
    if check:
        env = _envelope_from_hull(mesh.nodes, u.values, hd)
        rng = float(np.ptp(u.values)) or 1.0
        gap = u.values - env
        bad = np.nonzero(gap > 1e-10 * rng)[0]
        if bad.size:
            i = int(bad[np.argmax(gap[bad])])
            raise ConvexityError(f"node {i} lies {gap[i]:.3e} above the lower convex hull", (i, i, i))
    F = len(hd.simplices)
    vid = hd.simplices.ravel()
    pts = hd.grads[np.repeat(np.arange(F), 3)]
    areas = _polygon_areas(vid, pts, N)
    L = lipschitz_radius(u)
    norms = np.linalg.norm(hd.grads, axis=1)
    clipped = 0
    if np.any(norms > L):
        hot = np.unique(hd.simplices[norms > L])
        hot = hot[mesh.interior[hot]]
        for i in hot:
            g = hd.grads[np.any(hd.simplices == i, axis=1)]
            c = g.mean(axis=0)
            g = g[np.argsort(np.arctan2(g[:, 1] - c[1], g[:, 0] - c[0]))]
            areas[i] = _shoelace(_clip_polygon(g, L))
            clipped += 1
    atoms = np.where(mesh.interior & hd.is_vertex, np.maximum(areas, 0.0), 0.0)
    return DiscreteMeasure(mesh, atoms, np.zeros(mesh.n_cells), clipped=clipped)


def hull_jacobian(mesh: Mesh, hd: HullData):
    """Edge weights d(area_i)/d(u_j) = |dual edge| / |x_i - x_j| of the lower hull."""
    rows, cols, w = [], [], []
    F = len(hd.simplices)
    for k in range(3):
        g = hd.neighbors[:, k]
        ok = g > np.arange(F)
        f = np.nonzero(ok)[0]
        g = g[ok]
        others = [(k + 1) % 3, (k + 2) % 3]
        i = hd.simplices[f, others[0]]
        j = hd.simplices[f, others[1]]
        dual = np.linalg.norm(hd.grads[f] - hd.grads[g], axis=1)
        primal = np.linalg.norm(mesh.nodes[i] - mesh.nodes[j], axis=1)
        rows.append(i)
        cols.append(j)
        w.append(dual / primal)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(w)


def _envelope_from_hull(nodes, values, hd: HullData, chunk: int = 256):
    if hd.flat:
        p = hd.planes[0]
        return nodes @ p[:2] + p[2]
    env = values.astype(float).copy()
    todo = np.nonzero(~hd.is_vertex)[0]
    P = hd.planes
    for s in range(0, len(todo), chunk):
        ids = todo[s : s + chunk]
        vals = nodes[ids] @ P[:, :2].T + P[:, 2]
        env[ids] = np.minimum(values[ids], vals.max(axis=1))
    return env


# --------------------------------------------------------------------------
# public operations


def ma_measure(u: ConvexFn, check: bool = True) -> DiscreteMeasure:
    """Monge-Ampere measure of a discretely convex function."""
    if u.backend == "pl1d":
        return _ma_pl1d(u)
    if u.backend == "radial":
        return _ma_radial(u)
    return _ma_grid2d(u, check=check)


def mixed_ma_measure(us) -> DiscreteMeasure:
    """Mixed measure mu_n[u_1..u_n] by polarization over all nonempty subsets.

    Cancellation noise in [-1e-9*total, 0) is clamped to zero; anything more
    negative raises :class:`PolarizationError`.
    """
    us = list(us)
    if not us:
        raise ShapeError("need at least one function")
    _check_same_mesh(*us)
    n = us[0].dim
    if len(us) != n:
        raise ShapeError(f"mixed measure in dimension {n} takes {n} functions, got {len(us)}")
    mesh = us[0].mesh
    atoms = np.zeros(mesh.n_nodes)
    cells = np.zeros(mesh.n_cells)
    scale = 0.0
    for k in range(1, n + 1):
        sign = (-1) ** (n - k)
        for subset in itertools.combinations(range(n), k):
            s = us[subset[0]]
            for i in subset[1:]:
                s = s + us[i]
            mu = ma_measure(s)
            atoms += sign * mu.atoms
            cells += sign * mu.cells
            scale = max(scale, mu.total)
    fact = math.factorial(n)
    atoms /= fact
    cells /= fact
    eps = 1e-9 * max(scale, 1e-300)
    worst = min(atoms.min(initial=0.0), cells.min(initial=0.0))
    if worst < -eps:
        raise PolarizationError(f"mixed measure has negative mass {worst:.3e} beyond clamp {eps:.3e}")
    return DiscreteMeasure(mesh, np.maximum(atoms, 0.0), np.maximum(cells, 0.0))


def _require_zero_boundary(u: ConvexFn):
    tr = u.boundary_trace
    scale = max(u.sup_norm(), 1.0)
    if tr.size and np.max(np.abs(tr)) > 1e-12 * scale:
        raise ContractError("energy needs a zero boundary trace")


def energy(u: ConvexFn, mu: DiscreteMeasure | None = None) -> float:
    """Monge-Ampere energy: integral of -u against mu_u."""
    _require_zero_boundary(u)
    mu = ma_measure(u) if mu is None else mu
    return mu.integrate(-u.values, -u.at_midpoints())


def mixed_energy(u0: ConvexFn, us) -> float:
    us = list(us)
    _check_same_mesh(u0, *us)
    for f in (u0, *us):
        _require_zero_boundary(f)
    mu = mixed_ma_measure(us)
    return mu.integrate(-u0.values, -u0.at_midpoints())


def _lower_chain(x, y):
    """Indices of the lower convex hull of points sorted by x (monotone chain)."""
    hull = []
    for i in range(len(x)):
        while len(hull) >= 2:
            j, k = hull[-2], hull[-1]
            if (x[k] - x[j]) * (y[i] - y[j]) - (y[k] - y[j]) * (x[i] - x[j]) <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return np.array(hull)


def convex_envelope(f, mesh: Mesh | None = None) -> ConvexFn:
    """Largest discretely convex function below the nodal values ``f``."""
    if isinstance(f, ConvexFn):
        mesh, vals = f.mesh, f.values
    else:
        vals = np.asarray(f, dtype=float)
    if mesh is None:
        raise ShapeError("a mesh is required for raw nodal values")
    if vals.shape != (mesh.n_nodes,):
        raise ShapeError("values do not match the mesh")
    if mesh.kind == "pl1d":
        x = mesh.nodes
        idx = _lower_chain(x, vals)
        env = np.interp(x, x[idx], vals[idx])
        return ConvexFn(mesh, np.minimum(env, vals))
    if mesh.kind == "radial":
        # envelope of the even extension to [-R, R]
        r = mesh.nodes
        xs = np.concatenate([-r[::-1], r[1:]])
        ys = np.concatenate([vals[::-1], vals[1:]])
        idx = _lower_chain(xs, ys)
        env = np.interp(xs, xs[idx], ys[idx])[len(r) - 1 :]
        return ConvexFn(mesh, np.minimum(env, vals))
    hd = lower_hull(mesh.nodes, vals)
    return ConvexFn(mesh, _envelope_from_hull(mesh.nodes, vals, hd))


def is_convex(u: ConvexFn, tol: float = 1e-10) -> bool:
    """Discrete convexity: 1D/radial by slope monotonicity, planar by envelope idempotence."""
    if u.backend == "grid2d":
        env = convex_envelope(u.values, u.mesh).values
        return bool(np.all(u.values - env <= tol * (np.ptp(u.values) or 1.0)))
    try:
        ma_measure(u)
    except ConvexityError:
        return False
    return True


def check_convex(u: ConvexFn) -> None:
    ma_measure(u, check=True)


# --------------------------------------------------------------------------
# test-function decomposition


def _squared_norm(mesh: Mesh):
    if mesh.kind == "radial":
        return mesh.nodes**2
    x = mesh.nodes
    return x**2 if x.ndim == 1 else np.sum(x**2, axis=1)


def lipschitz_decompose(phi, mesh: Mesh, collar: float):
    """Write compactly supported nodal data as a difference of two zero-boundary convex functions.

    Returns ``(phi1, phi2)`` with ``phi1 - phi2 == phi`` at the nodes, following
    phi1 = max(phi + C0|x|^2 - C1, C2 v), phi2 = max(C0|x|^2 - C1, C2 v) with v
    the unit-depth cone over the domain.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (mesh.n_nodes,):
        raise ShapeError("phi does not match the mesh")
    near = mesh.node_dist <= collar
    if np.any(np.abs(phi[near]) > 0):
        raise ValueError("phi must vanish on the boundary collar")
    q = _squared_norm(mesh)
    if not np.any(phi != 0):
        c0 = 1.0
    elif mesh.kind in ("pl1d", "radial"):
        x = mesh.nodes
        s = np.diff(phi) / np.diff(x)
        jumps = s[1:] - s[:-1]
        spans = x[2:] - x[:-2]
        c0 = max(0.0, float(np.max(-jumps / spans))) + 1e-3
    else:
        c0 = 1e-3
        while not is_convex(ConvexFn(mesh, phi + c0 * q), tol=0.0):
            c0 *= 2.0
    c0 *= 1.01
    c1 = float(np.max(np.abs(phi) + c0 * q)) + 1.0
    v = cone(mesh).values
    supp = phi != 0
    vmax = float(np.max(v[supp])) if supp.any() else -1.0
    c2 = 2.0 * c1 / (-vmax) * 1.01 + 1e-12
    base = c2 * v
    phi1 = np.maximum(phi + c0 * q - c1, base)
    phi2 = np.maximum(c0 * q - c1, base)
    phi1[mesh.boundary] = 0.0
    phi2[mesh.boundary] = 0.0
    return ConvexFn(mesh, phi1), ConvexFn(mesh, phi2)


# --------------------------------------------------------------------------
# dyadic rebinning


def _bounding_box(mesh: Mesh):
    dom = mesh.domain
    if mesh.kind == "radial":
        R = mesh.nodes[-1] + mesh.gap[-1]
        return np.array([0.0]), np.array([R])
    if isinstance(dom, Interval):
        return np.array([dom.a]), np.array([dom.b])
    if isinstance(dom, Ball):
        c = np.asarray(dom.center)
        return c - dom.radius, c + dom.radius
    v = np.asarray(dom.vertices)
    return v.min(axis=0), v.max(axis=0)


def dyadic_bins(mesh: Mesh, points, level: int) -> np.ndarray:
    """Flat index of the level-``level`` dyadic subcell containing each point."""
    lo, hi = _bounding_box(mesh)
    k = 2**level
    pts = np.asarray(points, dtype=float).reshape(len(points), -1)
    idx = np.floor((pts - lo) / (hi - lo) * k).astype(int)
    idx = np.clip(idx, 0, k - 1)
    flat = np.zeros(len(pts), dtype=int)
    for d in range(idx.shape[1]):
        flat = flat * k + idx[:, d]
    return flat


def canonical_approximation(nu: DiscreteMeasure, level: int) -> DiscreteMeasure:
    """Spread the mass of every dyadic subcell uniformly over the cells inside it.

    Atoms and cell masses are assigned to subcells by node position and cell
    midpoint; a subcell without mesh cells keeps its mass as an atom at the
    closest node.  Total mass is preserved.
    """
    if level < 0:
        raise ValueError("level must be nonnegative")
    mesh = nu.mesh
    node_bin = dyadic_bins(mesh, mesh.nodes, level)
    cell_bin = dyadic_bins(mesh, mesh.cell_midpoints, level)
    nb = int(max(node_bin.max(), cell_bin.max())) + 1
    mass = np.bincount(node_bin, nu.atoms, nb) + np.bincount(cell_bin, nu.cells, nb)
    vol = np.bincount(cell_bin, mesh.cell_volumes, nb)
    cells = np.where(vol[cell_bin] > 0, mass[cell_bin] * mesh.cell_volumes / np.where(vol[cell_bin] > 0, vol[cell_bin], 1), 0.0)
    atoms = np.zeros(mesh.n_nodes)
    orphan = np.nonzero((vol == 0) & (mass > 0))[0]
    for b in orphan:
        members = np.nonzero(node_bin == b)[0]
        atoms[members[0]] += mass[b]
    return DiscreteMeasure(mesh, atoms, cells)
