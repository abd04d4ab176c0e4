"""Convex domains, meshes and boundary-distance functions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import Delaunay
from scipy.special import gamma


class DomainError(ValueError):
    """A point lies outside the closure of the domain (or on its boundary when interior is required)."""


def unit_ball_volume(n: int) -> float:
    """Lebesgue measure of the unit ball in R^n."""
    return math.pi ** (n / 2) / gamma(n / 2 + 1)


@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"interval needs a < b, got ({self.a}, {self.b})")

    dim = 1
    kind = "interval"

    @property
    def diameter(self) -> float:
        return self.b - self.a

    @property
    def center(self) -> float:
        return 0.5 * (self.a + self.b)

    def dist(self, x):
        x = np.asarray(x, dtype=float)
        return np.minimum(x - self.a, self.b - x)

    def ray_exit(self, x, direction):
        # direction is +1 or -1 in 1D
        return self.b - x if direction > 0 else x - self.a

    def to_dict(self):
        return {"kind": "interval", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))

    kind = "ball"

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def dist(self, x):
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.center)
        if self.dim == 1:
            r = np.abs(x - c[0]) if x.ndim <= 1 and x.shape != (1,) else np.abs(x[..., 0] - c[0])
        else:
            r = np.linalg.norm(x - c, axis=-1)
        return self.radius - r

    def ray_exit(self, x, direction):
        d = np.asarray(direction, dtype=float)
        y = np.asarray(x, dtype=float) - np.asarray(self.center)
        b = float(y @ d)
        disc = b * b - float(y @ y) + self.radius**2
        return -b + math.sqrt(max(disc, 0.0))

    def to_dict(self):
        return {"kind": "ball", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Polygon:
    vertices: tuple

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ValueError("polygon needs at least 3 planar vertices")
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        if np.any(cross < 0):
            raise ValueError("polygon vertices must be convex and counter-clockwise")
        area = 0.5 * np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
        if area <= 0:
            raise ValueError("polygon has zero area")
        object.__setattr__(self, "vertices", tuple(map(tuple, v)))

    dim = 2
    kind = "polygon"

    @cached_property
    def _halfplanes(self):
        v = np.asarray(self.vertices)
        e = np.roll(v, -1, axis=0) - v
        normals = np.column_stack([e[:, 1], -e[:, 0]])
        normals /= np.linalg.norm(normals, axis=1)[:, None]
        offsets = np.einsum("ij,ij->i", normals, v)
        return normals, offsets

    @property
    def diameter(self) -> float:
        v = np.asarray(self.vertices)
        return float(np.max(np.linalg.norm(v[:, None] - v[None], axis=-1)))

    @property
    def center(self):
        return tuple(np.asarray(self.vertices).mean(axis=0))

    def dist(self, x):
        # for interior points the distance to the boundary is the smallest slack
        # over the edge lines; outside points get a negative value
        x = np.asarray(x, dtype=float)
        normals, offsets = self._halfplanes
        slack = offsets - x @ normals.T
        inside = np.min(slack, axis=-1)
        if np.all(inside >= 0):
            return inside
        return np.where(inside >= 0, inside, -self._outside_dist(x))

    def _outside_dist(self, x):
        v = np.asarray(self.vertices)
        w = np.roll(v, -1, axis=0)
        pts = np.atleast_2d(x)
        out = np.full(len(pts), np.inf)
        for p, q in zip(v, w):
            d = q - p
            t = np.clip(((pts - p) @ d) / (d @ d), 0.0, 1.0)
            out = np.minimum(out, np.linalg.norm(pts - (p + t[:, None] * d), axis=1))
        return out.reshape(np.shape(x)[:-1])

    def ray_exit(self, x, direction):
        normals, offsets = self._halfplanes
        d = np.asarray(direction, dtype=float)
        nd = normals @ d
        slack = offsets - normals @ np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            t = np.where(nd > 1e-15, slack / np.where(nd > 1e-15, nd, 1.0), np.inf)
        return float(np.min(t))

    def to_dict(self):
        return {"kind": "polygon", "vertices": [list(p) for p in self.vertices]}


ConvexDomain = Interval | Ball | Polygon


def domain_from_dict(cfg: dict) -> ConvexDomain:
    kind = cfg.get("kind")
    if kind == "interval":
        return Interval(float(cfg["a"]), float(cfg["b"]))
    if kind == "ball":
        center = cfg.get("center")
        if center is None:
            center = [0.0] * int(cfg.get("dim", 2))
        return Ball(tuple(center), float(cfg.get("radius", 1.0)))
    if kind == "polygon":
        return Polygon(tuple(map(tuple, cfg["vertices"])))
    raise ValueError(f"unknown domain kind {kind!r}")


def dist_to_boundary(domain: ConvexDomain, x) -> float:
    """Euclidean distance from ``x`` to the boundary; raises if ``x`` is outside."""
    d = float(np.asarray(domain.dist(x)))
    tol = 1e-12 * domain.diameter
    if d < -tol:
        raise DomainError(f"point {x} lies outside the domain")
    return max(d, 0.0)


def _chord_ratio(domain, x, theta):
    d = np.array([math.cos(theta), math.sin(theta)])
    t1 = domain.ray_exit(x, d)
    t2 = domain.ray_exit(x, -d)
    return min(t1, t2) / max(t1, t2)


def normalized_distance(domain: ConvexDomain, x, n_directions: int = 2048) -> float:
    """Smallest near/far ratio over chords through ``x``.

    In 1D there is a single chord.  For balls and polygons the ratio is
    minimized by an angular sweep followed by a golden-section refinement
    around the best direction (accurate to about 1e-6).
    """
    d = float(np.asarray(domain.dist(x)))
    if d <= 1e-12 * domain.diameter:
        raise DomainError(f"normalized distance needs an interior point, got {x}")
    if domain.dim == 1:
        xv = float(np.asarray(x).ravel()[0])
        if isinstance(domain, Ball):
            lo, hi = domain.center[0] - domain.radius, domain.center[0] + domain.radius
        else:
            lo, hi = domain.a, domain.b
        t1, t2 = hi - xv, xv - lo
        return min(t1, t2) / max(t1, t2)
    if domain.dim != 2:
        if isinstance(domain, Ball):
            rho = float(np.linalg.norm(np.asarray(x) - np.asarray(domain.center)))
            return (domain.radius - rho) / (domain.radius + rho)
        raise NotImplementedError("normalized distance sweep is planar")
    x = np.asarray(x, dtype=float)
    thetas = np.linspace(0.0, math.pi, n_directions, endpoint=False)
    vals = np.array([_chord_ratio(domain, x, t) for t in thetas])
    k = int(np.argmin(vals))
    step = math.pi / n_directions
    res = minimize_scalar(
        lambda t: _chord_ratio(domain, x, t),
        bracket=None,
        bounds=(thetas[k] - step, thetas[k] + step),
        method="bounded",
        options={"xatol": 1e-10},
    )
    return float(min(vals[k], res.fun))


# --------------------------------------------------------------------------
# meshes


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Nodes, boundary flags and cells of one of the three backends.

    ``kind`` is ``"pl1d"`` (sorted 1D nodes, interval cells), ``"radial"``
    (radius grid 0 = r_0 < ... < r_M = R for radial functions on a ball in
    R^dim, shell cells) or ``"grid2d"`` (planar nodes, triangle cells).
    Radial meshes also keep ``gap = R - r`` so that shells accumulating at the
    boundary stay resolved below machine epsilon.
    """

    kind: str
    nodes: np.ndarray
    boundary: np.ndarray
    cells: np.ndarray
    domain: ConvexDomain
    dim: int
    gap: np.ndarray | None = field(default=None)

    def __post_init__(self):
        for name in ("nodes", "boundary", "cells", "gap"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, _readonly(val))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @cached_property
    def interior(self) -> np.ndarray:
        return _readonly(~self.boundary)

    @cached_property
    def cell_volumes(self) -> np.ndarray:
        if self.kind == "pl1d":
            return _readonly(np.diff(self.nodes))
        if self.kind == "radial":
            g = self.gap
            R = self.nodes[-1] + g[-1]
            return _readonly(unit_ball_volume(self.dim) * _pow_diff(g[1:], g[:-1], R, self.dim))
        p = self.nodes[self.cells]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return _readonly(0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]))

    @cached_property
    def cell_midpoints(self) -> np.ndarray:
        return _readonly(self.nodes[self.cells].mean(axis=1))

    @cached_property
    def node_dist(self) -> np.ndarray:
        """Distance of each node to the boundary of the domain."""
        if self.kind == "radial":
            return self.gap
        d = np.maximum(np.asarray(self.domain.dist(self.nodes), dtype=float), 0.0)
        d[self.boundary] = 0.0
        return _readonly(d)

    @cached_property
    def cell_dist(self) -> np.ndarray:
        """Distance of each cell midpoint to the boundary."""
        if self.kind == "radial":
            return _readonly(0.5 * (self.gap[:-1] + self.gap[1:]))
        return _readonly(np.maximum(np.asarray(self.domain.dist(self.cell_midpoints), dtype=float), 0.0))

    @property
    def h(self) -> float:
        """Largest cell diameter."""
        if self.kind in ("pl1d", "radial"):
            return float(np.max(np.diff(self.nodes)))
        p = self.nodes[self.cells]
        edges = np.linalg.norm(p - np.roll(p, 1, axis=1), axis=-1)
        return float(edges.max())

    def same_as(self, other: "Mesh") -> bool:
        return self is other or (
            self.kind == other.kind
            and self.nodes.shape == other.nodes.shape
            and np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.cells, other.cells)
        )

    def midpoint_values(self, values) -> np.ndarray:
        """Linear interpolation of nodal values at cell midpoints."""
        return np.asarray(values)[self.cells].mean(axis=1)


def _pow_diff(g_small, g_large, R, n):
    """(R - g_small)^n - (R - g_large)^n computed without cancellation."""
    a = R - np.asarray(g_small, dtype=float)
    b = R - np.asarray(g_large, dtype=float)
    diff = np.asarray(g_large, dtype=float) - np.asarray(g_small, dtype=float)
    acc = np.zeros_like(a)
    for j in range(n):
        acc = acc + a ** (n - 1 - j) * b**j
    return diff * acc


def interval_mesh(domain: Interval, n_nodes: int | None = None, nodes=None) -> Mesh:
    """Uniform (or user-given sorted) 1D mesh with boundary nodes at both ends."""
    if nodes is None:
        if n_nodes is None or n_nodes < 3:
            raise ValueError("need at least 3 nodes")
        x = np.linspace(domain.a, domain.b, n_nodes)
    else:
        x = np.asarray(nodes, dtype=float)
        if np.any(np.diff(x) <= 0):
            raise ValueError("1D nodes must be strictly increasing")
        if abs(x[0] - domain.a) > 1e-12 * domain.diameter or abs(x[-1] - domain.b) > 1e-12 * domain.diameter:
            raise ValueError("first and last node must sit on the interval ends")
    boundary = np.zeros(len(x), dtype=bool)
    boundary[[0, -1]] = True
    cells = np.column_stack([np.arange(len(x) - 1), np.arange(1, len(x))])
    return Mesh("pl1d", x, boundary, cells, domain, 1)


def graded_interval_mesh(domain: Interval, n_nodes: int, grading: float = 2.0) -> Mesh:
    """1D mesh clustered at both ends: spacing behaves like dist^(1-1/grading)."""
    s = np.linspace(-1.0, 1.0, n_nodes)
    t = np.sign(s) * (1.0 - (1.0 - np.abs(s)) ** grading)
    x = domain.center + 0.5 * domain.diameter * t
    x[0], x[-1] = domain.a, domain.b
    return interval_mesh(domain, nodes=x)


def radial_mesh(n: int, radius: float = 1.0, n_shells: int | None = None, gaps=None) -> Mesh:
    """Radius grid for radial profiles on the ball of given radius in R^n.

    ``gaps`` (distances to the outer sphere, decreasing from ``radius`` to 0)
    may be given instead of a uniform shell count; this is how boundary-graded
    grids are built.
    """
    if gaps is None:
        if n_shells is None or n_shells < 2:
            raise ValueError("need at least 2 shells")
        r = np.linspace(0.0, radius, n_shells + 1)
        g = radius - r
        g[-1] = 0.0
    else:
        g = np.asarray(gaps, dtype=float)
        if abs(g[0] - radius) > 1e-14 * radius or g[-1] != 0.0 or np.any(np.diff(g) >= 0):
            raise ValueError("gaps must decrease strictly from the radius to 0")
        r = radius - g
        r[0] = 0.0
    if np.any(np.diff(r) < 0):
        raise ValueError("radius grid must be nondecreasing")
    boundary = np.zeros(len(r), dtype=bool)
    boundary[-1] = True
    cells = np.column_stack([np.arange(len(r) - 1), np.arange(1, len(r))])
    dom = Ball(tuple([0.0] * n), radius)
    return Mesh("radial", r, boundary, cells, dom, n, gap=g)


def power_graded_gaps(radius: float, n_shells: int, exponent: float) -> np.ndarray:
    """Gaps g_k = radius * (1 - k/M)^exponent; large exponents cluster shells at the boundary."""
    k = np.arange(n_shells + 1)
    g = radius * (1.0 - k / n_shells) ** exponent
    g[-1] = 0.0
    return g


def geometric_gaps(radius: float, ratio: float = 1.01, g_min: float = 1e-12, n_inner: int = 200, switch: float = 0.1) -> np.ndarray:
    """Uniform gaps down to ``switch * radius``, then geometric with the given ratio down to ``g_min``.

    Meant for profiles whose boundary behaviour is a small power of the gap;
    ``g_min`` may lie far below machine epsilon relative to the radius.
    """
    if ratio <= 1.0:
        raise ValueError("ratio must exceed 1")
    g_switch = switch * radius
    inner = np.linspace(radius, g_switch, n_inner, endpoint=False)
    m = int(math.ceil(math.log(g_switch / g_min) / math.log(ratio)))
    geo = g_switch * ratio ** -np.arange(m + 1, dtype=float)
    return np.concatenate([inner, geo, [0.0]])


def _boundary_points(domain, h):
    if isinstance(domain, Ball):
        k = max(8, int(math.ceil(2 * math.pi * domain.radius / h)))
        t = 2 * math.pi * np.arange(k) / k
        c = np.asarray(domain.center)
        return c + domain.radius * np.column_stack([np.cos(t), np.sin(t)])
    v = np.asarray(domain.vertices)
    pts = []
    for p, q in zip(v, np.roll(v, -1, axis=0)):
        k = max(1, int(math.ceil(np.linalg.norm(q - p) / h)))
        s = np.arange(k) / k
        pts.append(p + s[:, None] * (q - p))
    return np.vstack(pts)


def grid_mesh(domain: Ball | Polygon, n: int, margin: float = 0.25) -> Mesh:
    """Planar mesh from an ``n x n`` grid over the bounding box.

    Interior nodes are the grid points at distance more than ``margin * h``
    from the boundary; boundary nodes are placed on the boundary with spacing
    at most ``h``.  The triangulation is the Delaunay triangulation of a
    slightly sheared copy of the nodes, which splits every grid square along
    the same diagonal.
    """
    if domain.dim != 2:
        raise ValueError("grid meshes are planar")
    if isinstance(domain, Ball):
        lo = np.asarray(domain.center) - domain.radius
        hi = np.asarray(domain.center) + domain.radius
    else:
        v = np.asarray(domain.vertices)
        lo, hi = v.min(axis=0), v.max(axis=0)
    xs = np.linspace(lo[0], hi[0], n)
    ys = np.linspace(lo[1], hi[1], n)
    h = max(xs[1] - xs[0], ys[1] - ys[0])
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    grid = np.column_stack([X.ravel(), Y.ravel()])
    keep = np.asarray(domain.dist(grid)) > margin * h
    interior = grid[keep]
    bnd = _boundary_points(domain, h)
    nodes = np.vstack([interior, bnd])
    boundary = np.zeros(len(nodes), dtype=bool)
    boundary[len(interior):] = True
    sheared = nodes.copy()
    sheared[:, 0] += 1e-4 * nodes[:, 1]
    tri = Delaunay(sheared)
    cells = tri.simplices
    p = nodes[cells]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    cells = cells[area > 1e-14 * h * h]
    return Mesh("grid2d", nodes, boundary, cells, domain, 2)


def mesh_from_dict(domain: ConvexDomain, cfg: dict) -> Mesh:
    kind = cfg.get("kind", "auto")
    size = int(cfg.get("n", 201))
    if kind == "radial" or (kind == "auto" and isinstance(domain, Ball) and cfg.get("radial", False)):
        return radial_mesh(int(cfg.get("dim", domain.dim)), domain.radius if isinstance(domain, Ball) else 1.0, size)
    if isinstance(domain, Interval):
        if cfg.get("grading"):
            return graded_interval_mesh(domain, size, float(cfg["grading"]))
        return interval_mesh(domain, size)
    if isinstance(domain, Ball) and domain.dim == 1:
        return interval_mesh(Interval(domain.center[0] - domain.radius, domain.center[0] + domain.radius), size)
    return grid_mesh(domain, size)
