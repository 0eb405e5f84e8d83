"""Planar domains with smooth boundary loops and their triangulations.

A domain is described by periodic boundary parametrizations plus an inside
predicate.  Meshes are plain vertex/edge/triangle tables together with the
signed incidence operators of the simplicial cochain complex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.spatial import Delaunay, cKDTree

from .errors import DomainError, GeometryAmbiguityError, MeshError

_LOOP_SAMPLES = 2048


class BoundaryLoop:
    """Smooth closed curve parametrized over [0, 1).

    The domain must lie on the left of the traversal direction (outer loops
    counterclockwise, hole loops clockwise).
    """

    def __init__(self, point: Callable[[float], np.ndarray],
                 derivative: Callable[[float], np.ndarray]):
        self.point = point
        self.derivative = derivative
        ts = np.linspace(0.0, 1.0, _LOOP_SAMPLES, endpoint=False)
        self._sample_t = ts
        self._sample_xy = np.array([point(t) for t in ts])
        speed = np.array([np.linalg.norm(derivative(t)) for t in ts])
        if speed.min() < 1e-10:
            raise DomainError("loop parametrization has vanishing derivative")
        seg = np.diff(np.vstack([self._sample_xy, self._sample_xy[:1]]), axis=0)
        self._cum_len = np.concatenate([[0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))])
        self.length = float(self._cum_len[-1])
        self._tree = cKDTree(self._sample_xy)

    def param_at_arclength(self, s: float) -> float:
        s = s % self.length
        i = int(np.searchsorted(self._cum_len, s, side="right")) - 1
        i = min(i, _LOOP_SAMPLES - 1)
        ds = self._cum_len[i + 1] - self._cum_len[i]
        frac = (s - self._cum_len[i]) / ds if ds > 0 else 0.0
        return (self._sample_t[i] + frac / _LOOP_SAMPLES) % 1.0

    def arclength_at_param(self, t: float) -> float:
        t = t % 1.0
        x = t * _LOOP_SAMPLES
        i = int(x) % _LOOP_SAMPLES
        frac = x - int(x)
        nxt = self._cum_len[i + 1]
        return float(self._cum_len[i] + frac * (nxt - self._cum_len[i]))

    def tangent(self, t: float) -> np.ndarray:
        d = np.asarray(self.derivative(t), dtype=float)
        return d / np.linalg.norm(d)

    def nearest(self, p) -> tuple[float, float]:
        """Return (param, distance) of the closest boundary point to p.

        Refines the table lookup by a few projection steps.
        """
        _, i = self._tree.query(np.asarray(p, dtype=float))
        t = self._sample_t[int(i)]
        for _ in range(12):
            c = np.asarray(self.point(t), dtype=float)
            d = np.asarray(self.derivative(t), dtype=float)
            step = float(np.dot(p - c, d) / np.dot(d, d))
            step = max(-1.5 / _LOOP_SAMPLES, min(1.5 / _LOOP_SAMPLES, step))
            t = (t + step) % 1.0
            if abs(step) < 1e-14:
                break
        return t, float(np.linalg.norm(p - np.asarray(self.point(t))))

    def min_curvature_radius(self) -> float:
        ts = self._sample_t
        dt = 1e-5
        radii = []
        for t in ts[::8]:
            d1 = np.asarray(self.derivative(t), dtype=float)
            d2 = (np.asarray(self.derivative((t + dt) % 1.0), dtype=float)
                  - np.asarray(self.derivative((t - dt) % 1.0), dtype=float)) / (2 * dt)
            sp = np.linalg.norm(d1)
            cross = abs(d1[0] * d2[1] - d1[1] * d2[0])
            if cross > 1e-12:
                radii.append(sp ** 3 / cross)
        return min(radii) if radii else math.inf


@dataclass
class SurfaceDomain:
    """Compact planar region bounded by disjoint smooth loops."""

    boundary_loops: list[BoundaryLoop]
    inside_test: Callable[[np.ndarray], bool]
    bounding_box: tuple[float, float, float, float]  # xmin, xmax, ymin, ymax
    name: str = "domain"
    euler_characteristic: int = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.euler_characteristic is None:
            # planar region with holes: chi = 2 - number of loops
            self.euler_characteristic = 2 - len(self.boundary_loops)

    def boundary_distance(self, p) -> float:
        return min(loop.nearest(p)[1] for loop in self.boundary_loops)

    def feature_size(self) -> float:
        fs = min(loop.min_curvature_radius() for loop in self.boundary_loops)
        for i, a in enumerate(self.boundary_loops):
            for b in self.boundary_loops[i + 1:]:
                d = cKDTree(a._sample_xy).query(b._sample_xy)[0].min()
                fs = min(fs, float(d))
        return fs

    def validate(self, n_probe: int = 64) -> None:
        """Sampled consistency checks of the domain invariants."""
        for li, loop in enumerate(self.boundary_loops):
            eps = 1e-3 * max(loop.length, 1.0) / (2 * math.pi)
            for t in np.linspace(0.0, 1.0, n_probe, endpoint=False):
                c = np.asarray(loop.point(t), dtype=float)
                nrm = outward_normal(self, li, t)
                if self.inside_test(c + eps * nrm):
                    raise DomainError("inside_test true just outside loop %d" % li)
                if not self.inside_test(c - eps * nrm):
                    raise DomainError("inside_test false just inside loop %d" % li)
        for i, a in enumerate(self.boundary_loops):
            for b in self.boundary_loops[i + 1:]:
                if cKDTree(a._sample_xy).query(b._sample_xy)[0].min() < 1e-9:
                    raise DomainError("boundary loops intersect")


def outward_normal(domain: SurfaceDomain, loop_index: int, param: float) -> np.ndarray:
    """Unit normal at a boundary point, pointing out of the domain.

    Verified with inside-test probes at two lengths; raises if they disagree.
    """
    loop = domain.boundary_loops[loop_index]
    t = loop.tangent(param)
    c = np.asarray(loop.point(param), dtype=float)
    cand = np.array([t[1], -t[0]])  # right of travel; domain lies on the left
    scale = max(loop.length, 1.0) / (2 * math.pi)
    verdicts = []
    for eps in (1e-3 * scale, 3e-3 * scale):
        out_ok = not domain.inside_test(c + eps * cand)
        in_ok = domain.inside_test(c - eps * cand)
        verdicts.append((out_ok, in_ok))
    if all(v == (True, True) for v in verdicts):
        return cand
    if all(v == (False, False) for v in verdicts):
        return -cand
    raise GeometryAmbiguityError(
        "normal probe inconclusive at loop %d, t=%g" % (loop_index, param))


def circle_loop(cx: float, cy: float, r: float, clockwise: bool = False) -> BoundaryLoop:
    sgn = -1.0 if clockwise else 1.0

    def point(t, cx=cx, cy=cy, r=r, sgn=sgn):
        a = 2 * math.pi * sgn * t
        return np.array([cx + r * math.cos(a), cy + r * math.sin(a)])

    def deriv(t, cx=cx, cy=cy, r=r, sgn=sgn):
        a = 2 * math.pi * sgn * t
        return 2 * math.pi * sgn * np.array([-r * math.sin(a), r * math.cos(a)])

    return BoundaryLoop(point, deriv)


def disk_domain(radius: float = 1.0, center=(0.0, 0.0)) -> SurfaceDomain:
    cx, cy = center
    r2 = radius * radius

    def inside(p, cx=cx, cy=cy, r2=r2):
        return (p[0] - cx) ** 2 + (p[1] - cy) ** 2 < r2

    return SurfaceDomain(
        boundary_loops=[circle_loop(cx, cy, radius)],
        inside_test=inside,
        bounding_box=(cx - radius, cx + radius, cy - radius, cy + radius),
        name="disk(r=%g)" % radius,
    )


def annulus_domain(r_inner: float, r_outer: float, center=(0.0, 0.0)) -> SurfaceDomain:
    if not 0 < r_inner < r_outer:
        raise DomainError("need 0 < r_inner < r_outer")
    cx, cy = center

    def inside(p, cx=cx, cy=cy, a2=r_inner ** 2, b2=r_outer ** 2):
        rr = (p[0] - cx) ** 2 + (p[1] - cy) ** 2
        return a2 < rr < b2

    return SurfaceDomain(
        boundary_loops=[circle_loop(cx, cy, r_outer, clockwise=False),
                        circle_loop(cx, cy, r_inner, clockwise=True)],
        inside_test=inside,
        bounding_box=(cx - r_outer, cx + r_outer, cy - r_outer, cy + r_outer),
        name="annulus(%g,%g)" % (r_inner, r_outer),
    )


# ---------------------------------------------------------------------------
# meshes


@dataclass(frozen=True)
class TriMesh:
    """Oriented triangle mesh with signed incidence operators.

    Edges are stored with low-index-to-high-index orientation; triangles are
    counterclockwise.  d0 maps 0-cochains to 1-cochains, d1 maps 1-cochains to
    2-cochains, and d1 @ d0 == 0 holds as an integer identity.
    """

    vertices: np.ndarray          # (V, 2)
    edges: np.ndarray             # (E, 2) int, v0 < v1
    triangles: np.ndarray         # (F, 3) int, ccw
    d0: csr_matrix                # (E, V) signed incidence
    d1: csr_matrix                # (F, E) signed incidence
    boundary_vertices: np.ndarray  # (V,) bool
    boundary_edges: np.ndarray     # (E,) bool
    tri_edges: np.ndarray          # (F, 3) edge index per triangle side
    h: float

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def euler_characteristic(self) -> int:
        return self.num_vertices - self.num_edges + self.num_triangles

    def triangle_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return 0.5 * np.abs(
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))

    def min_angle_deg(self) -> float:
        p = self.vertices[self.triangles]
        angles = []
        for k in range(3):
            a = p[:, (k + 1) % 3] - p[:, k]
            b = p[:, (k + 2) % 3] - p[:, k]
            cosang = np.einsum("ij,ij->i", a, b) / (
                np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angles.append(np.degrees(np.arccos(np.clip(cosang, -1, 1))))
        return float(np.min(angles))


def _edge_tables(triangles: np.ndarray):
    """Edge list plus signed incidence tables from a ccw triangle table."""
    edge_index: dict[tuple[int, int], int] = {}
    edges = []
    tri_edges = np.zeros_like(triangles)
    tri_signs = np.zeros_like(triangles)
    for f, (a, b, c) in enumerate(triangles):
        for k, (u, v) in enumerate(((a, b), (b, c), (c, a))):
            key = (min(u, v), max(u, v))
            if key not in edge_index:
                edge_index[key] = len(edges)
                edges.append(key)
            tri_edges[f, k] = edge_index[key]
            tri_signs[f, k] = 1 if u < v else -1
    edges = np.array(edges, dtype=int)
    E, V, F = len(edges), int(triangles.max()) + 1, len(triangles)
    d0 = csr_matrix(
        (np.repeat([[-1.0, 1.0]], E, axis=0).ravel(),
         (np.repeat(np.arange(E), 2), edges.ravel())),
        shape=(E, V))
    d1 = csr_matrix(
        (tri_signs.ravel().astype(float),
         (np.repeat(np.arange(F), 3), tri_edges.ravel())),
        shape=(F, E))
    return edges, tri_edges, d0, d1


def _finish_mesh(points: np.ndarray, triangles: np.ndarray,
                 domain: SurfaceDomain, n_boundary: int) -> TriMesh:
    # enforce ccw orientation
    p = points[triangles]
    det = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
           - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
    flip = det < 0
    triangles = triangles.copy()
    triangles[flip] = triangles[flip][:, [0, 2, 1]]

    edges, tri_edges, d0, d1 = _edge_tables(triangles)
    counts = np.zeros(len(edges), dtype=int)
    for row in tri_edges:
        counts[row] += 1
    if counts.max() > 2 or counts.min() < 1:
        raise MeshError("non-manifold edge (coface count %d..%d)"
                        % (counts.min(), counts.max()))
    boundary_edges = counts == 1
    boundary_vertices = np.zeros(len(points), dtype=bool)
    boundary_vertices[edges[boundary_edges].ravel()] = True
    seg = points[edges[:, 1]] - points[edges[:, 0]]
    h = float(np.hypot(seg[:, 0], seg[:, 1]).max())
    mesh = TriMesh(points, edges, triangles, d0, d1,
                   boundary_vertices, boundary_edges, tri_edges, h)
    _validate_mesh(mesh, domain)
    return mesh


def _validate_mesh(mesh: TriMesh, domain: SurfaceDomain) -> None:
    if abs(mesh.d1 @ mesh.d0).max() != 0:
        raise MeshError("incidence identity d1∘d0 = 0 violated")
    if mesh.euler_characteristic() != domain.euler_characteristic:
        raise MeshError("Euler characteristic %d, domain expects %d"
                        % (mesh.euler_characteristic(), domain.euler_characteristic))
    tol = mesh.h ** 2
    for v in np.nonzero(mesh.boundary_vertices)[0]:
        if domain.boundary_distance(mesh.vertices[v]) > tol:
            raise MeshError("boundary vertex %d is %g away from the boundary"
                            % (v, domain.boundary_distance(mesh.vertices[v])))


def build_mesh(domain: SurfaceDomain, target_h: float,
               smoothing_iterations: int = 25) -> TriMesh:
    """Deterministic triangulation with realized h <= 1.5 * target_h.

    Boundary vertices are placed at equal arclength on each loop; interior
    vertices start on a hexagonal lattice and are relaxed by Laplacian
    smoothing with re-triangulation.
    """
    if not (target_h > 0):
        raise MeshError("target_h must be positive, got %r" % (target_h,))
    fs = domain.feature_size()
    if target_h >= fs:
        raise MeshError("target_h=%g exceeds the domain feature size %g"
                        % (target_h, fs))
    mesh = None
    for shrink in (1.0, 0.9, 0.8, 0.7):
        mesh = _build_mesh_once(domain, shrink * target_h, smoothing_iterations)
        if mesh.h <= 1.5 * target_h:
            return mesh
    raise MeshError("realized h=%g exceeds 1.5*target_h=%g"
                    % (mesh.h, 1.5 * target_h))


def _build_mesh_once(domain: SurfaceDomain, target_h: float,
                     smoothing_iterations: int) -> TriMesh:
    boundary_pts = []
    for loop in domain.boundary_loops:
        n = max(8, int(math.ceil(loop.length / (0.95 * target_h))))
        ss = np.arange(n) * loop.length / n
        boundary_pts.extend(np.asarray(loop.point(loop.param_at_arclength(s)), dtype=float)
                            for s in ss)
    boundary_pts = np.array(boundary_pts)
    n_boundary = len(boundary_pts)

    xmin, xmax, ymin, ymax = domain.bounding_box
    dy = target_h * math.sqrt(3.0) / 2.0
    rows = int(math.floor((ymax - ymin) / dy)) + 1
    interior = []
    for j in range(rows):
        y = ymin + j * dy
        x0 = xmin + (target_h / 2.0 if j % 2 else 0.0)
        cols = int(math.floor((xmax - x0) / target_h)) + 1
        for i in range(cols):
            p = np.array([x0 + i * target_h, y])
            if domain.inside_test(p) and domain.boundary_distance(p) > 0.65 * target_h:
                interior.append(p)
    points = np.vstack([boundary_pts, np.array(interior).reshape(-1, 2)])

    def triangulate(pts):
        tri = Delaunay(pts)
        keep = []
        for simplex in tri.simplices:
            cen = pts[simplex].mean(axis=0)
            if domain.inside_test(cen):
                keep.append(simplex)
        if not keep:
            raise MeshError("triangulation produced no interior triangles")
        return np.array(keep, dtype=int)

    triangles = triangulate(points)
    for _ in range(smoothing_iterations):
        # Laplacian smoothing of interior vertices over triangulation edges
        pairs = np.vstack([triangles[:, [0, 1]], triangles[:, [1, 2]],
                           triangles[:, [2, 0]]])
        pairs = np.unique(np.sort(pairs, axis=1), axis=0)
        neighbor_sum = np.zeros_like(points)
        neighbor_cnt = np.zeros(len(points))
        np.add.at(neighbor_sum, pairs[:, 0], points[pairs[:, 1]])
        np.add.at(neighbor_sum, pairs[:, 1], points[pairs[:, 0]])
        np.add.at(neighbor_cnt, pairs.ravel(), 1)
        movable = np.ones(len(points), dtype=bool)
        movable[:n_boundary] = False
        movable &= neighbor_cnt > 0
        new_pts = points.copy()
        new_pts[movable] = neighbor_sum[movable] / neighbor_cnt[movable, None]
        # keep smoothed points strictly inside
        ok = np.array([domain.inside_test(p) for p in new_pts])
        new_pts[~ok] = points[~ok]
        points = new_pts
        triangles = triangulate(points)

    return _finish_mesh(points, triangles, domain, n_boundary)


@dataclass(frozen=True)
class MeshReport:
    num_vertices: int
    num_edges: int
    num_triangles: int
    euler_characteristic: int
    h: float
    min_angle_deg: float
    min_area: float


def mesh_report(mesh: TriMesh) -> MeshReport:
    if mesh.num_triangles == 0:
        raise MeshError("empty mesh")
    areas = mesh.triangle_areas()
    return MeshReport(
        num_vertices=mesh.num_vertices,
        num_edges=mesh.num_edges,
        num_triangles=mesh.num_triangles,
        euler_characteristic=mesh.euler_characteristic(),
        h=mesh.h,
        min_angle_deg=mesh.min_angle_deg(),
        min_area=float(areas.min()),
    )


def write_off(mesh: TriMesh, path) -> None:
    """Export the mesh in ASCII OFF format."""
    with open(path, "w") as fh:
        fh.write("OFF\n%d %d 0\n" % (mesh.num_vertices, mesh.num_triangles))
        for x, y in mesh.vertices:
            fh.write("%.12g %.12g 0\n" % (x, y))
        for a, b, c in mesh.triangles:
            fh.write("3 %d %d %d\n" % (a, b, c))
