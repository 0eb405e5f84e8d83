"""Critical points, adapted descent fields, flow tracing, and the
critical-point cochain complex on planar domains with boundary.

Generators of the complex in degree j are the interior critical points of
index j together with the boundary critical points of the restricted
function with tangential index j at which the outward normal derivative is
negative.  The differential counts signed flow lines of the adapted field.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (ComplexInconsistencyError, ConfigurationError,
                     IntegrationFailureError, MorseSmaleViolationError,
                     MorseViolationError, ResolutionError)
from .geometry import SurfaceDomain, outward_normal
from .homology import complex_betti_numbers, smith_normal_form

log = logging.getLogger(__name__)

INTERIOR = "interior"
BOUNDARY_MINUS = "boundary_minus"
BOUNDARY_PLUS = "boundary_plus"


@dataclass(frozen=True)
class MorseFunction:
    """Smooth function given by analytic value/gradient/Hessian evaluators."""

    value: callable
    gradient: callable
    hessian: callable

    def negated(self) -> "MorseFunction":
        return MorseFunction(
            value=lambda x: -self.value(x),
            gradient=lambda x: -np.asarray(self.gradient(x), dtype=float),
            hessian=lambda x: -np.asarray(self.hessian(x), dtype=float),
        )


@dataclass(frozen=True)
class CriticalPoint:
    location: np.ndarray
    kind: str                 # interior | boundary_minus | boundary_plus
    index: int                # Morse index of f (interior) or of f|boundary
    f_value: float
    frame: np.ndarray         # (index, 2) unstable directions, ordered
    curvatures: np.ndarray    # Hessian eigenvalues / tangential 2nd derivative
    normal_rate: float = 0.0  # |νf| at boundary points, 0 for interior
    loop_index: int = -1
    param: float = float("nan")
    nu_f: float = float("nan")
    tangent: np.ndarray = None
    normal: np.ndarray = None

    @property
    def is_sink(self) -> bool:
        return self.index == 0 and self.kind in (INTERIOR, BOUNDARY_MINUS)

    def label(self) -> str:
        return "%s j=%d @(%.4f,%.4f)" % (self.kind, self.index,
                                         self.location[0], self.location[1])


def _normalize_sign(v: np.ndarray) -> np.ndarray:
    """Deterministic sign choice: first nonzero component positive."""
    for comp in v:
        if abs(comp) > 1e-12:
            return v if comp > 0 else -v
    return v


def _dedupe(points: list[np.ndarray], tol: float) -> list[np.ndarray]:
    kept: list[np.ndarray] = []
    for p in points:
        if all(np.linalg.norm(p - k) > tol for k in kept):
            kept.append(p)
    return kept


def find_critical_points(f: MorseFunction, domain: SurfaceDomain,
                         grid_density: int = 25, tol: float = 1e-10
                         ) -> list[CriticalPoint]:
    """Locate and classify critical points of f and of f restricted to ∂M.

    Interior roots come from Newton iteration seeded on a regular grid; the
    search is complete only for basins reached from those seeds.  Boundary
    roots come from sign changes of the tangential derivative along each
    loop, refined by bisection.
    """
    if tol <= 0:
        raise ConfigurationError("tol must be positive")
    xmin, xmax, ymin, ymax = domain.bounding_box
    span = max(xmax - xmin, ymax - ymin)

    roots = []
    failures = 0
    for sx in np.linspace(xmin, xmax, grid_density):
        for sy in np.linspace(ymin, ymax, grid_density):
            x = np.array([sx, sy])
            if not domain.inside_test(x):
                continue
            ok = False
            for _ in range(60):
                g = np.asarray(f.gradient(x), dtype=float)
                if np.linalg.norm(g) < tol:
                    ok = True
                    break
                H = np.asarray(f.hessian(x), dtype=float)
                try:
                    step = np.linalg.solve(H, g)
                except np.linalg.LinAlgError:
                    break
                if np.linalg.norm(step) > 2 * span:
                    break
                x = x - step
                if not (xmin - span <= x[0] <= xmax + span
                        and ymin - span <= x[1] <= ymax + span):
                    break
            if ok and domain.inside_test(x) \
                    and domain.boundary_distance(x) > math.sqrt(tol):
                roots.append(x)
            elif not ok:
                failures += 1
    if failures:
        log.debug("Newton did not converge from %d interior seeds", failures)

    criticals: list[CriticalPoint] = []
    for x in _dedupe(roots, 1e-6 * span):
        H = np.asarray(f.hessian(x), dtype=float)
        eigvals, eigvecs = np.linalg.eigh(H)
        if np.min(np.abs(eigvals)) < 1e-8 * max(np.max(np.abs(eigvals)), 1.0):
            raise MorseViolationError(
                "degenerate Hessian at interior critical point %s" % (x,))
        index = int(np.sum(eigvals < 0))
        # unstable directions of the descent flow: eigenvectors with
        # negative Hessian eigenvalue, most unstable first
        order = np.argsort(eigvals)
        frame = np.array([_normalize_sign(eigvecs[:, i])
                          for i in order[:index]]).reshape(index, 2)
        criticals.append(CriticalPoint(
            location=x, kind=INTERIOR, index=index,
            f_value=float(f.value(x)), frame=frame,
            curvatures=eigvals[order]))

    criticals.extend(_boundary_criticals(f, domain, tol))
    criticals.sort(key=lambda c: (round(c.location[0], 9),
                                  round(c.location[1], 9)))
    return criticals


def _boundary_criticals(f: MorseFunction, domain: SurfaceDomain,
                        tol: float) -> list[CriticalPoint]:
    out = []
    n_samp = 4096
    for li, loop in enumerate(domain.boundary_loops):
        ts = np.linspace(0.0, 1.0, n_samp, endpoint=False)

        def tangential(t, loop=loop):
            return float(np.dot(f.gradient(loop.point(t)), loop.derivative(t)))

        vals = np.array([tangential(t) for t in ts])
        grad_norms = [np.linalg.norm(f.gradient(loop.point(t)))
                      for t in ts[::16]]
        if min(grad_norms) < 1e-6:
            raise MorseViolationError(
                "gradient of f vanishes on boundary loop %d" % li)
        for i in range(n_samp):
            a, b = ts[i], ts[i] + 1.0 / n_samp
            fa, fb = vals[i], vals[(i + 1) % n_samp]
            if fa == 0.0 or fa * fb >= 0:
                if fa == 0.0:
                    t_root = a
                else:
                    continue
            else:
                for _ in range(80):
                    m = 0.5 * (a + b)
                    fm = tangential(m)
                    if fa * fm <= 0:
                        b = m
                    else:
                        a, fa = m, fm
                t_root = 0.5 * (a + b)
            x = np.asarray(loop.point(t_root), dtype=float)
            that = loop.tangent(t_root)
            nhat = outward_normal(domain, li, t_root)
            nu_f = float(np.dot(f.gradient(x), nhat))
            speed = np.linalg.norm(loop.derivative(t_root))
            dt = 1e-6
            dtan = (loop.tangent((t_root + dt) % 1.0)
                    - loop.tangent((t_root - dt) % 1.0)) / (2 * dt * speed)
            mu_t = float(that @ np.asarray(f.hessian(x)) @ that
                         + np.dot(f.gradient(x), dtan))
            if abs(mu_t) < 1e-8 or abs(nu_f) < 1e-8:
                raise MorseViolationError(
                    "degenerate boundary critical point at %s" % (x,))
            index = 0 if mu_t > 0 else 1
            frame = (np.array([_normalize_sign(that)]) if index == 1
                     else np.zeros((0, 2)))
            out.append(CriticalPoint(
                location=x,
                kind=BOUNDARY_MINUS if nu_f < 0 else BOUNDARY_PLUS,
                index=index, f_value=float(f.value(x)), frame=frame,
                curvatures=np.array([mu_t]), normal_rate=abs(nu_f),
                loop_index=li, param=t_root, nu_f=nu_f,
                tangent=that, normal=nhat))
    # merge duplicates from adjacent sample intervals
    merged: list[CriticalPoint] = []
    for c in out:
        if all(c.loop_index != m.loop_index
               or np.linalg.norm(c.location - m.location) > 1e-6
               for m in merged):
            merged.append(c)
    return merged


@dataclass(frozen=True)
class MorseCounts:
    c: tuple    # interior critical points per index, length 3
    p: tuple    # boundary points with negative normal derivative, per index
    q: tuple    # boundary points with positive normal derivative, per index

    def absolute_generators(self) -> tuple:
        return (self.c[0] + self.p[0], self.c[1] + self.p[1], self.c[2])

    def relative_generators(self) -> tuple:
        return (self.c[0], self.c[1] + self.q[0], self.c[2] + self.q[1])


def morse_counts(criticals: list[CriticalPoint]) -> MorseCounts:
    c = [0, 0, 0]
    p = [0, 0]
    q = [0, 0]
    for cp in criticals:
        if cp.kind == INTERIOR:
            c[cp.index] += 1
        elif cp.kind == BOUNDARY_MINUS:
            p[cp.index] += 1
        else:
            q[cp.index] += 1
    return MorseCounts(tuple(c), tuple(p), tuple(q))


# ---------------------------------------------------------------------------
# adapted descent field


def _bump(s: float) -> float:
    """Quintic plateau function: 1 at s<=0, 0 at s>=1, C² in between."""
    if s <= 0.0:
        return 1.0
    if s >= 1.0:
        return 0.0
    t = 1.0 - s
    return t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


class PseudoGradientField:
    """Negative-gradient-like field adapted to the boundary.

    Equal to -grad f away from the boundary; within the blending band the
    outward normal component is replaced so the field points strictly inward
    on ∂M except inside the balls around boundary generators, where it is
    tangent.
    """

    def __init__(self, f: MorseFunction, domain: SurfaceDomain, a: float,
                 criticals: list[CriticalPoint], mu: float):
        self.f = f
        self.domain = domain
        self.adaptation_radius = a
        self.criticals = criticals
        self.mu = mu
        self.blend_width = a
        self._minus_pts = np.array(
            [c.location for c in criticals if c.kind == BOUNDARY_MINUS]
        ).reshape(-1, 2)
        # dense boundary tables: points, unit tangents, outward normals
        self._tables = []
        for li, loop in enumerate(domain.boundary_loops):
            nhat0 = outward_normal(domain, li, 0.0)
            tan0 = loop.tangent(0.0)
            if np.dot(nhat0, np.array([tan0[1], -tan0[0]])) < 0:
                raise MorseSmaleViolationError(
                    "loop %d traversal does not keep the domain on the left"
                    % li)
            tans = np.array([loop.tangent(t) for t in loop._sample_t])
            normals = np.column_stack([tans[:, 1], -tans[:, 0]])
            self._tables.append((loop._tree, loop._sample_xy, normals))

    def _boundary_proximity(self, x):
        best = None
        for tree, pts, normals in self._tables:
            d, i = tree.query(x)
            if best is None or d < best[0]:
                best = (float(d), pts[int(i)], normals[int(i)])
        return best

    def X(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        G = -np.asarray(self.f.gradient(x), dtype=float)
        d, _, nhat = self._boundary_proximity(x)
        if d >= self.blend_width:
            return G
        w = _bump(d / self.blend_width)
        u = 0.0
        for p in self._minus_pts:
            r = np.linalg.norm(x - p) / (2.0 * self.adaptation_radius)
            u = max(u, _bump(max(r - 0.5, 0.0) / 0.5))
        gn = float(np.dot(G, nhat))
        correction = u * max(gn, 0.0) + (1.0 - u) * (gn + self.mu)
        return G - w * correction * nhat

    def jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        eps = 1e-6
        J = np.zeros((2, 2))
        for k in range(2):
            e = np.zeros(2)
            e[k] = eps
            J[:, k] = (self.X(x + e) - self.X(x - e)) / (2 * eps)
        return J

    def check_invariants(self, n_samples: int = 256) -> None:
        """Sampled verification of descent and inward-pointing conditions."""
        ball_centers = [c.location for c in self.criticals
                        if c.kind in (INTERIOR, BOUNDARY_MINUS)]
        a = self.adaptation_radius
        for li, loop in enumerate(self.domain.boundary_loops):
            for t in np.linspace(0.0, 1.0, n_samples, endpoint=False):
                x = np.asarray(loop.point(t), dtype=float)
                if any(np.linalg.norm(x - c) <= a for c in ball_centers):
                    continue
                Xx = self.X(x)
                if np.dot(Xx, outward_normal(self.domain, li, t)) >= 0:
                    raise MorseSmaleViolationError(
                        "field fails to point inward at loop %d t=%g" % (li, t))
                if np.dot(Xx, self.f.gradient(x)) >= 0:
                    raise MorseSmaleViolationError(
                        "field fails descent condition at loop %d t=%g" % (li, t))
        xmin, xmax, ymin, ymax = self.domain.bounding_box
        rng = np.random.default_rng(0)
        checked = 0
        while checked < n_samples:
            x = rng.uniform([xmin, ymin], [xmax, ymax])
            if not self.domain.inside_test(x):
                continue
            checked += 1
            if any(np.linalg.norm(x - c) <= a for c in ball_centers):
                continue
            if np.dot(self.X(x), self.f.gradient(x)) >= 0:
                raise MorseSmaleViolationError(
                    "field fails descent condition at %s" % (x,))


def adapted_field(f: MorseFunction, domain: SurfaceDomain, a: float,
                  criticals: list[CriticalPoint] = None) -> PseudoGradientField:
    """Build the blended descent field with adaptation radius a."""
    if criticals is None:
        criticals = find_critical_points(f, domain)
    locs = [c.location for c in criticals]
    for i in range(len(locs)):
        for j in range(i + 1, len(locs)):
            if np.linalg.norm(locs[i] - locs[j]) <= 8 * a:
                raise ConfigurationError(
                    "critical balls of radius 4a overlap: %s and %s"
                    % (criticals[i].label(), criticals[j].label()))
    for c in criticals:
        if c.kind == INTERIOR and domain.boundary_distance(c.location) <= 4 * a:
            raise ConfigurationError(
                "interior critical ball of radius 4a touches the boundary: %s"
                % c.label())
    # inward push small enough to preserve descent on boundary arcs
    mu = math.inf
    minus_pts = [c.location for c in criticals if c.kind == BOUNDARY_MINUS]
    for li, loop in enumerate(domain.boundary_loops):
        for t in np.linspace(0.0, 1.0, 512, endpoint=False):
            x = np.asarray(loop.point(t), dtype=float)
            if any(np.linalg.norm(x - p) <= 2 * a for p in minus_pts):
                continue
            g = np.asarray(f.gradient(x), dtype=float)
            nhat = outward_normal(domain, li, t)
            nu = float(np.dot(g, nhat))
            gt2 = float(np.dot(g, g) - nu * nu)
            if nu < -1e-12:
                mu = min(mu, 0.5 * gt2 / (-nu))
    if not math.isfinite(mu):
        mu = 0.1
    mu = min(mu, 0.1)
    if mu <= 0:
        raise ConfigurationError("cannot choose an inward push preserving "
                                 "the descent condition")
    fld = PseudoGradientField(f, domain, a, criticals, mu)
    fld.check_invariants()
    return fld


# ---------------------------------------------------------------------------
# flow tracing


@dataclass
class FlowTrace:
    points: np.ndarray          # (N, 2)
    limit: CriticalPoint = None
    status: str = "max_length"  # critical | boundary_exit | max_length


def trace_flow(field: PseudoGradientField, start, orientation: str = "forward",
               step: float = None, tol: float = 1e-6,
               max_length: float = 60.0, capture=None) -> FlowTrace:
    """Integrate the field from start until a capture point or length budget.

    Classic fourth-order steps with arc-length parametrized step size;
    points leaving the domain are projected back onto the boundary.
    """
    sign = {"forward": 1.0, "backward": -1.0}.get(orientation)
    if sign is None:
        raise ConfigurationError("orientation must be forward or backward")
    a = field.adaptation_radius
    if step is None:
        step = a / 15.0
    x = np.asarray(start, dtype=float)
    r_cap = 0.5 * a
    if capture is None:
        if sign > 0:
            capture = [c for c in field.criticals if c.is_sink]
        else:
            capture = [c for c in field.criticals
                       if c.kind == INTERIOR and c.index == 2]
    for c in field.criticals:
        if np.linalg.norm(x - c.location) < tol:
            return FlowTrace(points=x.reshape(1, 2), limit=c, status="critical")

    def F(y):
        return sign * field.X(y)

    pts = [x.copy()]
    travelled = 0.0
    stalled = 0
    while travelled < max_length:
        for c in capture:
            if np.linalg.norm(x - c.location) < r_cap:
                return FlowTrace(points=np.array(pts), limit=c,
                                 status="critical")
        v = F(x)
        speed = np.linalg.norm(v)
        if speed < 1e-13:
            stalled += 1
            if stalled > 50:
                for c in field.criticals:
                    if np.linalg.norm(x - c.location) < r_cap:
                        return FlowTrace(points=np.array(pts), limit=c,
                                         status="critical")
                raise IntegrationFailureError(
                    "flow stagnated at %s away from critical points" % (x,))
            x = x + step * 1e-3 * (v / max(speed, 1e-300))
            continue
        dt = step / speed
        k1 = v
        k2 = F(x + 0.5 * dt * k1)
        k3 = F(x + 0.5 * dt * k2)
        k4 = F(x + dt * k3)
        x_new = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not field.domain.inside_test(x_new):
            best = None
            for li, loop in enumerate(field.domain.boundary_loops):
                t, d = loop.nearest(x_new)
                if best is None or d < best[1]:
                    best = (loop, d, t)
            loop, d, t = best[0], best[1], best[2]
            if d > 10 * step:
                return FlowTrace(points=np.array(pts), status="boundary_exit")
            x_new = np.asarray(loop.point(t), dtype=float)
        travelled += np.linalg.norm(x_new - x)
        x = x_new
        pts.append(x.copy())
    return FlowTrace(points=np.array(pts), status="max_length")


# ---------------------------------------------------------------------------
# unstable manifolds


@dataclass
class UnstableCell:
    dimension: int
    frame: np.ndarray
    point: np.ndarray = None       # dimension 0
    polyline: np.ndarray = None    # dimension 1, oriented along frame[0]
    vertices: np.ndarray = None    # dimension 2
    triangles: np.ndarray = None
    base: CriticalPoint = None


def _boundary_neighbors(field: PseudoGradientField, q: CriticalPoint):
    """Adjacent critical points of the restricted function along q's loop."""
    mates = sorted((c for c in field.criticals if c.loop_index == q.loop_index),
                   key=lambda c: c.param)
    k = next(i for i, c in enumerate(mates)
             if abs(c.param - q.param) < 1e-9)
    return mates, k


def _boundary_arc(loop, t0: float, t1: float, direction: int,
                  resolution: int) -> np.ndarray:
    """Points along the loop from t0 to t1 moving in +/- parameter direction."""
    if direction > 0:
        span = (t1 - t0) % 1.0
    else:
        span = -((t0 - t1) % 1.0)
    ts = t0 + span * np.linspace(0.0, 1.0, resolution)
    return np.array([loop.point(t % 1.0) for t in ts])


def unstable_manifold(field: PseudoGradientField, p: CriticalPoint,
                      resolution: int = 240) -> UnstableCell:
    """Geometric realization of the cell of flow lines leaving p."""
    a = field.adaptation_radius
    if p.index == 0:
        return UnstableCell(0, p.frame, point=p.location, base=p)

    if p.kind == BOUNDARY_MINUS and p.index == 1:
        # the cell lives inside the boundary loop: descend the restricted
        # function in both directions until the neighboring critical points
        loop = field.domain.boundary_loops[p.loop_index]
        mates, k = _boundary_neighbors(field, p)
        halves = []
        for d in (+1, -1):
            nb = mates[(k + d) % len(mates)]
            halves.append(_boundary_arc(loop, p.param, nb.param, d,
                                        resolution // 2))
        # orient along frame[0]
        fwd_dir = +1 if np.dot(loop.tangent(p.param), p.frame[0]) > 0 else -1
        fwd = halves[0] if fwd_dir > 0 else halves[1]
        bwd = halves[1] if fwd_dir > 0 else halves[0]
        polyline = np.vstack([bwd[::-1], fwd[1:]])
        return UnstableCell(1, p.frame, polyline=polyline, base=p)

    lam = _unstable_rates(field, p)
    r_seed = min(0.1 * a, 0.02)
    if p.index == 1:
        branches = []
        for s in (+1.0, -1.0):
            tr = trace_flow(field, p.location + s * r_seed * p.frame[0])
            branch = np.vstack([p.location.reshape(1, 2), tr.points])
            if tr.limit is not None:
                branch = np.vstack([branch, tr.limit.location.reshape(1, 2)])
            branches.append(branch)
        polyline = np.vstack([branches[1][::-1], branches[0][1:]])
        return UnstableCell(1, p.frame, polyline=polyline, base=p)

    # index 2: fan of rays, resampled to a regular polar grid
    n_rays = max(24, resolution // 10)
    m = 24
    rays = []
    for phi in np.linspace(0.0, 2 * math.pi, n_rays, endpoint=False):
        direction = math.cos(phi) * p.frame[0] + math.sin(phi) * p.frame[1]
        direction /= np.linalg.norm(direction)
        tr = trace_flow(field, p.location + r_seed * direction)
        poly = np.vstack([p.location.reshape(1, 2), tr.points])
        seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        targets = np.linspace(0.0, s[-1], m + 1)[1:]
        rays.append(np.column_stack([np.interp(targets, s, poly[:, 0]),
                                     np.interp(targets, s, poly[:, 1])]))
    vertices = np.vstack([p.location.reshape(1, 2)] + rays)
    tris = []
    for i in range(n_rays):
        base_i = 1 + i * m
        base_j = 1 + ((i + 1) % n_rays) * m
        tris.append([0, base_i, base_j])
        for k in range(m - 1):
            tris.append([base_i + k, base_i + k + 1, base_j + k])
            tris.append([base_j + k, base_i + k + 1, base_j + k + 1])
    return UnstableCell(2, p.frame, vertices=vertices,
                        triangles=np.array(tris, dtype=int), base=p)


def _unstable_rates(field: PseudoGradientField, p: CriticalPoint) -> np.ndarray:
    """Expansion rates of the linearized field along the unstable frame."""
    J = field.jacobian(p.location)
    rates = []
    for v in p.frame:
        lam = float(v @ J @ v)
        if lam < 1e-8:
            raise MorseViolationError(
                "indeterminate unstable direction at %s" % p.label())
        rates.append(lam)
    return np.array(rates)


# ---------------------------------------------------------------------------
# connection counts


def _same_point(a: CriticalPoint, b) -> bool:
    if b is None:
        return False
    return bool(np.linalg.norm(a.location - b.location) < 1e-8)


def _admissible_pair(q: CriticalPoint, p: CriticalPoint) -> None:
    if q.kind == BOUNDARY_PLUS or p.kind == BOUNDARY_PLUS:
        raise ConfigurationError("outward boundary critical points are not "
                                 "generators of the complex")
    if q.index != p.index + 1:
        raise ConfigurationError(
            "connection count needs adjacent indices, got %d and %d"
            % (q.index, p.index))


def _route_signature(trace: FlowTrace, saddles: list[CriticalPoint],
                     near_radius: float):
    """Discrete invariant of a trajectory: its sink plus, for every index-1
    critical point it passes close to, which side it passed on."""
    sides = []
    for c in saddles:
        d = np.linalg.norm(trace.points - c.location, axis=1)
        i = int(np.argmin(d))
        if d[i] > near_radius:
            sides.append(0)
        else:
            sides.append(int(np.sign(np.dot(trace.points[i] - c.location,
                                            c.frame[0]))))
    limit_id = id(trace.limit) if trace.limit is not None else None
    return (limit_id, tuple(sides))


def _separatrix_sign(q: CriticalPoint, p: CriticalPoint,
                     trace: FlowTrace) -> int:
    """Sign of a flow line from an index-2 point to an index-1 point.

    Compares the coorientation of p's stable line, fixed by p's unstable
    frame, with the orientation that q's frame induces transversally to the
    flow direction.
    """
    d = np.linalg.norm(trace.points - p.location, axis=1)
    i = int(np.argmin(d))
    j = max(i - 2, 1)
    v = trace.points[j] - trace.points[j - 1]
    v /= np.linalg.norm(v)
    sigma_q = 1.0 if np.linalg.det(np.vstack(q.frame)) > 0 else -1.0
    b_x = sigma_q * np.array([-v[1], v[0]])
    u_p = p.frame[0]
    if p.kind == BOUNDARY_MINUS:
        stable = p.normal
    else:
        # interior index-1 point: stable line is orthogonal to the unstable
        # eigenvector (the Hessian is symmetric)
        stable = np.array([-u_p[1], u_p[0]])
    a_x = stable if np.linalg.det(np.vstack([u_p, stable])) > 0 else -stable
    det = np.linalg.det(np.vstack([a_x, b_x]))
    if abs(det) < 1e-6:
        raise MorseSmaleViolationError(
            "tangential crossing between %s and %s" % (q.label(), p.label()))
    return 1 if det > 0 else -1


def connection_count(field: PseudoGradientField, q: CriticalPoint,
                     p: CriticalPoint, n_seeds: int = 120,
                     phi_tol: float = 1e-11) -> int:
    """Signed number of flow lines of the adapted field from q down to p."""
    _admissible_pair(q, p)
    if q.kind == BOUNDARY_MINUS and p.kind == INTERIOR:
        return 0

    if q.kind == BOUNDARY_MINUS:
        # both points live in the boundary; descend the restricted function
        if p.kind != BOUNDARY_MINUS or p.loop_index != q.loop_index:
            return 0
        loop = field.domain.boundary_loops[q.loop_index]
        mates, k = _boundary_neighbors(field, q)
        total = 0
        for d in (+1, -1):
            nb = mates[(k + d) % len(mates)]
            eps = d * (1 if np.dot(loop.tangent(q.param), q.frame[0]) > 0
                       else -1)
            if _same_point(nb, p):
                total += eps
        return total

    a = field.adaptation_radius
    r_seed = min(0.1 * a, 0.02)
    if q.index == 1:
        total = 0
        for s in (+1, -1):
            tr = trace_flow(field, q.location + s * r_seed * q.frame[0])
            if _same_point(p, tr.limit):
                total += s
        return total

    # interior index-2 source: enumerate separatrices by angle bisection
    saddles = [c for c in field.criticals if c.index == 1
               and c.kind in (INTERIOR, BOUNDARY_MINUS)]
    hit_radius = 0.25 * a
    near_radius = 2.0 * a

    def shoot(phi):
        direction = math.cos(phi) * q.frame[0] + math.sin(phi) * q.frame[1]
        direction /= np.linalg.norm(direction)
        return trace_flow(field, q.location + r_seed * direction)

    def signature(phi):
        return _route_signature(shoot(phi), saddles, near_radius)

    # a golden-angle phase keeps seeds off symmetry axes (and thus off the
    # separatrices themselves for symmetric benchmark functions)
    phis = (np.linspace(0.0, 2 * math.pi, n_seeds, endpoint=False)
            + 2 * math.pi * 0.381966011250105 / n_seeds)
    sigs = [signature(phi) for phi in phis]
    total = 0
    found_angles: list[tuple[float, int]] = []
    for i in range(n_seeds):
        j = (i + 1) % n_seeds
        if sigs[i] == sigs[j]:
            continue
        lo, hi = phis[i], phis[i] + (phis[1] - phis[0])
        sig_lo = sigs[i]
        while hi - lo > phi_tol:
            mid = 0.5 * (lo + hi)
            if signature(mid) == sig_lo:
                lo = mid
            else:
                hi = mid
        tr = shoot(0.5 * (lo + hi))
        dists = [np.linalg.norm(tr.points - c.location, axis=1).min()
                 for c in saddles]
        closest = min(dists) if dists else math.inf
        if closest < hit_radius:
            which = int(np.argmin(dists))
            if any(w == which and abs(ang - lo) < 20 * phi_tol
                   for ang, w in found_angles):
                log.debug("duplicate separatrix detection near angle %g", lo)
                continue
            found_angles.append((lo, which))
            if _same_point(saddles[which], p):
                total += _separatrix_sign(q, p, tr)
        elif closest <= 1.25 * near_radius:
            # the signature changed because a near-pass crossed the side
            # threshold, not because of a separatrix
            log.debug("skipping threshold artifact near angle %g", lo)
        else:
            raise ResolutionError(
                "signature change near angle %g not explained by any "
                "index-1 critical point" % lo)
    return total


# ---------------------------------------------------------------------------
# the complex


@dataclass
class ThomSmaleComplex:
    generators: list            # per degree 0..2, lists of CriticalPoint
    boundary_matrices: list     # [B0 (n1 x n0), B1 (n2 x n1)], integer
    orientations: list          # frames, parallel to generators

    def dims(self):
        return [len(g) for g in self.generators]

    def as_dict(self):
        return {
            "generators": [
                [{"location": list(map(float, c.location)), "kind": c.kind,
                  "index": c.index, "f_value": c.f_value}
                 for c in degree]
                for degree in self.generators],
            "boundary_matrices": [m.tolist() for m in self.boundary_matrices],
        }


def _max_workers() -> int:
    env = os.environ.get("WML_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigurationError("WML_THREADS must be an integer")
    return min(4, os.cpu_count() or 1)


def build_thom_smale_complex(criticals: list[CriticalPoint],
                             field: PseudoGradientField) -> ThomSmaleComplex:
    """Assemble generators and signed flow-line counts into a cochain complex."""
    generators = []
    for j in range(3):
        gens = [c for c in criticals if c.index == j
                and c.kind in (INTERIOR, BOUNDARY_MINUS)]
        gens.sort(key=lambda c: (round(c.location[0], 9),
                                 round(c.location[1], 9)))
        generators.append(gens)
    matrices = []
    for j in range(2):
        pairs = [(qi, pi) for qi in range(len(generators[j + 1]))
                 for pi in range(len(generators[j]))]
        B = np.zeros((len(generators[j + 1]), len(generators[j])), dtype=int)
        with ThreadPoolExecutor(max_workers=_max_workers()) as pool:
            counts = list(pool.map(
                lambda qp: connection_count(field, generators[j + 1][qp[0]],
                                            generators[j][qp[1]]),
                pairs))
        for (qi, pi), n in zip(pairs, counts):
            B[qi, pi] = n
        matrices.append(B)
    comp = matrices[1] @ matrices[0]
    if np.any(comp != 0):
        raise ComplexInconsistencyError(
            "composite boundary map is nonzero:\n%r" % comp)
    return ThomSmaleComplex(generators, matrices,
                            [[c.frame for c in g] for g in generators])


@dataclass(frozen=True)
class HomologyRanks:
    betti: tuple
    torsion: tuple   # nontrivial invariant factors per degree transition


def homology_ranks(complex_: ThomSmaleComplex) -> HomologyRanks:
    dims = complex_.dims()
    betti = complex_betti_numbers(complex_.boundary_matrices, dims)
    torsion = []
    for B in complex_.boundary_matrices:
        snf = smith_normal_form(B) if B.size else np.array([], dtype=int)
        torsion.append(tuple(int(d) for d in snf if d > 1))
    return HomologyRanks(tuple(betti), tuple(torsion))


def reflected_complex(complex_: ThomSmaleComplex) -> ThomSmaleComplex:
    """Degree-reflected dual complex (degree j becomes 2 - j)."""
    gens = list(reversed(complex_.generators))
    B0, B1 = complex_.boundary_matrices
    return ThomSmaleComplex(gens, [B1.T.copy(), B0.T.copy()],
                            list(reversed(complex_.orientations)))


@dataclass(frozen=True)
class MorseInequalityReport:
    mode: str
    partial_sums: tuple     # per k: (betti side, counts side, holds)
    equality_at_top: bool

    @property
    def all_hold(self) -> bool:
        return all(ok for _, _, ok in self.partial_sums) and self.equality_at_top


def morse_inequalities(counts: MorseCounts, betti, mode: str
                       ) -> MorseInequalityReport:
    """Alternating-sum comparisons between generator counts and Betti numbers."""
    if mode == "absolute":
        m = counts.absolute_generators()
    elif mode == "relative":
        m = counts.relative_generators()
    else:
        raise ConfigurationError("mode must be absolute or relative")
    rows = []
    for k in range(3):
        lhs = sum((-1) ** (k - j) * betti[j] for j in range(k + 1))
        rhs = sum((-1) ** (k - j) * m[j] for j in range(k + 1))
        rows.append((lhs, rhs, lhs <= rhs))
    top_equal = rows[2][0] == rows[2][1]
    return MorseInequalityReport(mode, tuple(rows), top_equal)
