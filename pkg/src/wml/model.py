"""Closed-form model kernels, 1D discretized oracles, and localized quasimodes.

The 1D operators are the separated building blocks of the deformed
Laplacian near critical points: a shifted harmonic oscillator on the line
and a constant-potential operator on the half line whose boundary relation
g'(0) + T g(0) = 0 selects the exponential zero mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix, diags, identity

from .dec import WittenAssembly, witten_quadratic_form
from .errors import ConfigurationError, ResolutionError
from .geometry import TriMesh
from .morse import BOUNDARY_MINUS, INTERIOR, CriticalPoint


@dataclass(frozen=True)
class ModelKernel:
    dimension: int
    index: int
    T: float
    profile: callable          # R^n -> positive scalar
    form_part: tuple           # indices of the covector factors, 1-based

    def __post_init__(self):
        if self.T <= 0:
            raise ConfigurationError("T must be positive")


def euclidean_kernel(n: int, j: int, T: float) -> ModelKernel:
    """Gaussian ground state of the flat-space model in degree j."""
    if not 0 <= j <= n:
        raise ConfigurationError("degree j must lie in 0..n")

    def profile(Z, T=T):
        Z = np.asarray(Z, dtype=float)
        return math.exp(-0.5 * T * float(np.dot(Z, Z)))

    return ModelKernel(n, j, T, profile, tuple(range(1, j + 1)))


def halfspace_kernel(n: int, j: int, T: float) -> ModelKernel:
    """Half-space ground state: Gaussian tangentially, exponential normally.

    The last coordinate is the inward normal; the normal profile e^{-T Z_n}
    satisfies the boundary relation ∂_n(profile) + T·profile = 0 at Z_n = 0.
    The degree must stay below n: there is no kernel with a normal covector
    factor.
    """
    if not 0 <= j <= n - 1:
        raise ConfigurationError("degree j must lie in 0..n-1")

    def profile(Z, T=T):
        Z = np.asarray(Z, dtype=float)
        return math.exp(-0.5 * T * float(np.dot(Z[:-1], Z[:-1]))
                        - T * float(Z[-1]))

    return ModelKernel(n, j, T, profile, tuple(range(1, j + 1)))


@dataclass(frozen=True)
class Model1D:
    grid: np.ndarray
    A: csr_matrix       # operator matrix
    M: csr_matrix       # weight matrix for the discrete L² pairing


def oscillator_1d(T: float, L: float, h: float) -> Model1D:
    """Finite differences for -d²/dz² + T²z² - T on [-L, L], Dirichlet ends.

    Spectrum approximates {0, 2T, 4T, ...}.
    """
    if T * L * L < 25:
        raise ConfigurationError(
            "truncation contract T·L² >= 25 violated (got %g)" % (T * L * L))
    n = int(round(2 * L / h)) - 1
    z = -L + h * np.arange(1, n + 1)
    main = 2.0 / h ** 2 + T ** 2 * z ** 2 - T
    off = -np.ones(n - 1) / h ** 2
    A = diags([off, main, off], [-1, 0, 1]).tocsr()
    return Model1D(grid=z, A=A, M=identity(n, format="csr"))


def robin_halfline(T: float, L: float, h: float,
                   dirichlet: bool = False) -> Model1D:
    """Finite differences for -d²/dz² + T² on [0, L].

    At z=0 a ghost point is eliminated through the central-difference form
    of g'(0) + T g(0) = 0.  Both the ghost weight and the potential term
    are exponentially fitted (s = sinh(Th)/(Th), V_h = (2cosh(Th)-2)/h²,
    each consistent to second order), which makes e^{-Tz} an exact discrete
    null vector instead of leaving an O(T⁴h²) eigenvalue shift.  The far
    end is Dirichlet.  With dirichlet=True the z=0 condition is replaced by
    g(0) = 0 instead.
    """
    if T * L < 12:
        raise ConfigurationError(
            "truncation contract T·L >= 12 violated (got %g)" % (T * L))
    if dirichlet:
        n = int(round(L / h)) - 1
        z = h * np.arange(1, n + 1)
        main = np.full(n, 2.0 / h ** 2 + T ** 2)
        off = -np.ones(n - 1) / h ** 2
        A = diags([off, main, off], [-1, 0, 1]).tocsr()
        return Model1D(grid=z, A=A, M=identity(n, format="csr"))
    n = int(round(L / h))
    z = h * np.arange(0, n)
    v_h = (2.0 * math.cosh(T * h) - 2.0) / h ** 2
    main = np.full(n, 2.0 / h ** 2 + v_h)
    off = -np.ones(n - 1) / h ** 2
    # ghost elimination at z=0: g(-h) = g(h) + 2h·T·s·g(0); the boundary
    # row is halved to restore symmetry (its weight in the discrete
    # pairing is h/2)
    s = math.sinh(T * h) / (T * h)
    A = diags([off, main, off], [-1, 0, 1]).tolil()
    A[0, 0] = 0.5 * (2.0 / h ** 2 + v_h - 2.0 * T * s / h)
    A[0, 1] = -1.0 / h ** 2
    M = diags(np.concatenate([[0.5], np.ones(n - 1)])).tocsr()
    return Model1D(grid=z, A=A.tocsr(), M=M)


# ---------------------------------------------------------------------------
# quasimodes


def _cutoff(r: float, a: float) -> float:
    if r <= a:
        return 1.0
    if r >= 2 * a:
        return 0.0
    t = (r - a) / a
    return 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


@dataclass
class Quasimode:
    base: CriticalPoint
    degree: int
    T: float
    cutoff_radius: float
    alpha: float              # squared norm before normalization
    cochain_values: np.ndarray


def _local_frame(p: CriticalPoint):
    """Orthonormal frame with unstable directions first, plus local rates."""
    if p.kind == INTERIOR:
        vecs = [v for v in p.frame]
        rates = [abs(mu) for mu in p.curvatures[:len(vecs)]]
        for mu in p.curvatures[len(vecs):]:
            w = (np.array([-vecs[0][1], vecs[0][0]]) if vecs
                 else np.array([1.0, 0.0]))
            vecs.append(w)
            rates.append(abs(mu))
        if len(vecs) < 2:
            vecs = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
            rates = [abs(mu) for mu in p.curvatures]
        return np.array(vecs), np.array(rates)
    return None, None


def _profile_factory(p: CriticalPoint, T: float, domain):
    """Pointwise evaluator of the model ground-state shape around p."""
    if p.kind == INTERIOR:
        vecs, rates = _local_frame(p)

        def g(x):
            u = vecs @ (np.asarray(x, dtype=float) - p.location)
            return math.exp(-0.5 * T * float(np.dot(rates, u * u)))

        return g
    if p.kind != BOUNDARY_MINUS:
        raise ConfigurationError(
            "quasimodes exist only at interior and inward-type boundary "
            "critical points")
    loop = domain.boundary_loops[p.loop_index]
    mu_t = abs(float(p.curvatures[0]))
    b = p.normal_rate
    s_p = loop.arclength_at_param(p.param)

    def g(x):
        t, _ = loop.nearest(x)
        ds = loop.arclength_at_param(t) - s_p
        ds = (ds + 0.5 * loop.length) % loop.length - 0.5 * loop.length
        xn = domain.boundary_distance(x)
        return math.exp(-0.5 * T * mu_t * ds * ds - T * b * xn)

    return g


def quasimode(p: CriticalPoint, T: float, a: float, mesh: TriMesh,
              domain, mass_matrices=None,
              override_resolution_contract: bool = False) -> Quasimode:
    """Sample the cutoff model ground state at p onto the cochain basis.

    The result has unit discrete norm; alpha records the squared norm of
    the unnormalized sample (the discrete normalization constant).
    """
    if mesh.h * math.sqrt(T) > 0.5 and not override_resolution_contract:
        raise ResolutionError(
            "mesh too coarse for the concentration scale: h·sqrt(T) = %.3f"
            % (mesh.h * math.sqrt(T)))
    j = p.index
    g = _profile_factory(p, T, domain)

    def rho(x):
        return _cutoff(np.linalg.norm(np.asarray(x) - p.location), a) * g(x)

    if j == 0:
        values = np.array([rho(v) for v in mesh.vertices])
    elif j == 1:
        direction = _form_direction(p, domain)
        values = np.zeros(mesh.num_edges)
        # two-point Gauss quadrature along each edge
        gauss = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))
        for e, (i0, i1) in enumerate(mesh.edges):
            v0, v1 = mesh.vertices[i0], mesh.vertices[i1]
            if np.linalg.norm(0.5 * (v0 + v1) - p.location) > 2 * a + mesh.h:
                continue
            seg = v1 - v0
            acc = 0.0
            for w in gauss:
                x = v0 + w * seg
                acc += 0.5 * rho(x) * float(np.dot(direction(x), seg))
            values[e] = acc
    else:
        vecs, _ = _local_frame(p)
        orient = 1.0 if np.linalg.det(vecs[:2]) > 0 else -1.0
        areas = mesh.triangle_areas()
        cents = mesh.vertices[mesh.triangles].mean(axis=1)
        values = np.array([orient * rho(c) * ar
                           for c, ar in zip(cents, areas)])
    if mass_matrices is None:
        from .dec import _mass_matrices
        mass_matrices = _mass_matrices(mesh)
    alpha = float(values @ (mass_matrices[j] @ values))
    if alpha <= 0:
        raise ResolutionError("quasimode sample has vanishing norm")
    return Quasimode(base=p, degree=j, T=T, cutoff_radius=a,
                     alpha=alpha, cochain_values=values / math.sqrt(alpha))


def _form_direction(p: CriticalPoint, domain):
    """Covector field of a degree-1 quasimode (unstable direction)."""
    if p.kind == INTERIOR:
        u = p.frame[0]
        return lambda x: u
    loop = domain.boundary_loops[p.loop_index]
    sign = 1.0 if np.dot(p.frame[0], p.tangent) > 0 else -1.0

    def direction(x):
        t, _ = loop.nearest(x)
        return sign * loop.tangent(t)

    return direction


def quasimode_residual(qm: Quasimode, assembly: WittenAssembly,
                       T: float) -> float:
    """Rayleigh quotient of the deformed Laplacian at the quasimode."""
    if abs(T - qm.T) > 1e-12:
        raise ConfigurationError("quasimode was built for T=%g" % qm.T)
    qf = witten_quadratic_form(assembly, T, qm.degree)
    x = qm.cochain_values[assembly.free[qm.degree]]
    m = float(x @ (qf.M @ x))
    if m <= 1e-300:
        raise ResolutionError("quasimode support removed by the boundary "
                              "constraints")
    return float(x @ qf.matvec(x)) / m
