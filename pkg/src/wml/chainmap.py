"""Comparison map between low Witten eigenforms and the flow complex.

The low eigenforms of the deformed Laplacian are paired with the
generators of the flow complex by integrating the exponentially
reweighted eigenforms over closures of unstable cells.  After dividing
by a predicted per-generator diagonal the pairing matrix is close to the
identity; this module builds the pairing, checks that it intertwines the
deformed differential with the combinatorial boundary operator, and
reports the diagonal asymptotics.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .dec import Cochain, WittenAssembly, _barycentric_gradients, \
    deformed_derivative, witten_quadratic_form
from .errors import ConfigurationError, IntegrationFailureError, \
    ResolutionError
from .geometry import TriMesh
from .homology import complex_betti_numbers
from .model import quasimode
from .morse import BOUNDARY_MINUS, INTERIOR, CriticalPoint, \
    ThomSmaleComplex, UnstableCell, _max_workers
from .spectral import solve_quadratic_form


# ---------------------------------------------------------------------------
# pointwise evaluation of Whitney-interpolated cochains


class _MeshEvaluator:
    """Locates points in a triangulation and evaluates Whitney forms."""

    def __init__(self, mesh: TriMesh):
        self.mesh = mesh
        self._centroids = mesh.vertices[mesh.triangles].mean(axis=1)
        self._tree = cKDTree(self._centroids)
        self._grads = _barycentric_gradients(mesh)
        self._areas = mesh.triangle_areas()

    def locate(self, x):
        """Containing triangle and (clamped) barycentric coordinates.

        Points slightly outside the triangulated region (cells reach the
        smooth boundary, the mesh stops at its polygonal approximation)
        are assigned to the closest triangle with clamped coordinates.
        """
        x = np.asarray(x, dtype=float)
        k = min(12, len(self._centroids))
        _, cand = self._tree.query(x, k=k)
        cand = np.atleast_1d(cand)
        best, best_min = None, -np.inf
        for t in cand:
            lam = self._barycentric(int(t), x)
            m = float(np.min(lam))
            if m >= -1e-10:
                return int(t), lam
            if m > best_min:
                best, best_min = (int(t), lam), m
        if best is None or best_min < -0.35:
            raise IntegrationFailureError(
                "point %s lies outside the triangulation" % x)
        t, lam = best
        lam = np.clip(lam, 0.0, None)
        return t, lam / lam.sum()

    def _barycentric(self, t: int, x) -> np.ndarray:
        verts = self.mesh.vertices[self.mesh.triangles[t]]
        M = np.column_stack([verts[1] - verts[0], verts[2] - verts[0]])
        ab = np.linalg.solve(M, x - verts[0])
        return np.array([1.0 - ab[0] - ab[1], ab[0], ab[1]])

    def value_0(self, c: np.ndarray, x) -> float:
        t, lam = self.locate(x)
        return float(lam @ c[self.mesh.triangles[t]])

    def vector_1(self, c: np.ndarray, x) -> np.ndarray:
        """Vector proxy of the interpolated 1-form at x."""
        t, lam = self.locate(x)
        tri = self.mesh.triangles[t]
        g = self._grads[t]
        out = np.zeros(2)
        for (li, lj) in ((0, 1), (0, 2), (1, 2)):
            vi, vj = tri[li], tri[lj]
            sgn = 1.0
            if vi > vj:
                vi, vj, li, lj = vj, vi, lj, li
            e = self.mesh.edge_index(vi, vj)
            out += c[e] * (lam[li] * g[lj] - lam[lj] * g[li])
        return out

    def density_2(self, c: np.ndarray, x) -> float:
        """Scalar density of the interpolated 2-form at x (per unit area,
        with respect to the standard plane orientation)."""
        t, _ = self.locate(x)
        return float(c[t] / self._areas[t])


def _edge_lookup(mesh: TriMesh):
    table = {}
    for e, (i, j) in enumerate(mesh.edges):
        table[(int(i), int(j))] = e
    return table


def _ensure_edge_index(mesh: TriMesh):
    if not hasattr(mesh, "_edge_lookup_cache"):
        object.__setattr__(mesh, "_edge_lookup_cache", _edge_lookup(mesh))

    def edge_index(i, j):
        return mesh._edge_lookup_cache[(int(i), int(j))]

    if not hasattr(mesh, "edge_index"):
        object.__setattr__(mesh, "edge_index", edge_index)


# ---------------------------------------------------------------------------
# integration over unstable cells


_GAUSS_1D = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))
# degree-2 midpoint rule on a triangle: order 2, weights 1/3
_TRI_QUAD = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])


def integrate_over_unstable(alpha: Cochain, cell: UnstableCell,
                            mesh: TriMesh, weight=None) -> float:
    """Integral of the interpolated cochain over an oriented cell.

    `weight` is an optional pointwise scalar multiplier (used for the
    exponential reweighting).  For 0-cells the result is the weighted
    point value.
    """
    if alpha.degree != cell.dimension:
        raise ConfigurationError(
            "cochain degree %d does not match cell dimension %d"
            % (alpha.degree, cell.dimension))
    _ensure_edge_index(mesh)
    ev = _evaluator_for(mesh)
    w = weight if weight is not None else (lambda x: 1.0)
    c = alpha.values

    if cell.dimension == 0:
        return w(cell.point) * ev.value_0(c, cell.point)

    if cell.dimension == 1:
        pts = cell.polyline
        total = 0.0
        for k in range(len(pts) - 1):
            seg = pts[k + 1] - pts[k]
            for g in _GAUSS_1D:
                x = pts[k] + g * seg
                total += 0.5 * w(x) * float(ev.vector_1(c, x) @ seg)
        return total

    total = 0.0
    for tri in cell.triangles:
        v = cell.vertices[tri]
        e1, e2 = v[1] - v[0], v[2] - v[0]
        signed = 0.5 * float(e1[0] * e2[1] - e1[1] * e2[0])
        if signed == 0.0:
            continue
        acc = 0.0
        for q in _TRI_QUAD:
            x = q @ v
            acc += w(x) * ev.density_2(c, x)
        total += signed * acc / 3.0
    return total


_EVALUATORS: dict = {}


def _evaluator_for(mesh: TriMesh) -> _MeshEvaluator:
    key = id(mesh)
    ev = _EVALUATORS.get(key)
    if ev is None or ev.mesh is not mesh:
        ev = _MeshEvaluator(mesh)
        _EVALUATORS[key] = ev
    return ev


# ---------------------------------------------------------------------------
# instanton basis


@dataclass
class InstantonBasis:
    """Low-cluster eigenvectors per degree, discretely orthonormalized."""
    T: float
    bc: str
    C0: float
    values: list        # per degree, ascending eigenvalues of the cluster
    vectors: list       # per degree, full-size cochain columns (n_k, m_j)

    def dims(self):
        return [v.shape[1] for v in self.vectors]


def instanton_basis(assembly: WittenAssembly, T: float, C0: float,
                    seed: int = 0) -> InstantonBasis:
    """Eigenvectors of the deformed Laplacian with eigenvalues below C0."""
    values, vectors = [], []
    for k in (0, 1, 2):
        nk = assembly.dims()[k]
        if nk == 0:
            values.append(np.array([]))
            vectors.append(np.zeros((len(assembly.free[k]), 0)))
            continue
        qf = witten_quadratic_form(assembly, T, k)
        n_eigs = 6
        while True:
            vals, vecs, _ = solve_quadratic_form(qf, k=min(n_eigs, nk),
                                                 seed=seed)
            if len(vals) == 0 or vals[-1] >= C0 or len(vals) >= nk:
                break
            n_eigs *= 2
        keep = vals < C0
        vals, vecs = vals[keep], vecs[:, keep]
        vecs = _m_orthonormalize(vecs, qf.M)
        full = np.zeros((len(assembly.free[k]), vecs.shape[1]))
        full[assembly.free[k]] = vecs
        values.append(vals)
        vectors.append(full)
    return InstantonBasis(T=T, bc=assembly.bc, C0=C0,
                          values=values, vectors=vectors)


def _m_orthonormalize(vecs: np.ndarray, M) -> np.ndarray:
    out = vecs.copy()
    for i in range(out.shape[1]):
        v = out[:, i]
        for j in range(i):
            v -= float(out[:, j] @ (M @ v)) * out[:, j]
        nrm = math.sqrt(max(float(v @ (M @ v)), 0.0))
        if nrm < 1e-12:
            raise ResolutionError("low cluster is numerically degenerate")
        out[:, i] = v / nrm
    return out


# ---------------------------------------------------------------------------
# comparison matrices


@dataclass
class ComparisonMatrices:
    P: list             # per degree, (generators x eigenvectors)
    E: list             # per degree, (eigenvectors x generators)
    F_diag: list        # per degree, predicted exponential rate per generator
    N_diag: list        # per degree, predicted power per generator
    scale: list         # per degree, curvature correction per generator
    T: float
    n: int = 2
    f_shift: float = 0.0   # exponent shift carried by the rows of P

    def dims(self):
        return [p.shape[0] for p in self.P]


def _generator_diagonals(generators, T: float):
    """Predicted diagonal data (rate, power, curvature scale) per generator."""
    F, N, S = [], [], []
    for degree, gens in enumerate(generators):
        Fd, Nd, Sd = [], [], []
        for p in gens:
            if p.kind == INTERIOR:
                Fd.append(p.f_value)
                Nd.append(float(degree))
                mus = np.abs(np.asarray(p.curvatures, dtype=float))
                s = float(np.prod(mus ** 0.25))
                s *= float(np.prod(mus[:p.index] ** -0.5))
                Sd.append(s)
            elif p.kind == BOUNDARY_MINUS:
                Fd.append(p.f_value + math.log(2.0 * math.pi) / (2.0 * T))
                Nd.append(degree - 0.5)
                mu = abs(float(p.curvatures[0]))
                s = mu ** 0.25 * math.sqrt(p.normal_rate)
                if p.index >= 1:
                    s *= mu ** -0.5
                Sd.append(s)
            else:
                raise ConfigurationError(
                    "outward boundary critical points are not generators")
        F.append(np.array(Fd))
        N.append(np.array(Nd))
        S.append(np.array(Sd))
    return F, N, S


def p_infinity_T(basis: InstantonBasis, complex_: ThomSmaleComplex,
                 cells, mesh: TriMesh, f, assembly: WittenAssembly):
    """Pairing matrices P per degree: entry (cell, eigenvector) is the
    integral of the exponentially reweighted eigenform over the cell.

    The exponent is shifted by the assembly's reporting shift so that the
    weight never overflows; the shift is recorded on the result and
    compensated when the predicted diagonal is applied.
    """
    T, shift = basis.T, assembly.f_shift

    def weight(x):
        return math.exp(min(T * (f.value(x) - shift), 690.0))

    mats = []
    tasks = []
    for degree, gens in enumerate(complex_.generators):
        m = basis.vectors[degree].shape[1]
        mats.append(np.zeros((len(gens), m)))
        for g in range(len(gens)):
            cell = cells[degree][g]
            if not _cell_matches(cell, gens[g]):
                raise ConfigurationError(
                    "cell list is not parallel to the generator list")
            for i in range(m):
                tasks.append((degree, g, i))

    def entry(task):
        degree, g, i = task
        alpha = Cochain(degree, basis.vectors[degree][:, i])
        return integrate_over_unstable(alpha, cells[degree][g], mesh,
                                       weight=weight)

    workers = _max_workers()
    if workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(entry, tasks))
    else:
        results = [entry(t) for t in tasks]
    for (degree, g, i), val in zip(tasks, results):
        mats[degree][g, i] = val
    return mats


def _cell_matches(cell: UnstableCell, p: CriticalPoint) -> bool:
    if cell.base is None:
        return True
    return bool(np.linalg.norm(cell.base.location - p.location) < 1e-8)


def projection_matrices(basis: InstantonBasis, complex_: ThomSmaleComplex,
                        assembly: WittenAssembly, a: float, domain,
                        override_resolution_contract: bool = False):
    """E per degree: coefficients of each generator's localized model state
    projected onto the low eigenspace (rows are eigenvectors)."""
    from .dec import _mass_matrices
    mass = _mass_matrices(assembly.mesh)
    mats = []
    for degree, gens in enumerate(complex_.generators):
        V = basis.vectors[degree]
        E = np.zeros((V.shape[1], len(gens)))
        for g, p in enumerate(gens):
            qm = quasimode(
                p, basis.T, a, assembly.mesh, domain, mass_matrices=mass,
                override_resolution_contract=override_resolution_contract)
            E[:, g] = V.T @ (mass[degree] @ qm.cochain_values)
        mats.append(E)
    return mats


def build_comparison(basis: InstantonBasis, complex_: ThomSmaleComplex,
                     cells, mesh: TriMesh, f, assembly: WittenAssembly,
                     a: float, domain,
                     override_resolution_contract: bool = False
                     ) -> ComparisonMatrices:
    """Assemble the full comparison data for one scenario and one T."""
    P = p_infinity_T(basis, complex_, cells, mesh, f, assembly)
    E = projection_matrices(basis, complex_, assembly, a, domain,
                            override_resolution_contract)
    F, N, S = _generator_diagonals(complex_.generators, basis.T)
    return ComparisonMatrices(P=P, E=E, F_diag=F, N_diag=N, scale=S,
                              T=basis.T, n=2, f_shift=assembly.f_shift)


# ---------------------------------------------------------------------------
# chain commutation


def eigenbasis_differentials(basis: InstantonBasis,
                             assembly: WittenAssembly, T: float):
    """Matrices of the deformed differential between low eigenbases."""
    out = []
    for k in (0, 1):
        Vk = basis.vectors[k][assembly.free[k]]
        Vk1 = basis.vectors[k + 1][assembly.free[k + 1]]
        if Vk.shape[1] == 0 or Vk1.shape[1] == 0:
            out.append(np.zeros((Vk1.shape[1], Vk.shape[1])))
            continue
        dT = deformed_derivative(assembly, T, k)
        Mk1 = assembly.mass(k + 1)
        out.append(Vk1.T @ (Mk1 @ (dT @ Vk)))
    return out


def chain_commutation_residual(P: list, d_matrices: list,
                               boundary_matrices: list) -> float:
    """Relative defect of P as a map of complexes, maximized over degrees.

    For each degree j with both sides nonempty the defect is
    ‖P_{j+1}·D_j − B_j·P_j‖ / (‖P_{j+1}‖·‖D_j‖ + ‖B_j‖·‖P_j‖), where D_j
    is the deformed differential in the eigenbases and B_j acts on
    generator coefficients.
    """
    worst = 0.0
    for j in range(len(P) - 1):
        Pj, Pj1 = P[j], P[j + 1]
        if Pj.size == 0 and Pj1.size == 0:
            continue
        D = d_matrices[j]
        B = np.asarray(boundary_matrices[j], dtype=float)
        lhs = Pj1 @ D if Pj1.size and D.size else np.zeros((Pj1.shape[0],
                                                            Pj.shape[1]))
        rhs = B @ Pj if B.size and Pj.size else np.zeros_like(lhs)
        denom = (np.linalg.norm(Pj1) * (np.linalg.norm(D) if D.size else 0.0)
                 + (np.linalg.norm(B) if B.size else 0.0)
                 * np.linalg.norm(Pj))
        if denom <= 0.0:
            continue
        worst = max(worst, float(np.linalg.norm(lhs - rhs)) / denom)
    return worst


def _float_betti(differentials: list, dims: list, rtol: float = 1e-6):
    """Betti numbers of a small real cochain complex via numerical ranks."""
    ranks = [0] * (len(dims) + 1)
    for k, d in enumerate(differentials):
        d = np.asarray(d, dtype=float)
        if d.size:
            ranks[k + 1] = int(np.linalg.matrix_rank(
                d, tol=rtol * max(1.0, float(np.linalg.norm(d)))))
    return [dims[k] - ranks[k] - ranks[k + 1] for k in range(len(dims))]


# ---------------------------------------------------------------------------
# isomorphism verification


@dataclass
class IsomorphismReport:
    normalized: list          # per degree, P·E divided by the predicted diag
    singular_values: list
    offdiag_frobenius: list   # per degree
    diag_errors: list         # per degree, |R_gg − 1|
    invertible: list          # per degree (vacuously true when empty)
    induced_betti: tuple      # Betti numbers of the low eigencomplex
    complex_betti: tuple      # Betti numbers of the combinatorial complex

    @property
    def is_isomorphism(self) -> bool:
        return all(self.invertible) and \
            self.induced_betti == self.complex_betti


def verify_isomorphism(cmp: ComparisonMatrices, d_matrices: list,
                       boundary_matrices: list) -> IsomorphismReport:
    """Normalized product P·E against the predicted diagonal, per degree."""
    normalized, svals, offd, derr, inv = [], [], [], [], []
    for j, (Pj, Ej) in enumerate(zip(cmp.P, cmp.E)):
        m = Pj.shape[0]
        if m == 0:
            normalized.append(np.zeros((0, 0)))
            svals.append(np.array([]))
            offd.append(0.0)
            derr.append(np.array([]))
            inv.append(True)
            continue
        if Pj.shape[1] != m or Ej.shape != (Pj.shape[1], m):
            raise ConfigurationError(
                "comparison matrices are not square in degree %d "
                "(generators %d, eigenvectors %d)" % (j, m, Pj.shape[1]))
        Q = Pj @ Ej
        pred = (np.exp(cmp.T * (cmp.F_diag[j] - cmp.f_shift))
                * (math.pi / cmp.T) ** (cmp.N_diag[j] / 2.0 - cmp.n / 4.0)
                * cmp.scale[j])
        R = Q / pred[:, None]
        s = np.linalg.svd(R, compute_uv=False)
        normalized.append(R)
        svals.append(s)
        offd.append(float(np.linalg.norm(R - np.diag(np.diag(R)))))
        derr.append(np.abs(np.diag(R) - 1.0))
        inv.append(bool(s.size and s[-1] > 0.5))

    dims_c = [p.shape[0] for p in cmp.P]
    complex_betti = complex_betti_numbers(boundary_matrices, dims_c)
    # the low-eigenspace differential is exponentially small in T; its rank
    # only becomes numerically readable after transporting it to generator
    # coordinates through P, where the row scales cancel
    transported = []
    for j in range(len(cmp.P) - 1):
        Pj, Pj1, D = cmp.P[j], cmp.P[j + 1], d_matrices[j]
        if Pj.size == 0 or Pj1.size == 0:
            transported.append(np.zeros((dims_c[j + 1], dims_c[j])))
            continue
        transported.append(Pj1 @ D @ np.linalg.pinv(Pj))
    induced_betti = _float_betti(transported, dims_c, rtol=1e-3)
    return IsomorphismReport(normalized=normalized, singular_values=svals,
                             offdiag_frobenius=offd, diag_errors=derr,
                             invertible=inv,
                             induced_betti=tuple(induced_betti),
                             complex_betti=tuple(complex_betti))
