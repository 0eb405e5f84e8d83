"""Discrete deformed de Rham complex on triangle meshes.

Lowest-order Whitney elements supply the mass matrices; the conjugated
derivative e^{-Tf} d e^{Tf} is assembled entry-wise from barycenter values
of f, so only bounded local differences of f are ever exponentiated.
Absolute boundary conditions are natural for the quadratic form; relative
conditions remove boundary degrees of freedom.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix, diags
from scipy.sparse.linalg import LinearOperator, splu

from .errors import ConfigurationError, MeshError, OverflowRangeError
from .geometry import TriMesh
from .morse import MorseFunction

ABSOLUTE = "absolute"
RELATIVE = "relative"

_MAX_EXPONENT = 690.0  # stay clear of the double-precision overflow edge


@dataclass
class Cochain:
    degree: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise ConfigurationError("cochain values must be finite")


def _barycentric_gradients(mesh: TriMesh) -> np.ndarray:
    """Gradients of the three barycentric coordinates per triangle, (F,3,2)."""
    p = mesh.vertices[mesh.triangles]
    ones = np.ones((len(p), 3, 1))
    A = np.concatenate([ones, p], axis=2)          # rows (1, x, y) per vertex
    inv = np.linalg.inv(A)
    return np.transpose(inv[:, 1:, :], (0, 2, 1))  # (F, vertex, xy)


def _mass_matrices(mesh: TriMesh):
    areas = mesh.triangle_areas()
    if areas.min() < 1e-14:
        raise MeshError("degenerate triangle with area %g" % areas.min())
    V, E, F = mesh.num_vertices, mesh.num_edges, mesh.num_triangles

    # vertex elements: local matrix area/12 * (1 + identity-like pattern)
    local0 = (np.ones((3, 3)) + np.eye(3)) / 12.0
    rows, cols, vals = [], [], []
    for loc_i in range(3):
        for loc_j in range(3):
            rows.append(mesh.triangles[:, loc_i])
            cols.append(mesh.triangles[:, loc_j])
            vals.append(areas * local0[loc_i, loc_j])
    M0 = csr_matrix((np.concatenate(vals),
                     (np.concatenate(rows), np.concatenate(cols))),
                    shape=(V, V))

    grads = _barycentric_gradients(mesh)
    rows, cols, vals = [], [], []
    tri = mesh.triangles
    for f in range(F):
        loc = {int(tri[f, k]): k for k in range(3)}
        g = grads[f]
        area = areas[f]
        edge_ids = mesh.tri_edges[f]
        for e_a in edge_ids:
            u, v = mesh.edges[e_a]
            lu, lv = loc[int(u)], loc[int(v)]
            for e_b in edge_ids:
                s, t = mesh.edges[e_b]
                ls, lt = loc[int(s)], loc[int(t)]
                val = (area / 12.0) * (
                    (1 + (lu == ls)) * np.dot(g[lv], g[lt])
                    - (1 + (lu == lt)) * np.dot(g[lv], g[ls])
                    - (1 + (lv == ls)) * np.dot(g[lu], g[lt])
                    + (1 + (lv == lt)) * np.dot(g[lu], g[ls]))
                rows.append(e_a)
                cols.append(e_b)
                vals.append(val)
    M1 = csr_matrix((vals, (rows, cols)), shape=(E, E))

    M2 = diags(1.0 / areas).tocsr()
    return [M0, M1, M2]


@dataclass
class WittenAssembly:
    mesh: TriMesh
    f: MorseFunction
    bc: str
    d: list            # [d0, d1] signed incidence, csr
    M: list            # [M0, M1, M2] Whitney mass matrices, csr
    f_bary: list       # f at barycenters per degree
    f_shift: float     # max of f over all barycenters (reporting convention)
    free: list         # boolean mask per degree

    def dims(self):
        return [int(mask.sum()) for mask in self.free]

    def restrict(self, mat, row_degree, col_degree):
        return mat[np.ix_(np.nonzero(self.free[row_degree])[0],
                          np.nonzero(self.free[col_degree])[0])]

    def mass(self, k):
        return self.restrict(self.M[k].tocsc(), k, k).tocsr()


def assemble(mesh: TriMesh, f: MorseFunction, bc: str) -> WittenAssembly:
    """Build mass matrices, incidence operators, and deformation data."""
    if bc not in (ABSOLUTE, RELATIVE):
        raise ConfigurationError("bc must be %r or %r" % (ABSOLUTE, RELATIVE))
    M = _mass_matrices(mesh)
    fv = np.array([f.value(x) for x in mesh.vertices])
    fe = np.array([f.value(0.5 * (mesh.vertices[a] + mesh.vertices[b]))
                   for a, b in mesh.edges])
    ft = np.array([f.value(mesh.vertices[t].mean(axis=0))
                   for t in mesh.triangles])
    f_shift = float(max(fv.max(), fe.max(), ft.max()))
    if bc == ABSOLUTE:
        free = [np.ones(mesh.num_vertices, dtype=bool),
                np.ones(mesh.num_edges, dtype=bool),
                np.ones(mesh.num_triangles, dtype=bool)]
    else:
        free = [~mesh.boundary_vertices, ~mesh.boundary_edges,
                np.ones(mesh.num_triangles, dtype=bool)]
    return WittenAssembly(mesh=mesh, f=f, bc=bc, d=[mesh.d0, mesh.d1],
                          M=M, f_bary=[fv, fe, ft], f_shift=f_shift,
                          free=free)


def deformed_derivative(assembly: WittenAssembly, T: float, k: int):
    """Sparse matrix of e^{-Tf} d e^{Tf} in degree k, on free dofs.

    Each incidence entry (simplex τ over face σ) is scaled by
    exp(T·(f(σ̂) − f(τ̂))) with barycenters σ̂, τ̂ — the similarity transform
    evaluated without ever forming the global weights.
    """
    if k not in (0, 1):
        raise ConfigurationError("degree k must be 0 or 1")
    d = assembly.d[k].tocoo()
    exponents = T * (assembly.f_bary[k][d.col] - assembly.f_bary[k + 1][d.row])
    if exponents.size and np.max(np.abs(exponents)) > _MAX_EXPONENT:
        raise OverflowRangeError(
            "deformation exponent %.3g exceeds the floating-point range; "
            "rescale f by subtracting its maximum or reduce T"
            % np.max(np.abs(exponents)))
    dT = csr_matrix((d.data * np.exp(exponents), (d.row, d.col)),
                    shape=d.shape)
    return assembly.restrict(dT.tocsc(), k + 1, k).tocsr()


@dataclass
class QuadraticForm:
    """Generalized eigenproblem A x = λ M x for one degree of D_T²."""

    degree: int
    T: float
    A: object          # csr matrix (degree 0) or LinearOperator
    M: object          # csr mass matrix on free dofs
    up: object         # d_{T,k} restricted, or None
    down: object       # d_{T,k-1} restricted, or None
    M_up: object
    M_down: object
    M_down_solver: object

    def matvec(self, x):
        y = np.zeros_like(x, dtype=float)
        if self.up is not None:
            y += self.up.T @ (self.M_up @ (self.up @ x))
        if self.down is not None:
            z = self.down.T @ (self.M @ x)
            y += self.M @ (self.down @ self.M_down_solver.solve(z))
        return y

    def mixed_pencil(self):
        """Sparse saddle-point pencil with the same finite eigenvalues.

        Auxiliary variable σ = M_{k-1}^{-1} d_{T,k-1}ᵀ M_k x keeps the
        problem sparse for shift-invert iterations.
        """
        from scipy.sparse import bmat
        C = (self.up.T @ self.M_up @ self.up) if self.up is not None \
            else csr_matrix((self.M.shape[0], self.M.shape[0]))
        if self.down is None:
            return C.tocsr(), self.M, 0
        B = (self.M @ self.down).tocsr()
        n_aux = B.shape[1]
        K = bmat([[-self.M_down, B.T], [B, C]], format="csr")
        N = bmat([[csr_matrix((n_aux, n_aux)), None], [None, self.M]],
                 format="csr")
        return K, N, n_aux


def witten_quadratic_form(assembly: WittenAssembly, T: float,
                          k: int) -> QuadraticForm:
    """Quadratic form of the deformed Hodge Laplacian in degree k."""
    if k not in (0, 1, 2):
        raise ConfigurationError("degree k must be 0, 1, or 2")
    Mk = assembly.mass(k)
    up = deformed_derivative(assembly, T, k) if k < 2 else None
    down = deformed_derivative(assembly, T, k - 1) if k > 0 else None
    M_up = assembly.mass(k + 1) if k < 2 else None
    M_down = assembly.mass(k - 1) if k > 0 else None
    solver = splu(M_down.tocsc()) if M_down is not None \
        and M_down.shape[0] > 0 else None
    if k == 0:
        A = (up.T @ M_up @ up).tocsr()
    else:
        n = Mk.shape[0]
        qf_holder = {}

        def mv(x):
            return qf_holder["qf"].matvec(x)

        A = LinearOperator((n, n), matvec=mv, dtype=float)
    qf = QuadraticForm(degree=k, T=T, A=A, M=Mk, up=up, down=down,
                       M_up=M_up, M_down=M_down, M_down_solver=solver)
    if k > 0:
        qf_holder["qf"] = qf
    return qf


def hodge_betti(assembly: WittenAssembly, tol: float = 1e-3) -> list[int]:
    """Kernel dimensions of the undeformed Hodge Laplacian per degree.

    Counts the eigenvalue cluster separated from the rest by the factor tol.
    """
    from .spectral import solve_quadratic_form
    from .errors import ResolutionError
    betti = []
    for k in range(3):
        qf = witten_quadratic_form(assembly, 0.0, k)
        n = qf.M.shape[0]
        if n == 0:
            betti.append(0)
            continue
        n_eigs = min(6, n - 1) if n > 1 else 1
        vals, _, _ = solve_quadratic_form(qf, n_eigs)
        split = 0
        for s in range(len(vals) - 1, 0, -1):
            if np.all(np.abs(vals[:s]) <= tol * abs(vals[s])):
                split = s
                break
        if split == len(vals) - 1 and len(vals) > 1:
            raise ResolutionError(
                "no spectral separation in degree %d: %s" % (k, vals))
        betti.append(split)
    return betti


def export_operator(op, path) -> None:
    """Write a sparse operator as 'row col value' triplets."""
    coo = op.tocoo()
    with open(path, "w") as fh:
        fh.write("%d %d %d\n" % (coo.shape[0], coo.shape[1], coo.nnz))
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write("%d %d %.12g\n" % (r, c, v))
