"""Integer linear algebra for chain complexes: Smith form, ranks, Betti numbers."""

from __future__ import annotations

import numpy as np

from .errors import ComplexInconsistencyError


def smith_normal_form(A) -> np.ndarray:
    """Diagonal of the Smith normal form of an integer matrix.

    Exact row/column reduction over the integers; intended for the small
    matrices of critical-point complexes.
    """
    A = np.array(A, dtype=object).copy()
    if A.ndim != 2:
        raise ValueError("need a matrix")
    m, n = A.shape
    diag = []
    r = 0
    while r < min(m, n):
        sub = A[r:, r:]
        nz = np.argwhere(sub != 0)
        if len(nz) == 0:
            break
        # pivot on a smallest nonzero entry
        i, j = min(nz, key=lambda ij: abs(sub[ij[0], ij[1]]))
        i += r
        j += r
        A[[r, i]] = A[[i, r]]
        A[:, [r, j]] = A[:, [j, r]]
        while True:
            done = True
            for k in range(r + 1, m):
                if A[k, r] != 0:
                    q = A[k, r] // A[r, r]
                    A[k, :] -= q * A[r, :]
                    done = done and A[k, r] == 0
            for k in range(r + 1, n):
                if A[r, k] != 0:
                    q = A[r, k] // A[r, r]
                    A[:, k] -= q * A[:, r]
                    done = done and A[r, k] == 0
            if done:
                break
            # a remainder became the new, smaller pivot candidate
            nz = np.argwhere(A[r:, r:] != 0)
            i, j = min(nz, key=lambda ij: abs(A[r + ij[0], r + ij[1]]))
            A[[r, r + i]] = A[[r + i, r]]
            A[:, [r, r + j]] = A[:, [r + j, r]]
        diag.append(abs(int(A[r, r])))
        r += 1
    return np.array(diag, dtype=int)


def integer_rank(A) -> int:
    snf = smith_normal_form(A)
    return int(np.count_nonzero(snf))


def complex_betti_numbers(differentials: list, dims: list[int]) -> list[int]:
    """Betti numbers of a finite cochain complex with integer differentials.

    ``differentials[k]`` maps degree-k cochains to degree-(k+1) cochains and
    has shape (dims[k+1], dims[k]); a trailing/leading zero map is implied.
    """
    n = len(dims)
    ranks = [0] * (n + 1)  # ranks[k] = rank of d_{k-1}
    for k, d in enumerate(differentials):
        d = np.asarray(d)
        if d.shape != (dims[k + 1], dims[k]):
            raise ComplexInconsistencyError(
                "differential %d has shape %r, expected %r"
                % (k, d.shape, (dims[k + 1], dims[k])))
        ranks[k + 1] = integer_rank(d)
    for k in range(len(differentials) - 1):
        comp = np.asarray(differentials[k + 1], dtype=object) @ \
            np.asarray(differentials[k], dtype=object)
        if np.any(comp != 0):
            raise ComplexInconsistencyError("d∘d is nonzero in degree %d" % k)
    return [dims[k] - ranks[k] - ranks[k + 1] for k in range(n)]


def simplicial_betti(mesh, relative: bool = False) -> list[int]:
    """Betti numbers of a triangulated surface, absolute or relative to its boundary.

    In the relative case the sub-complex carried by the boundary is quotiented
    out before taking homology.
    """
    d0 = np.asarray(mesh.d0.toarray(), dtype=np.int64)
    d1 = np.asarray(mesh.d1.toarray(), dtype=np.int64)
    if relative:
        keep_v = ~mesh.boundary_vertices
        keep_e = ~mesh.boundary_edges
        d0 = d0[np.ix_(keep_e, keep_v)]
        d1 = d1[:, keep_e]
    dims = [d0.shape[1], d0.shape[0], d1.shape[0]]
    # coboundary ranks over Q equal boundary ranks; float rank is exact enough
    # for small incidence matrices but guard with an integer check on demand
    r1 = np.linalg.matrix_rank(d0.astype(float))
    r2 = np.linalg.matrix_rank(d1.astype(float))
    betti = [dims[0] - r1, dims[1] - r1 - r2, dims[2] - r2]
    return [int(b) for b in betti]
