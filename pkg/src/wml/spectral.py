"""Low-spectrum solves for the deformed Hodge Laplacians and gap scans."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import eigsh

from .dec import Cochain, QuadraticForm, WittenAssembly, witten_quadratic_form
from .errors import ConfigurationError, ResolutionError, SolverError
from .morse import _max_workers

log = logging.getLogger(__name__)

ZERO_FLOOR = 1e-9   # eigenvalues below this are treated as exact zeros


@dataclass
class SpectralEntry:
    degree: int
    T: float
    bc: str
    eigenvalues: np.ndarray
    eigenvectors: list          # Cochains on the full simplex set
    residuals: np.ndarray


@dataclass
class SpectralReport:
    entries: list
    mesh_id: str
    C0: float
    seed: int


def lowest_eigenpairs(A, M, k: int, tol: float = 1e-10, seed: int = 0):
    """k smallest eigenpairs of the symmetric pencil A x = λ M x.

    Shift-invert iteration with a seeded start vector; falls back to a dense
    solve when the requested count is close to the dimension.
    """
    n = A.shape[0]
    if k > n:
        raise ConfigurationError("requested %d eigenpairs of dimension %d"
                                 % (k, n))
    if k >= n - 1 or n < 40:
        Ad = A.toarray() if hasattr(A, "toarray") else np.asarray(A)
        Md = M.toarray() if hasattr(M, "toarray") else np.asarray(M)
        vals, vecs = scipy.linalg.eigh(Ad, Md)
        vals, vecs = vals[:k], vecs[:, :k]
    else:
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(n)
        try:
            vals, vecs = eigsh(A, k=k, M=M, sigma=-0.01, which="LM",
                               v0=v0, tol=tol, maxiter=5000)
        except Exception as exc:  # ARPACK non-convergence
            raise SolverError("eigensolver failed: %s" % exc)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    residuals = _residuals(A, M, vals, vecs)
    scale = max(1.0, float(np.max(np.abs(vals))) if len(vals) else 1.0)
    if np.any(residuals > max(1e-6, 100 * tol) * scale):
        raise SolverError("eigenpair residuals too large",
                          residuals=residuals.tolist())
    return vals, vecs, residuals


def _residuals(A, M, vals, vecs):
    out = []
    for lam, v in zip(vals, vecs.T):
        r = A @ v - lam * (M @ v)
        out.append(float(np.linalg.norm(r) / max(np.linalg.norm(v), 1e-300)))
    return np.array(out)


def solve_quadratic_form(qf: QuadraticForm, k: int, tol: float = 1e-10,
                         seed: int = 0):
    """Low eigenpairs of one degree of D_T², via the sparse mixed pencil.

    For degrees with a down-derivative the saddle-point pencil keeps the
    operator sparse; its finite eigenvalues coincide with those of the
    Schur-complement form, and the primary block of each eigenvector is the
    sought cochain.
    """
    n = qf.M.shape[0]
    if n == 0:
        return np.array([]), np.zeros((0, 0)), np.array([])
    k = min(k, n)
    K, N, n_aux = qf.mixed_pencil()
    if n_aux == 0:
        return lowest_eigenpairs(K, qf.M, k, tol=tol, seed=seed)
    dim = K.shape[0]
    if k >= n - 1 or dim < 60:
        dense_A = _dense_schur(qf)
        vals, vecs = scipy.linalg.eigh(dense_A, qf.M.toarray())
        vals, vecs = vals[:k], vecs[:, :k]
    else:
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(dim)
        try:
            vals, raw = eigsh(K, k=k, M=N, sigma=-0.01, which="LM",
                              v0=v0, tol=tol, maxiter=5000)
        except Exception as exc:
            raise SolverError("eigensolver failed: %s" % exc)
        order = np.argsort(vals)
        vals = vals[order]
        vecs = raw[n_aux:, order]
        for i in range(vecs.shape[1]):
            nrm = math.sqrt(max(float(vecs[:, i] @ (qf.M @ vecs[:, i])),
                                1e-300))
            vecs[:, i] /= nrm
    residuals = np.array([
        float(np.linalg.norm(qf.matvec(v) - lam * (qf.M @ v))
              / max(np.linalg.norm(v), 1e-300))
        for lam, v in zip(vals, vecs.T)])
    scale = max(1.0, float(np.max(np.abs(vals))) if len(vals) else 1.0)
    if np.any(residuals > 1e-6 * scale):
        raise SolverError("eigenpair residuals too large",
                          residuals=residuals.tolist())
    return vals, vecs, residuals


def _dense_schur(qf: QuadraticForm) -> np.ndarray:
    n = qf.M.shape[0]
    A = np.zeros((n, n))
    if qf.up is not None:
        A += (qf.up.T @ qf.M_up @ qf.up).toarray()
    if qf.down is not None:
        B = (qf.M @ qf.down).toarray()
        A += B @ np.linalg.solve(qf.M_down.toarray(), B.T)
    return 0.5 * (A + A.T)


def count_below(eigenvalues, C0: float) -> int:
    vals = np.asarray(eigenvalues, dtype=float)
    if len(vals) and vals.max() < C0:
        raise ResolutionError(
            "all %d computed eigenvalues lie below C0=%g; request more"
            % (len(vals), C0))
    return int(np.count_nonzero(vals < C0))


def _embed(vec: np.ndarray, mask: np.ndarray, degree: int) -> Cochain:
    full = np.zeros(len(mask))
    full[mask] = vec
    return Cochain(degree, full)


@dataclass
class GapScanRow:
    T: float
    degree: int
    bc: str
    count: int
    lambda_small: float   # largest eigenvalue below C0, nan if none
    lambda_big: float     # smallest eigenvalue at/above C0


@dataclass
class GapScan:
    rows: list
    slopes: dict           # degree -> fitted slope of log lambda_small vs T
    min_big_over_T2: float
    violations: list = field(default_factory=list)
    report: SpectralReport = None


def resolution_contract_ok(h: float, T_max: float) -> bool:
    return h * math.sqrt(max(T_max, 0.0)) <= 0.5


def gap_scan(assembly_factory, T_list, C0: float, bc: str,
             mesh=None, expected_counts=None, n_eigs: int = 8,
             seed: int = 0, override_resolution_contract: bool = False,
             mesh_id: str = "") -> GapScan:
    """Scan the low spectrum over T, tabulating counts and the gap structure.

    assembly_factory: callable () -> WittenAssembly (shared for all T).
    expected_counts: generator counts per degree for mismatch reporting.
    """
    T_list = list(T_list)
    if any(b <= a for a, b in zip(T_list, T_list[1:])) or \
            any(t < 0 for t in T_list):
        raise ConfigurationError("T values must be ascending and nonnegative")
    assembly = assembly_factory() if callable(assembly_factory) \
        else assembly_factory
    if mesh is None:
        mesh = assembly.mesh
    if T_list and not resolution_contract_ok(mesh.h, max(T_list)):
        if not override_resolution_contract:
            raise ResolutionError(
                "mesh too coarse for T=%g: h·sqrt(T) = %.3f > 0.5"
                % (max(T_list), mesh.h * math.sqrt(max(T_list))))
        log.warning("resolution contract overridden: h·sqrt(T) = %.3f",
                    mesh.h * math.sqrt(max(T_list)))

    tasks = [(T, k) for T in T_list for k in range(3)]

    def solve_one(task):
        T, k = task
        qf = witten_quadratic_form(assembly, T, k)
        want = min(n_eigs, qf.M.shape[0])
        while True:
            vals, vecs, res = solve_quadratic_form(qf, want, seed=seed)
            if len(vals) == 0 or vals.max() >= C0 or want >= qf.M.shape[0]:
                return vals, vecs, res
            want = min(2 * want, qf.M.shape[0])

    with ThreadPoolExecutor(max_workers=_max_workers()) as pool:
        results = list(pool.map(solve_one, tasks))

    rows, entries, violations = [], [], []
    for (T, k), (vals, vecs, res) in zip(tasks, results):
        below = vals[vals < C0]
        above = vals[vals >= C0]
        count = len(below)
        rows.append(GapScanRow(
            T=T, degree=k, bc=bc, count=count,
            lambda_small=float(below[-1]) if count else float("nan"),
            lambda_big=float(above[0]) if len(above) else float("nan")))
        entries.append(SpectralEntry(
            degree=k, T=T, bc=bc, eigenvalues=vals,
            eigenvectors=[_embed(v, assembly.free[k], k) for v in vecs.T],
            residuals=res))
        if expected_counts is not None and count != expected_counts[k]:
            violations.append(
                "T=%g degree %d: %d eigenvalues below C0, expected %d"
                % (T, k, count, expected_counts[k]))

    slopes = {}
    fit_T = T_list[len(T_list) // 2:] if len(T_list) >= 4 else T_list
    for k in range(3):
        series = [(r.T, r.lambda_small) for r in rows
                  if r.degree == k and r.T in fit_T
                  and not math.isnan(r.lambda_small)]
        if len(series) < 2:
            continue
        if all(v <= ZERO_FLOOR for _, v in series):
            # the discrete operator has an exact kernel in this degree;
            # decay is below floating-point resolution at every T
            slopes[k] = float("-inf")
            continue
        ts = np.array([t for t, _ in series])
        logs = np.array([math.log(max(v, 1e-300)) for _, v in series])
        slopes[k] = float(np.polyfit(ts, logs, 1)[0])

    bigs = [r.lambda_big / r.T ** 2 for r in rows
            if r.T > 0 and not math.isnan(r.lambda_big)]
    return GapScan(rows=rows,
                   slopes=slopes,
                   min_big_over_T2=min(bigs) if bigs else float("nan"),
                   violations=violations,
                   report=SpectralReport(entries=entries, mesh_id=mesh_id,
                                         C0=C0, seed=seed))
