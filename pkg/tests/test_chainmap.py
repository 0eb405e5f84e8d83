import numpy as np
import pytest

from wml.chainmap import _float_betti, build_comparison, \
    chain_commutation_residual, eigenbasis_differentials, instanton_basis, \
    integrate_over_unstable, verify_isomorphism
from wml.dec import ABSOLUTE, Cochain, assemble
from wml.errors import ConfigurationError
from wml.morse import UnstableCell, unstable_manifold


def _point_cell(x):
    return UnstableCell(0, np.eye(2), point=np.asarray(x, dtype=float))


def _curve_cell(points):
    return UnstableCell(1, np.eye(2), polyline=np.asarray(points, float))


def test_constant_function_at_a_point(mesh_for):
    mesh = mesh_for("disk_linear", 0.1)
    alpha = Cochain(0, np.ones(mesh.num_vertices))
    val = integrate_over_unstable(alpha, _point_cell([0.2, -0.1]), mesh)
    assert abs(val - 1.0) < 1e-12


def test_exact_differential_along_curve(mesh_for):
    mesh = mesh_for("disk_linear", 0.08)
    g = mesh.vertices[:, 0] ** 2 + mesh.vertices[:, 1]
    dg = np.asarray(mesh.d0 @ g).ravel()
    t = np.linspace(0.0, 1.0, 60)
    start, end = np.array([-0.5, -0.3]), np.array([0.4, 0.5])
    curve = start + t[:, None] * (end - start)
    val = integrate_over_unstable(Cochain(1, dg), _curve_cell(curve), mesh)
    expected = (end[0] ** 2 + end[1]) - (start[0] ** 2 + start[1])
    assert abs(val - expected) < 5e-3


def test_orientation_reversal_negates(mesh_for):
    mesh = mesh_for("disk_linear", 0.08)
    g = mesh.vertices[:, 0]
    dg = np.asarray(mesh.d0 @ g).ravel()
    t = np.linspace(0.0, 1.0, 40)
    curve = np.column_stack([0.6 * t - 0.3, 0.2 * np.sin(3 * t)])
    fwd = integrate_over_unstable(Cochain(1, dg), _curve_cell(curve), mesh)
    bwd = integrate_over_unstable(Cochain(1, dg), _curve_cell(curve[::-1]),
                                  mesh)
    assert abs(fwd + bwd) < 1e-12


def test_degree_mismatch_rejected(mesh_for):
    mesh = mesh_for("disk_linear", 0.1)
    alpha = Cochain(0, np.ones(mesh.num_vertices))
    with pytest.raises(ConfigurationError):
        integrate_over_unstable(alpha, _curve_cell([[0, 0], [0.1, 0]]), mesh)


def test_area_form_over_patch(mesh_for):
    """A 2-cochain of cell areas integrates a small disk to its area."""
    mesh = mesh_for("disk_linear", 0.08)
    alpha = Cochain(2, mesh.triangle_areas())
    r, m = 0.3, 48
    phis = np.linspace(0, 2 * np.pi, m, endpoint=False)
    verts = np.vstack([[0.0, 0.0],
                       np.column_stack([r * np.cos(phis),
                                        r * np.sin(phis)])])
    tris = np.array([[0, 1 + i, 1 + (i + 1) % m] for i in range(m)])
    cell = UnstableCell(2, np.eye(2), vertices=verts, triangles=tris)
    val = integrate_over_unstable(alpha, cell, mesh)
    assert abs(val - np.pi * r * r) < 5e-3


def test_float_betti():
    d0 = np.array([[1.0, -1.0]])
    assert _float_betti([d0, np.zeros((0, 1))], [2, 1, 0]) == [1, 0, 0]
    assert _float_betti([np.zeros((1, 2)), np.zeros((0, 1))],
                        [2, 1, 0]) == [2, 1, 0]


def test_disk_linear_comparison(flow_data, mesh_for):
    sc, f, crits, field, cx = flow_data("disk_linear")
    mesh = mesh_for("disk_linear", 0.06)
    asm = assemble(mesh, f, ABSOLUTE)
    T = 8.0
    basis = instanton_basis(asm, T, 1.0, seed=0)
    assert basis.dims() == [1, 0, 0]
    cells = [[unstable_manifold(field, p) for p in gens]
             for gens in cx.generators]
    cmp_ = build_comparison(basis, cx, cells, mesh, f, asm,
                            sc.adaptation_radius, sc.domain)
    assert cmp_.P[0].shape == (1, 1)
    assert cmp_.P[0][0, 0] != 0.0
    assert cmp_.P[1].shape == (0, 0)
    D = eigenbasis_differentials(basis, asm, T)
    resid = chain_commutation_residual(cmp_.P, D, cx.boundary_matrices)
    assert resid < 1e-2
    rep = verify_isomorphism(cmp_, D, cx.boundary_matrices)
    assert rep.invertible == [True, True, True]
    assert 0.5 < rep.singular_values[0][0] < 1.5
    assert rep.induced_betti == rep.complex_betti == (1, 0, 0)
    assert rep.is_isomorphism


def test_instanton_basis_is_orthonormal(flow_data, mesh_for):
    sc, f, _, _, _ = flow_data("disk_saddle")
    mesh = mesh_for("disk_saddle", 0.08)
    asm = assemble(mesh, f, ABSOLUTE)
    basis = instanton_basis(asm, 8.0, 1.0, seed=0)
    assert basis.dims() == [2, 1, 0]
    V = basis.vectors[0][asm.free[0]]
    G = V.T @ (asm.mass(0) @ V)
    assert np.allclose(G, np.eye(2), atol=1e-8)
