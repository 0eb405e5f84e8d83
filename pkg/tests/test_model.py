import numpy as np
import pytest

from wml.dec import ABSOLUTE, assemble
from wml.errors import ConfigurationError, ResolutionError
from wml.model import euclidean_kernel, halfspace_kernel, oscillator_1d, \
    quasimode, quasimode_residual, robin_halfline
from wml.morse import BOUNDARY_PLUS, find_critical_points
from wml.scenarios import get_scenario
from wml.spectral import lowest_eigenpairs


def test_kernel_parameter_validation():
    euclidean_kernel(2, 1, 4.0)
    halfspace_kernel(2, 1, 4.0)
    with pytest.raises(ConfigurationError):
        euclidean_kernel(2, 3, 4.0)
    with pytest.raises(ConfigurationError):
        halfspace_kernel(2, 2, 4.0)
    with pytest.raises(ConfigurationError):
        euclidean_kernel(2, 1, 0.0)


def test_oscillator_truncation_contract():
    with pytest.raises(ConfigurationError):
        oscillator_1d(1.0, 2.0, 0.01)


def test_halfline_truncation_contract():
    with pytest.raises(ConfigurationError):
        robin_halfline(2.0, 1.0, 0.01)


def test_oscillator_spectrum():
    m = oscillator_1d(1.0, 6.0, 0.01)
    vals, _, _ = lowest_eigenpairs(m.A, m.M, k=3, seed=0)
    assert np.allclose(vals, [0.0, 2.0, 4.0], atol=2e-3)


def test_halfline_exact_discrete_kernel():
    T = 2.0
    m = robin_halfline(T, 10.0, 0.01)
    vals, vecs, _ = lowest_eigenpairs(m.A, m.M, k=2, seed=0)
    assert abs(vals[0]) < 1e-9
    assert vals[1] > 0.9 * T * T
    v = vecs[:, 0]
    ex = np.exp(-T * m.grid)
    Md = m.M.toarray()
    v = v / np.sqrt(v @ (Md @ v)) * np.sign(v[0])
    ex = ex / np.sqrt(ex @ (Md @ ex))
    err = np.sqrt((v - ex) @ (Md @ (v - ex)))
    assert err < 1e-6


def test_dirichlet_halfline_has_gap():
    T = 2.0
    m = robin_halfline(T, 10.0, 0.005, dirichlet=True)
    vals, _, _ = lowest_eigenpairs(m.A, m.M, k=1, seed=0)
    assert vals[0] > 0.9 * T * T


def test_quasimode_unit_norm_and_support(mesh_for):
    sc = get_scenario("disk_linear")
    mesh = mesh_for("disk_linear", 0.08)
    crits = find_critical_points(sc.f, sc.domain)
    p = min(crits, key=lambda c: c.f_value)
    qm = quasimode(p, 8.0, sc.adaptation_radius, mesh, sc.domain)
    assert qm.alpha > 0
    from wml.dec import _mass_matrices
    M0 = _mass_matrices(mesh)[0]
    assert abs(qm.cochain_values @ (M0 @ qm.cochain_values) - 1.0) < 1e-10
    far = np.linalg.norm(mesh.vertices - p.location, axis=1) \
        > 2 * sc.adaptation_radius + mesh.h
    assert np.all(qm.cochain_values[far] == 0.0)


def test_quasimode_enforces_resolution_contract(mesh_for):
    sc = get_scenario("disk_linear")
    mesh = mesh_for("disk_linear", 0.1)
    crits = find_critical_points(sc.f, sc.domain)
    p = min(crits, key=lambda c: c.f_value)
    with pytest.raises(ResolutionError):
        quasimode(p, 64.0, sc.adaptation_radius, mesh, sc.domain)


def test_quasimode_rejects_outward_points(mesh_for):
    sc = get_scenario("disk_linear")
    mesh = mesh_for("disk_linear", 0.08)
    crits = find_critical_points(sc.f, sc.domain)
    top = next(c for c in crits if c.kind == BOUNDARY_PLUS)
    with pytest.raises(ConfigurationError):
        quasimode(top, 8.0, sc.adaptation_radius, mesh, sc.domain)


def test_residual_decays_with_T(mesh_for):
    sc = get_scenario("disk_linear")
    mesh = mesh_for("disk_linear", 0.06)
    crits = find_critical_points(sc.f, sc.domain)
    p = min(crits, key=lambda c: c.f_value)
    asm = assemble(mesh, sc.f, ABSOLUTE)
    rs = [quasimode_residual(
        quasimode(p, T, sc.adaptation_radius, mesh, sc.domain), asm, T)
        for T in (4.0, 8.0, 16.0)]
    assert rs[0] > rs[1] > rs[2] > 0
