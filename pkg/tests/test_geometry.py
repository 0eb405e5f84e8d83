import numpy as np
import pytest

from wml.errors import MeshError
from wml.geometry import annulus_domain, build_mesh, disk_domain, \
    mesh_report, outward_normal


def test_disk_mesh_basic_quality(mesh_for):
    mesh = mesh_for("disk_linear", 0.1)
    assert mesh.euler_characteristic() == 1
    assert mesh.h <= 0.15
    assert mesh.min_angle_deg() > 20.0
    assert np.all(mesh.triangle_areas() > 0)


def test_disk_boundary_vertices_on_circle(mesh_for):
    mesh = mesh_for("disk_linear", 0.1)
    b = mesh.vertices[mesh.boundary_vertices]
    r = np.linalg.norm(b, axis=1)
    assert np.all(np.abs(r - 1.0) < mesh.h ** 2)


def test_incidence_composition_vanishes(mesh_for):
    mesh = mesh_for("disk_linear", 0.1)
    assert (mesh.d1 @ mesh.d0).nnz == 0


def test_annulus_mesh_topology():
    domain = annulus_domain(0.5, 1.0)
    mesh = build_mesh(domain, 0.1)
    assert mesh.euler_characteristic() == 0
    assert domain.euler_characteristic == 0
    assert len(domain.boundary_loops) == 2


def test_outward_normals_on_annulus():
    domain = annulus_domain(0.5, 1.0)
    n_out = outward_normal(domain, 0, domain.boundary_loops[0].nearest(
        np.array([1.0, 0.0]))[0])
    n_in = outward_normal(domain, 1, domain.boundary_loops[1].nearest(
        np.array([0.5, 0.0]))[0])
    assert np.allclose(n_out, [1.0, 0.0], atol=1e-6)
    assert np.allclose(n_in, [-1.0, 0.0], atol=1e-6)
    assert abs(np.linalg.norm(n_out) - 1.0) < 1e-12


def test_boundary_loop_arclength_roundtrip():
    loop = disk_domain(1.0).boundary_loops[0]
    for t in (0.0, 0.13, 0.5, 0.99):
        s = loop.arclength_at_param(t)
        assert abs(loop.param_at_arclength(s) - t) < 1e-6
    assert abs(loop.length - 2 * np.pi) < 1e-4


def test_mesh_report_consistency(mesh_for):
    mesh = mesh_for("disk_linear", 0.1)
    rep = mesh_report(mesh)
    assert rep.num_vertices == mesh.num_vertices
    assert rep.num_vertices - rep.num_edges + rep.num_triangles == 1
    assert rep.h == mesh.h
    assert rep.min_area > 0


def test_build_mesh_rejects_bad_resolution():
    with pytest.raises(MeshError):
        build_mesh(disk_domain(1.0), 0.0)


def test_realized_resolution_tracks_target():
    mesh = build_mesh(disk_domain(1.0), 0.15)
    assert mesh.h <= 1.5 * 0.15
