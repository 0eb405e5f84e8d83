import dataclasses

import numpy as np
import pytest

from wml.errors import ConfigurationError
from wml.homology import simplicial_betti
from wml.morse import BOUNDARY_MINUS, BOUNDARY_PLUS, INTERIOR, \
    connection_count, find_critical_points, homology_ranks, morse_counts, \
    morse_inequalities, reflected_complex, trace_flow, unstable_manifold
from wml.scenarios import get_scenario


def test_disk_linear_critical_points(flow_data):
    _, _, crits, _, _ = flow_data("disk_linear")
    assert len(crits) == 2
    kinds = sorted(c.kind for c in crits)
    assert kinds == [BOUNDARY_MINUS, BOUNDARY_PLUS]
    lo = min(crits, key=lambda c: c.f_value)
    assert np.allclose(lo.location, [-1.0, 0.0], atol=1e-6)
    assert lo.kind == BOUNDARY_MINUS and lo.index == 0
    assert lo.nu_f < 0


def test_disk_saddle_counts(flow_data):
    _, _, crits, _, _ = flow_data("disk_saddle")
    counts = morse_counts(crits)
    assert counts.c == (0, 1, 0)
    assert counts.p == (2, 0)
    assert counts.q == (0, 2)
    assert counts.absolute_generators() == (2, 1, 0)
    assert counts.relative_generators() == (0, 1, 2)


def test_interior_min_counts(flow_data):
    _, _, crits, _, _ = flow_data("disk_interior_min")
    counts = morse_counts(crits)
    assert counts.c == (1, 0, 0)
    assert counts.q == (1, 1)
    assert counts.relative_generators() == (1, 1, 1)


def test_field_descends(flow_data):
    sc, f, crits, field, _ = flow_data("disk_saddle")
    rng = np.random.default_rng(0)
    locs = np.array([c.location for c in crits])
    tested = 0
    for _ in range(200):
        x = rng.uniform(-1.4, 1.4, size=2)
        if x @ x > 1.9 ** 2:
            continue
        if np.min(np.linalg.norm(locs - x, axis=1)) < 2 * sc.adaptation_radius:
            continue
        assert float(f.gradient(x) @ field.X(x)) < 0
        tested += 1
    assert tested > 50


def test_flow_reaches_a_sink(flow_data):
    _, _, crits, field, _ = flow_data("disk_saddle")
    tr = trace_flow(field, np.array([0.3, 0.7]))
    assert tr.limit is not None
    assert tr.limit.is_sink


def test_unstable_curve_joins_sinks(flow_data):
    _, _, crits, field, _ = flow_data("disk_saddle")
    saddle = next(c for c in crits if c.kind == INTERIOR)
    cell = unstable_manifold(field, saddle)
    assert cell.dimension == 1
    sinks = [c.location for c in crits if c.is_sink]
    ends = [cell.polyline[0], cell.polyline[-1]]
    for end in ends:
        assert min(np.linalg.norm(end - s) for s in sinks) < 1e-3
    # oriented along the first frame row
    mid = len(cell.polyline) // 2
    step = cell.polyline[mid + 1] - cell.polyline[mid]
    assert float(step @ saddle.frame[0]) > 0


def test_saddle_boundary_matrix(flow_data):
    _, _, _, _, cx = flow_data("disk_saddle")
    assert cx.dims() == [2, 1, 0]
    B0 = np.asarray(cx.boundary_matrices[0])
    assert sorted(B0.ravel().tolist()) == [-1, 1]


def test_connection_count_frame_antisymmetry(flow_data):
    _, _, crits, field, _ = flow_data("disk_saddle")
    saddle = next(c for c in crits if c.kind == INTERIOR)
    sink = min((c for c in crits if c.is_sink),
               key=lambda c: tuple(np.round(c.location, 6)))
    n = connection_count(field, saddle, sink)
    assert n in (-1, 1)
    flipped = dataclasses.replace(saddle, frame=-saddle.frame)
    assert connection_count(field, flipped, sink) == -n


def test_connection_count_rejects_nonadjacent(flow_data):
    _, _, crits, field, _ = flow_data("disk_saddle")
    sinks = [c for c in crits if c.is_sink]
    with pytest.raises(ConfigurationError):
        connection_count(field, sinks[0], sinks[1])


def test_interior_peak_complex(flow_data):
    _, _, _, _, cx = flow_data("disk_peak")
    assert cx.dims() == [1, 1, 1]
    assert abs(int(np.asarray(cx.boundary_matrices[1])[0, 0])) == 1
    ranks = homology_ranks(cx)
    assert tuple(ranks.betti) == (1, 0, 0)
    assert tuple(homology_ranks(reflected_complex(cx)).betti) == (0, 0, 1)


def test_boundary_squares_to_zero(flow_data):
    for name in ("disk_saddle", "disk_peak"):
        _, _, _, _, cx = flow_data(name)
        B0, B1 = (np.asarray(b) for b in cx.boundary_matrices)
        if B0.size and B1.size:
            assert np.all(B1 @ B0 == 0)


def test_homology_matches_mesh(flow_data, mesh_for):
    _, _, _, _, cx = flow_data("annulus_linear")
    mesh = mesh_for("annulus_linear", 0.1)
    assert list(homology_ranks(cx).betti) == simplicial_betti(mesh)


def test_morse_inequalities_both_modes(flow_data):
    for name in ("disk_linear", "disk_saddle", "disk_interior_min"):
        _, _, crits, _, _ = flow_data(name)
        counts = morse_counts(crits)
        sc = get_scenario(name)
        betti_abs = {"disk_linear": (1, 0, 0), "disk_saddle": (1, 0, 0),
                     "disk_interior_min": (1, 0, 0)}[name]
        betti_rel = (0, 0, 1)
        rep = morse_inequalities(counts, betti_abs, "absolute")
        assert rep.all_hold
        rep = morse_inequalities(counts, betti_rel, "relative")
        assert rep.all_hold


def test_morse_inequalities_reject_bad_mode(flow_data):
    _, _, crits, _, _ = flow_data("disk_linear")
    with pytest.raises(ConfigurationError):
        morse_inequalities(morse_counts(crits), (1, 0, 0), "periodic")
