import math

import numpy as np
import pytest

import hypflux as hf
from hypflux.errors import MeshError


def test_uniform_1d_basic():
    m = hf.build_uniform_1d(4, 1.0)
    assert m.dim == 1
    assert m.h == 0.25
    assert np.all(m.cell_volumes == 0.25)
    assert m.n_interfaces == 4
    assert np.all(np.abs(m.iface_areas - 1.0) == 0.0)


def test_uniform_1d_regularity_constant():
    # hand evaluation in d=1: |K|/h = 1 and h^0/|bdK| = 1/2, so a = 0.5
    m = hf.build_uniform_1d(4, 1.0)
    assert m.a == pytest.approx(0.5, abs=0.0)
    assert np.all(m.cell_volumes >= m.a * m.h)
    assert np.all(m.boundary_measure() <= 1.0 / m.a + 1e-15)


def test_uniform_1d_rejects_degenerate():
    with pytest.raises(MeshError):
        hf.build_uniform_1d(2, 1.0)


def test_uniform_quad_2d_basic():
    m = hf.build_uniform_quad_2d(4, 4, 1.0, 1.0)
    assert m.n_cells == 16
    assert np.allclose(m.cell_volumes, 0.0625, rtol=0, atol=1e-15)
    assert m.h == pytest.approx(0.25 * math.sqrt(2.0), rel=1e-15)


def test_uniform_quad_2d_regularity():
    # squares of side s: |K| = h^2/2 and |bdK| = 2 sqrt(2) h, so a = 1/(2 sqrt 2)
    m = hf.build_uniform_quad_2d(4, 4, 1.0, 1.0)
    assert m.a == pytest.approx(1.0 / (2.0 * math.sqrt(2.0)), rel=1e-13)


def test_uniform_quad_2d_axis_normals_exact():
    m = hf.build_uniform_quad_2d(4, 8, 1.0, 1.0)
    vertical = np.abs(m.iface_normals[:, 0]) == 1.0
    assert np.any(vertical)
    assert np.all(m.iface_normals[vertical][:, 1] == 0.0)


def test_quad_2d_rejects_small():
    with pytest.raises(MeshError):
        hf.build_uniform_quad_2d(2, 4, 1.0, 1.0)


def test_perturbed_zero_jitter_matches_uniform():
    a = hf.build_uniform_quad_2d(8, 8, 1.0, 1.0)
    b = hf.build_perturbed_quad_2d(8, 8, 1.0, 1.0, 0.0, 7)
    assert np.array_equal(a.cell_centroids, b.cell_centroids)
    assert np.array_equal(a.cell_volumes, b.cell_volumes)
    assert np.array_equal(a.iface_normals, b.iface_normals)
    assert np.array_equal(a.iface_areas, b.iface_areas)


def test_perturbed_quad_regular_and_convex():
    m = hf.build_perturbed_quad_2d(8, 8, 1.0, 1.0, 0.2, 7)
    assert m.a > 0.05
    hf.validate_mesh(m)  # closure, normals, regularity all re-checked


def test_perturbed_quad_deterministic():
    a = hf.build_perturbed_quad_2d(8, 8, 1.0, 1.0, 0.2, 7)
    b = hf.build_perturbed_quad_2d(8, 8, 1.0, 1.0, 0.2, 7)
    assert np.array_equal(a.cell_centroids, b.cell_centroids)
    assert np.array_equal(a.iface_normals, b.iface_normals)
    assert np.array_equal(a.iface_midpoints, b.iface_midpoints)


def test_perturbed_quad_rejects_large_jitter():
    with pytest.raises(MeshError):
        hf.build_perturbed_quad_2d(8, 8, 1.0, 1.0, 0.25, 7)


def test_regularity_constant_definition():
    for m in (hf.build_uniform_1d(7, 2.0),
              hf.build_uniform_quad_2d(5, 6, 1.0, 2.0),
              hf.build_perturbed_quad_2d(6, 6, 1.0, 1.0, 0.15, 3)):
        a = hf.regularity_constant(m)
        assert a > 0
        assert np.all(m.cell_volumes * (1 + 1e-12) >= a * m.h ** m.dim)
        assert np.all(m.boundary_measure() <= (1 + 1e-12) * m.h ** (m.dim - 1) / a)


def test_closure_identity():
    for m in (hf.build_uniform_1d(5, 1.0),
              hf.build_perturbed_quad_2d(6, 6, 1.0, 1.0, 0.2, 11)):
        closure = np.zeros((m.n_cells, m.dim))
        contrib = m.iface_areas[:, None] * m.iface_normals
        np.add.at(closure, m.iface_left, contrib)
        np.add.at(closure, m.iface_right, -contrib)
        norm = np.sqrt((closure ** 2).sum(axis=1))
        assert np.all(norm <= 1e-12 * m.boundary_measure())


def test_interface_references():
    m = hf.build_perturbed_quad_2d(5, 5, 1.0, 1.0, 0.1, 2)
    refs = np.zeros(m.n_interfaces, dtype=int)
    for k, ids in enumerate(m.cell_interfaces):
        assert ids
        for e in ids:
            refs[e] += 1
            assert k in (m.iface_left[e], m.iface_right[e])
    assert np.all(refs == 2)
    assert np.all(m.iface_left != m.iface_right)


def test_unit_normals():
    m = hf.build_perturbed_quad_2d(6, 6, 1.0, 1.0, 0.2, 5)
    norms = np.sqrt((m.iface_normals ** 2).sum(axis=1))
    assert np.abs(norms - 1.0).max() <= 1e-14


def test_json_round_trip_bit_exact():
    for m in (hf.build_uniform_1d(6, 1.5),
              hf.build_perturbed_quad_2d(5, 5, 1.0, 1.0, 0.2, 9)):
        text = hf.mesh_to_json(m)
        m2 = hf.mesh_from_json(text)
        assert hf.mesh_to_json(m2) == text
        assert np.array_equal(m.cell_volumes, m2.cell_volumes)
        assert np.array_equal(m.cell_centroids, m2.cell_centroids)
        assert np.array_equal(m.iface_normals, m2.iface_normals)
        assert m.h == m2.h and m.a == m2.a


def test_periodic_distance():
    m = hf.build_uniform_1d(8, 1.0)
    d = m.periodic_distance_to_origin(np.array([[0.9]]))
    assert d[0] == pytest.approx(0.1, rel=1e-12)


def test_record_views_match_arrays():
    m = hf.build_uniform_1d(4, 1.0)
    cells = m.cells
    ifaces = m.interfaces
    assert len(cells) == m.n_cells and len(ifaces) == m.n_interfaces
    assert cells[1].volume == m.cell_volumes[1]
    assert cells[1].interface_ids == m.cell_interfaces[1]
    assert ifaces[2].left == m.iface_left[2]
    assert ifaces[2].right == m.iface_right[2]
    assert np.array_equal(ifaces[2].normal, m.iface_normals[2])
