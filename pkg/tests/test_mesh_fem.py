"""Meshes, P1 assembly, eigensolves, boundary mass, consistent flux."""

import numpy as np
import pytest
import scipy.sparse as sp

from nodaldtn import fem
from nodaldtn.mesh import (CurveMesh, circle_mesh, disk_mesh, generate_mesh,
                           graded_circle_mesh, interval_mesh, polygon_mesh,
                           read_mesh, rect_mesh, write_mesh)


def test_structured_rectangle_counts():
    m = generate_mesh(("rectangle", 1.0, 1.0), 0.5)
    assert m.num_cells == 8 and m.num_nodes == 9
    assert m.max_edge_length() <= 1.5 * 0.5


def test_disk_mesh_positive_areas():
    m = generate_mesh(("disk", 1.0), 0.1)
    assert all(m.triangle_area(c) > 0 for c in range(m.num_cells))
    assert m.max_edge_length() <= 1.5 * 0.1


def test_polygon_self_intersection_rejected():
    with pytest.raises(ValueError):
        polygon_mesh([(0, 0), (1, 1), (1, 0), (0, 1)], 0.3)
    m = polygon_mesh([(0, 0), (1, 0), (1, 1), (0, 1)], 0.2)
    assert m.max_edge_length() <= 0.3


def test_degenerate_shapes_rejected():
    with pytest.raises(ValueError):
        generate_mesh(("rectangle", -1.0, 1.0), 0.1)
    with pytest.raises(ValueError):
        generate_mesh(("disk", 1.0), -0.5)


def test_mesh_io_round_trip(tmp_path):
    m = rect_mesh(1, 2, 3, 4)
    path = tmp_path / "mesh.txt"
    write_mesh(path, m, regions=[c % 2 for c in range(m.num_cells)])
    m2, regions = read_mesh(path)
    assert np.allclose(m2.nodes, m.nodes)
    assert np.array_equal(m2.triangles, m.triangles)
    assert np.array_equal(regions, [c % 2 for c in range(m.num_cells)])


def test_curve_meshes():
    c = circle_mesh(12)
    assert c.num_cells == 12 and not c.boundary_nodes
    assert np.isclose(sum(c.cell_length(i) for i in range(12)), 2 * np.pi)
    iv = interval_mesh(np.pi, 10)
    assert iv.num_cells == 10 and iv.boundary_nodes == {0, 10}
    g = graded_circle_mesh(60, 3)
    assert np.isclose(sum(g.cell_length(i) for i in range(60)), 2 * np.pi)
    # arcs congruent: cell-length pattern repeats
    lengths = np.array([g.cell_length(i) for i in range(60)])
    assert np.allclose(lengths[:20], lengths[20:40])


# ---------------------------------------------------------------- eigensolve

def test_unit_square_ground_energy():
    m = generate_mesh(("rectangle", 1.0, 1.0), 0.02)
    pencil = fem.assemble_dirichlet(m, range(m.num_cells))
    lam1 = fem.eigensolve(pencil, ("lowest", 1))[0].value
    assert abs(lam1 - 2 * np.pi ** 2) < 0.01 * 2 * np.pi ** 2


def test_unit_square_degenerate_pair():
    m = rect_mesh(1.0, 1.0, 40, 40)
    pencil = fem.assemble_dirichlet(m, range(m.num_cells))
    vals = [p.value for p in fem.eigensolve(pencil, ("lowest", 3))]
    assert abs(vals[1] - 5 * np.pi ** 2) < 0.02 * 5 * np.pi ** 2
    # the pair agrees to (better than) 4 significant digits
    assert abs(vals[1] - vals[2]) < 1e-4 * vals[1]


def test_identity_pencil():
    n = 17
    K = sp.csr_array(sp.eye_array(n))
    pairs = fem.eigensolve((K, K), ("lowest", 5))
    assert np.allclose([p.value for p in pairs], 1.0)


def test_rectangle_simple_spectrum():
    m = rect_mesh(np.pi, np.pi / np.sqrt(2), 36, 24)
    pencil = fem.assemble_dirichlet(m, range(m.num_cells))
    vals = [p.value for p in fem.eigensolve(pencil, ("lowest", 5))]
    assert np.allclose(vals, [3, 6, 9, 11, 12], rtol=0.02)
    assert all(b - a > 0.5 for a, b in zip(vals, vals[1:]))


def test_eigenvalue_convergence_rate():
    errs = []
    for nx in (10, 20, 40):
        m = rect_mesh(1, 1, nx, nx)
        pencil = fem.assemble_dirichlet(m, range(m.num_cells))
        errs.append(abs(fem.eigensolve(pencil, ("lowest", 1))[0].value - 2 * np.pi ** 2))
    assert 3.3 < errs[0] / errs[1] < 4.7
    assert 3.3 < errs[1] / errs[2] < 4.7


def test_eigensolve_near_window():
    m = rect_mesh(1, 1, 24, 24)
    pencil = fem.assemble_dirichlet(m, range(m.num_cells))
    pairs = fem.eigensolve(pencil, ("near", 5 * np.pi ** 2, 2))
    assert len(pairs) == 2
    assert np.allclose([p.value for p in pairs], 5 * np.pi ** 2, rtol=0.02)


def test_single_triangle_region_has_no_dofs():
    m = rect_mesh(1, 1, 2, 2)
    pencil = fem.assemble_dirichlet(m, [0])
    assert pencil.n == 0
    assert fem.eigensolve(pencil, ("lowest", 1)) == []


def test_empty_and_disconnected_regions_rejected():
    m = rect_mesh(1, 1, 4, 4)
    with pytest.raises(fem.FemError):
        fem.assemble_region(m, [])
    with pytest.raises(fem.FemError):
        fem.assemble_region(m, [0, 31])


def test_stiffness_rows_kill_constants():
    m = rect_mesh(1, 1, 5, 7)
    region = fem.assemble_region(m, range(m.num_cells))
    row_sums = np.asarray(region.K_full.sum(axis=1)).ravel()
    assert np.abs(row_sums[region.interior_local]).max() < 1e-12


# ---------------------------------------------------------------- boundary mass

def test_boundary_mass_single_edge():
    from nodaldtn.mesh import Mesh
    m = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0]]), np.array([[0, 1, 2]]))
    mat = fem.boundary_mass(m, [[0, 1]])
    dense = mat.toarray()
    assert np.allclose(dense[:2, :2], [[1 / 3, 1 / 6], [1 / 6, 1 / 3]])


def test_boundary_mass_row_sums_are_lumped_lengths():
    m = rect_mesh(1.0, 1.0, 2, 2)
    bottom = [0, 3, 6]  # nodes along y = 0 at x = 0, 1/2, 1
    mat = fem.boundary_mass(m, [bottom])
    sums = np.asarray(mat.sum(axis=1)).ravel()
    assert np.isclose(sums[0], 0.25) and np.isclose(sums[3], 0.5) and np.isclose(sums[6], 0.25)


def test_boundary_mass_empty_and_misaligned():
    m = rect_mesh(1.0, 1.0, 2, 2)
    assert fem.boundary_mass(m, []).nnz == 0
    with pytest.raises(fem.FemError):
        fem.boundary_mass(m, [[0, 8]])  # not a mesh edge


def test_point_mass_on_curves():
    c = circle_mesh(12)
    mat = fem.boundary_mass(c, [[3], [7]])
    assert np.allclose(mat.toarray().diagonal()[[3, 7]], 1.0)


# ---------------------------------------------------------------- consistent flux

def test_flux_green_identity_and_sign():
    m = rect_mesh(1, 1, 12, 12)
    pencil = fem.assemble_dirichlet(m, range(m.num_cells))
    pair = fem.eigensolve(pencil, ("lowest", 1))[0]
    r = fem.variational_normal_derivative(pencil, pair.vector, pair.value)
    region = pencil.region
    rng = np.random.default_rng(3)
    w = rng.standard_normal(region.num_nodes)
    lhs = r @ w[region.boundary_local]
    ufull = np.zeros(region.num_nodes)
    ufull[region.interior_local] = pair.vector
    rhs = ufull @ (region.K_full @ w) - pair.value * (ufull @ (region.M_full @ w))
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))

    q = fem.recover_pointwise_normal(region, r)
    assert q.max() <= 1e-10  # outward derivative of a positive ground state
    # O(h) accuracy against the closed form on the edge x = 0
    bnodes = region.nodes[region.boundary_local]
    ys = m.nodes[bnodes, 1]
    on_left = np.isclose(m.nodes[bnodes, 0], 0.0)
    exact = -2 * np.pi * np.sin(np.pi * ys[on_left])
    assert np.abs(q[on_left] - exact).max() < 1.2 * m.max_edge_length()


def test_flux_zero_field_and_wrong_energy():
    m = rect_mesh(1, 1, 8, 8)
    pencil = fem.assemble_dirichlet(m, range(m.num_cells))
    pair = fem.eigensolve(pencil, ("lowest", 1))[0]
    r0 = fem.variational_normal_derivative(pencil, np.zeros(pencil.n), pair.value)
    assert np.allclose(r0, 0.0)
    with pytest.raises(fem.FemError):
        fem.variational_normal_derivative(pencil, pair.vector, pair.value * 1.5)


def test_curve_interval_spectrum():
    iv = interval_mesh(np.pi, 64)
    pencil = fem.assemble_dirichlet(iv, range(iv.num_cells))
    vals = [p.value for p in fem.eigensolve(pencil, ("lowest", 3))]
    assert np.allclose(vals, [1, 4, 9], rtol=5e-3)
