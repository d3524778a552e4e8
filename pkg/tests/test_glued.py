"""Glued operator: gluing identities, spectra, extraction, pair compatibility."""

import math

import numpy as np
import pytest
import scipy.sparse as sp

from nodaldtn import fem, glued
from nodaldtn import partition as pt
from nodaldtn.mesh import rect_mesh

from conftest import checkerboard_partition, rect_case


def empty_cut_weights(mesh, p):
    wit = pt.is_valid_cut(p, [])
    assert wit is not None
    return pt.weights_from_orientations(p, mesh, wit, {s.id: 1 for s in p.segments})


def glued_node_permutation(space, plain):
    node_of_dof = np.zeros(space.ndof, dtype=int)
    for i, reg in enumerate(space.regions):
        for l, dof in space.interior_dof_of[i].items():
            node_of_dof[dof] = reg.nodes[l]
    node_of_dof[space.gamma_dofs] = space.gamma_nodes
    lookup = {int(n): i for i, n in enumerate(plain.free_nodes)}
    perm = np.array([lookup[int(n)] for n in node_of_dof])
    P = sp.coo_array((np.ones(space.ndof), (perm, np.arange(space.ndof))),
                     shape=(space.ndof, space.ndof)).tocsr()
    return P


def test_bipartite_gluing_is_plain_continuity():
    mesh, p = checkerboard_partition(8)
    w = empty_cut_weights(mesh, p)
    space = glued.build_glued_space(mesh, p, w)
    plain = fem.assemble_dirichlet(mesh, range(mesh.num_cells))
    assert space.ndof == plain.n
    P = glued_node_permutation(space, plain)
    for A, B in ((space.K, plain.K), (space.M, plain.M)):
        diff = P @ A @ P.T - B
        assert diff.nnz == 0 or np.abs(diff.toarray()).max() < 1e-14


def test_junction_consistency_rule():
    mesh, p = checkerboard_partition(8)
    # valence-4 junction: free for every valid weight choice
    for w in (empty_cut_weights(mesh, p), pt.maximal_cut_weights(p, mesh)):
        space = glued.build_glued_space(mesh, p, w)
        assert space.junction_valences() and all(
            v == 4 for v in space.junction_valences().values())
        center = [n for n, info in space.node_info.items() if info.end_count == 4][0]
        assert space.node_info[center].free


def test_odd_junction_is_dirichlet():
    from conftest import mercedes_partition
    mesh, p = mercedes_partition()
    w = pt.maximal_cut_weights(p, mesh)
    space = glued.build_glued_space(mesh, p, w)
    triple = [n for n, info in space.node_info.items() if info.end_count == 3]
    assert len(triple) == 1 and not space.node_info[triple[0]].free


def test_sigma_infinity_is_subdomain_cluster():
    mesh, p = checkerboard_partition(8)
    w = pt.maximal_cut_weights(p, mesh)
    space = glued.build_glued_space(mesh, p, w)
    pencil = space.pencil(math.inf)
    vals = [e.value for e in fem.eigensolve((pencil.K, pencil.M), ("lowest", 5))]
    ground = glued.compute_ground_data(mesh, p)
    assert np.allclose(vals[:4], ground.lambda_star, rtol=1e-12)
    assert vals[4] > 1.5 * vals[3]


def test_ritz_values_monotone_in_sigma():
    mesh, p = checkerboard_partition(6)
    w = pt.maximal_cut_weights(p, mesh)
    space = glued.build_glued_space(mesh, p, w)
    prev = None
    for sigma in (0.0, 1.0, 10.0):
        pencil = space.pencil(sigma)
        vals = np.array([e.value for e in fem.eigensolve((pencil.K, pencil.M), ("lowest", 6))])
        if prev is not None:
            assert np.all(vals >= prev - 1e-10)
        prev = vals


def test_edge_equivalent_weights_same_matrices():
    mesh, p = checkerboard_partition(6)
    w = pt.maximal_cut_weights(p, mesh)
    d = w.as_dict()
    a0 = p.segments[0]
    d[(a0.left, a0.id)] *= -1
    d[(a0.right, a0.id)] *= -1
    w2 = pt.WeightAssignment.from_dict(d)
    assert pt.weight_equivalence(p, w, w2) == (True, False)
    s1 = glued.build_glued_space(mesh, p, w)
    s2 = glued.build_glued_space(mesh, p, w2)
    assert (s1.K - s2.K).nnz == 0
    assert (s1.M - s2.M).nnz == 0
    assert (s1.B - s2.B).nnz == 0


def test_domain_equivalent_weights_same_spectra():
    mesh, p = checkerboard_partition(6)
    w = pt.maximal_cut_weights(p, mesh)
    d = {k: (-v if k[0] in (0, 3) else v) for k, v in w.as_dict().items()}
    w2 = pt.WeightAssignment.from_dict(d)
    assert pt.weight_equivalence(p, w, w2)[1]
    s1 = glued.build_glued_space(mesh, p, w)
    s2 = glued.build_glued_space(mesh, p, w2)
    v1 = [e.value for e in fem.eigensolve((s1.K, s1.M), ("lowest", 6))]
    v2 = [e.value for e in fem.eigensolve((s2.K, s2.M), ("lowest", 6))]
    assert np.allclose(v1, v2, rtol=1e-11)


def test_invalid_weights_rejected():
    mesh, p = checkerboard_partition(4)
    # empty cut is valid here, so flip a single side to break validity:
    # product pattern (-1 on one segment of a 4-cycle) is an odd cut
    w = empty_cut_weights(mesh, p)
    d = w.as_dict()
    a0 = p.segments[0]
    d[(a0.left, a0.id)] *= -1
    bad = pt.WeightAssignment.from_dict(d)
    assert pt.cut_from_weights(p, bad).witness is None
    with pytest.raises(ValueError):
        glued.build_glued_space(mesh, p, bad)


# ---------------------------------------------------------------- extraction

def sample_square(nx, f):
    mesh = rect_mesh(1.0, 1.0, nx, nx)
    return mesh, f(mesh.nodes[:, 0], mesh.nodes[:, 1])


def test_extract_two_domain_mode():
    mesh, u = sample_square(16, lambda x, y: np.sin(2 * np.pi * x) * np.sin(np.pi * y))
    p = glued.extract_nodal_partition(mesh, u)
    assert p.k == 2 and len(p.segments) == 1
    assert all(np.isclose(mesh.nodes[n, 0], 0.5) for n in p.segments[0].nodes)


def test_extract_four_domain_mode():
    mesh, u = sample_square(16, lambda x, y: np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y))
    p = glued.extract_nodal_partition(mesh, u)
    assert p.k == 4 and len(p.segments) == 4
    center = [n for s in p.segments for n in (s.nodes[0], s.nodes[-1])
              if np.allclose(mesh.nodes[n], [0.5, 0.5])]
    assert len(center) == 4  # all four segments end at the center junction


def test_extract_ground_state_single_domain():
    mesh, u = sample_square(12, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
    p = glued.extract_nodal_partition(mesh, u)
    assert p.k == 1 and len(p.segments) == 0


def test_extract_rejects_fat_zero_set():
    # a field vanishing identically on half the cells has no usable sign
    # structure there: more than 5% of the averages sit below tolerance
    mesh, u = sample_square(15, lambda x, y: np.maximum(x - 0.5, 0.0) * np.sin(np.pi * y))
    with pytest.raises(ValueError):
        glued.extract_nodal_partition(mesh, u)


def test_courant_bound_on_extracted_count():
    mesh = rect_mesh(np.pi, np.pi / np.sqrt(2), 30, 20)
    pencil = fem.assemble_dirichlet(mesh, range(mesh.num_cells))
    pairs = fem.eigensolve(pencil, ("lowest", 6))
    for idx, pair in enumerate(pairs, start=1):
        full = np.zeros(mesh.num_nodes)
        full[pencil.free_nodes] = pair.vector
        p = glued.extract_nodal_partition(mesh, full)
        assert p.k <= idx


# ---------------------------------------------------------------- pair compatibility

def test_spcc_two_domain_square_mode():
    mesh, u = sample_square(20, lambda x, y: np.sin(2 * np.pi * x) * np.sin(np.pi * y))
    p = glued.extract_nodal_partition(mesh, u)
    rep = glued.check_spcc(mesh, p)
    assert rep.is_chi_nodal
    assert rep.label == 2 and rep.defect == 0 and rep.k == 2
    assert rep.normal_match_residual < 1e-10
    assert rep.phi_star_residual < 1e-10


def test_spcc_fails_for_unequal_strips():
    mesh = rect_mesh(3.0, 1.0, 18, 6)
    cent = mesh.nodes[mesh.triangles].mean(axis=1)
    p = pt.partition_from_labels(mesh, (cent[:, 0] > 1.0).astype(int))
    rep = glued.check_spcc(mesh, p)
    assert not rep.is_chi_nodal
    assert "equipartition" in rep.messages[0]


def test_spcc_defects_match_closed_form(rect_cases_coarse):
    expected = {2: (2, 0), 3: (2, 1), 4: (3, 1), 5: (4, 1), 6: (6, 0)}
    for idx, (mesh, p, lam) in rect_cases_coarse.items():
        rep = glued.check_spcc(mesh, p)
        k_exp, delta_exp = expected[idx]
        assert rep.is_chi_nodal
        assert (p.k, rep.defect) == (k_exp, delta_exp)
        assert rep.multiplicity == 1


def test_phi_star_is_eigenvector_for_all_sigma():
    mesh, p, _ = rect_case(5)
    w = pt.maximal_cut_weights(p, mesh)
    ground = glued.compute_ground_data(mesh, p)
    space = glued.build_glued_space(mesh, p, w)
    phi = glued.phi_star_vector(space, ground)
    assert np.abs(phi[space.gamma_index()]).max() == 0.0
    lam = ground.lambda_star
    for sigma in (0.0, 2.0, 50.0):
        pencil = space.pencil(sigma)
        res = np.linalg.norm(pencil.K @ phi - lam * (pencil.M @ phi))
        assert res <= 1e-9 * np.linalg.norm(pencil.K @ phi)
