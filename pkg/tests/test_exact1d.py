"""Closed-form circle/interval records and the anti-periodic spectrum."""

import math

import numpy as np
import pytest

from nodaldtn import exact1d


def test_anti_periodic_spectrum_values():
    spec = exact1d.anti_periodic_spectrum(3)
    assert [r["value"] for r in spec] == [0.25, 2.25, 6.25]
    assert all(r["multiplicity"] == 2 for r in spec)


def test_anti_periodic_boundary_conditions():
    for rec in exact1d.anti_periodic_spectrum(4):
        for f in rec["eigenfunctions"]:
            assert abs(f(0.0) + f(2 * math.pi)) < 1e-12
            t = 1e-6
            dl = (f(t) - f(0.0)) / t
            dr = (f(2 * math.pi) - f(2 * math.pi - t)) / t
            assert abs(dl + dr) < 1e-4


@pytest.mark.parametrize("k", [3, 5, 7])
def test_circle_reports(k):
    rep = exact1d.circle_report(k)
    assert rep.lambda_star == (k / 2.0) ** 2
    assert rep.label == k and rep.defect == 0
    assert rep.multiplicity == 2
    assert rep.dim_S == 1
    assert abs(rep.dn_matrix[0][0]) < 1e-12
    assert rep.morse == 0 and rep.kernel_dim == 1
    assert rep.identities["defect_equals_morse"]
    assert rep.identities["multiplicity_equals_kernel_plus_one"]


def test_circle_even_is_bipartite():
    rep = exact1d.circle_report(6)
    assert rep.bipartite
    assert rep.label == 6 and rep.defect == 0
    assert all(rep.identities.values())


@pytest.mark.parametrize("k", range(1, 7))
def test_interval_reports(k):
    rep = exact1d.interval_report(k, math.pi)
    assert abs(rep.lambda_star - k * k) < 1e-12
    assert rep.label == k and rep.defect == 0
    assert rep.multiplicity == 1
    assert rep.dim_S == 0 and rep.morse == 0 and rep.kernel_dim == 0
    assert all(rep.identities.values())


def test_interval_k2_and_k5_examples():
    rep2 = exact1d.interval_report(2, math.pi)
    assert abs(rep2.lambda_star - 4.0) < 1e-12 and rep2.multiplicity == 1
    rep5 = exact1d.interval_report(5, math.pi)
    assert abs(rep5.lambda_star - 25.0) < 1e-12 and rep5.label == 5


def test_unequal_interval_fails_compatibility():
    rep = exact1d.interval_report(2, points=[0.0, 1.0, math.pi])
    assert not rep.is_chi_nodal
    assert rep.messages


def test_exact_dtn_weight_choices_agree():
    d_hat = exact1d.exact_dtn_1d(exact1d.circle_partition(3, "alternating"))
    d_cut = exact1d.exact_dtn_1d(exact1d.circle_partition(3, "single_cut"))
    assert d_hat.matrix.shape == (1, 1) and d_cut.matrix.shape == (1, 1)
    assert abs(d_hat.matrix[0, 0]) < 1e-12
    assert np.allclose(np.linalg.eigvalsh(d_hat.matrix), np.linalg.eigvalsh(d_cut.matrix),
                       atol=1e-12)


def test_exact_dtn_rejects_wrong_energy():
    p = exact1d.circle_partition(3)
    with pytest.raises(ValueError):
        exact1d.exact_dtn_1d(p, lam=1.7)
    with pytest.raises(ValueError):
        exact1d.exact_dtn_1d(exact1d.interval_partition([0.0, 1.0, math.pi]))


def test_arc_bvp_compatibility():
    p = exact1d.circle_partition(3)
    A, B = exact1d.solve_arc_bvp(p, 0, 2.25, 0.7, -0.7)
    assert A == 0.7 and B == 0.0
    with pytest.raises(ValueError):
        exact1d.solve_arc_bvp(p, 0, 2.25, 0.7, 0.7)


def test_interval_partition_structure():
    p = exact1d.interval_partition([0.0, 1.0, 2.0, 3.0])
    assert p.k == 3
    assert p.cut_point_ids() == [1, 2]
    assert p.ends(0) == (None, 1)
    assert p.ends(2) == (2, None)
    circle = exact1d.circle_partition(4, "ones")
    assert circle.ends(3) == (3, 0)
