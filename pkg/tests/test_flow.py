"""Robin eigenvalue flow: branches, crossings, duality with the DtN operator."""

import math

import numpy as np
import pytest

from nodaldtn import dtn, fem, flow, glued
from nodaldtn import partition as pt

from conftest import circle_fem_case, rect_case


def flow_inputs(mesh, p, w, nev_extra=2):
    ground = glued.compute_ground_data(mesh, p)
    space = glued.build_glued_space(mesh, p, w)
    rep = glued.check_spcc(mesh, p, w)
    op = dtn.assemble_dtn(mesh, p, w, ground=ground, space=space)
    lam = ground.lambda_star
    phi = glued.phi_star_vector(space, ground)
    band = glued.lambda_band(space.K, space.M, phi, lam)
    scale = float(np.abs(op.eigenvalues).max()) if op.eigenvalues.size else 0.0
    sigma_max = 10.0 * max(scale, 0.1 * (1.0 + abs(lam)))
    return ground, space, rep, op, lam, phi, band, sigma_max


def test_reduced_spectrum_deflates_one_copy():
    mesh, p, w = circle_fem_case(3, 60)
    ground, space, rep, op, lam, phi, band, _ = flow_inputs(mesh, p, w)
    # full pencil at sigma=0 has lambda* twice; the reduced one has it once
    full = [e.value for e in fem.eigensolve((space.K, space.M), ("lowest", 4))]
    assert np.sum(np.abs(np.array(full) - lam) <= band) == 2
    red = flow.reduced_spectrum(space, 0.0, 3, phi, band)
    assert np.sum(np.abs(red - lam) <= band) == 1
    # at sigma = inf the reduced multiplicity is k - 1
    red_inf = flow.reduced_spectrum(space, math.inf, 3, phi, band)
    assert np.sum(np.abs(red_inf - lam) <= band) == 2


def test_deflating_non_eigenvector_fails():
    mesh, p, w = circle_fem_case(3, 60)
    ground, space, rep, op, lam, phi, band, _ = flow_inputs(mesh, p, w)
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        flow.reduced_spectrum(space, 0.0, 3, rng.standard_normal(space.ndof), band)


def test_branches_start_at_reduced_spectrum_and_increase():
    mesh, p, _ = rect_case(5)
    w = pt.maximal_cut_weights(p, mesh)
    ground, space, rep, op, lam, phi, band, sigma_max = flow_inputs(mesh, p, w)
    fset = flow.trace_branches(space, phi, lam, band, nev=rep.label + 2,
                               sigma_max=sigma_max, grid_n=12)
    red0 = flow.reduced_spectrum(space, 0.0, rep.label + 2, phi, band)
    assert np.allclose(fset.branches[:, 0], red0)
    assert fset.monotonicity_violation() <= 1e-8
    assert fset.below_at_zero() == rep.label - 1
    # the reduced Dirichlet endpoint carries lambda* with multiplicity k - 1
    assert np.sum(np.abs(fset.inf_values - lam) <= max(band, 1e-8 * (1 + lam))) == p.k - 1


def test_crossings_match_morse_and_duality(rect_cases_coarse):
    for idx in (3, 6):
        mesh, p, _ = rect_cases_coarse[idx]
        w = pt.maximal_cut_weights(p, mesh)
        ground, space, rep, op, lam, phi, band, sigma_max = flow_inputs(mesh, p, w)
        counts = dtn.index_and_kernel(op)
        fset = flow.trace_branches(space, phi, lam, band, nev=rep.label + 2,
                                   sigma_max=sigma_max, grid_n=12)
        cc = flow.crossing_count(fset)
        assert cc["count"] == counts["morse"] == rep.defect
        assert cc["inconclusive"] == 0
        dual = flow.robin_duality_check(fset, op.eigenvalues, op.tol_kernel)
        assert dual["ok"]
        for sigma_c, nu in zip(cc["sigmas"],
                               sorted(op.eigenvalues[op.eigenvalues < -op.tol_kernel])):
            assert abs(sigma_c + nu) <= 1e-5 * (1.0 + abs(nu))


def test_circle_flow_has_no_crossings():
    mesh, p, w = circle_fem_case(3, 60)
    ground, space, rep, op, lam, phi, band, sigma_max = flow_inputs(mesh, p, w)
    fset = flow.trace_branches(space, phi, lam, band, nev=rep.label + 1,
                               sigma_max=sigma_max, grid_n=10)
    cc = flow.crossing_count(fset)
    assert cc["count"] == 0 and cc["inconclusive"] == 0
    assert fset.below_at_zero() == rep.label - 1 == 2
