"""Eigenvalue branches of the Robin family and crossing counts.

The glued operator family adds ``sigma`` times the interface mass to the
stiffness form.  The glued eigenfunction vanishes on the interface dofs, so
it is an eigenvector of the whole family; the *reduced* spectrum removes its
branch.  By form monotonicity every sorted reduced eigenvalue is a
non-decreasing function of sigma, so sorted tracking is exact for counting:
the number of branches that start below the ground energy and end above it
equals the number of negative eigenvalues of the Dirichlet-to-Neumann
operator (a branch passes the energy at ``sigma`` exactly when ``-sigma`` is
a DtN eigenvalue).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .glued import GluedSpace

__all__ = ["FlowBranchSet", "reduced_spectrum", "trace_branches", "crossing_count",
           "locate_crossing", "robin_duality_check"]

# Residual gate for deflation: phi must be this good an eigenvector.
PHI_RESIDUAL_RTOL = 1e-7


@dataclass
class FlowBranchSet:
    sigma_grid: np.ndarray       # increasing, starting at 0 (inf kept separate)
    branches: np.ndarray         # (n_branches, n_sigma)
    inf_values: np.ndarray       # reduced Dirichlet endpoint values
    lambda_star: float
    band: float                  # half-width identifying lambda_star
    space: GluedSpace = field(repr=False, default=None)
    phi: np.ndarray = field(repr=False, default=None)

    @property
    def n_branches(self) -> int:
        return self.branches.shape[0]

    def monotonicity_violation(self) -> float:
        """Largest decrease along any branch (0 for perfectly monotone)."""
        if self.branches.shape[1] < 2:
            return 0.0
        drops = self.branches[:, :-1] - self.branches[:, 1:]
        return float(max(0.0, drops.max()))

    def below_at_zero(self) -> int:
        return int(np.sum(self.branches[:, 0] < self.lambda_star - self.band))


def _phi_check(pencil, phi: np.ndarray, lam: float):
    num = np.linalg.norm(pencil.K @ phi - lam * (pencil.M @ phi))
    den = max(np.linalg.norm(pencil.K @ phi), 1e-300)
    if num / den > PHI_RESIDUAL_RTOL:
        raise ValueError(
            f"deflation vector is not an eigenvector of the sigma-pencil "
            f"(relative residual {num / den:.2e})")


def reduced_spectrum(space: GluedSpace, sigma: float, nev: int,
                     phi: np.ndarray, band: float) -> np.ndarray:
    """Lowest eigenvalues of the sigma-pencil restricted off the phi branch.

    ``phi`` must be an (exact up to tolerance) eigenvector of the pencil;
    its eigenvalue copy is removed from the cluster it belongs to.
    """
    pencil = space.pencil(sigma)
    if sigma == math.inf:
        idx = space.interior_index()
        phi_r = phi[idx]
        lam_phi = float(phi_r @ (pencil.K @ phi_r)) / float(phi_r @ (pencil.M @ phi_r))
        _phi_check(pencil, phi_r, lam_phi)
    else:
        lam_phi = float(phi @ (pencil.K @ phi)) / float(phi @ (pencil.M @ phi))
        _phi_check(pencil, phi, lam_phi)
    pairs = fem.eigensolve((pencil.K, pencil.M), ("lowest", min(nev + 1, pencil.K.shape[0])))
    vals = np.array([p.value for p in pairs])
    in_cluster = np.where(np.abs(vals - lam_phi) <= band)[0]
    if in_cluster.size:
        vals = np.delete(vals, in_cluster[0])
    elif vals.size and vals.max() >= lam_phi:
        raise ValueError("phi's eigenvalue not found in the solver window")
    return vals[:nev]


def trace_branches(space: GluedSpace, phi: np.ndarray, lam_star: float, band: float,
                   nev: int, sigma_max: float, grid_n: int = 25,
                   max_refine: int = 40) -> FlowBranchSet:
    """Sample the reduced spectrum over a geometric sigma grid.

    Branches are matched by sorted position (exact for monotone branches).
    Where consecutive samples jump by more than a quarter of the energy
    scale, midpoints are inserted until the sampling resolves the branch
    shapes or the refinement budget is exhausted.
    """
    if sigma_max <= 0:
        raise ValueError("sigma_max must be positive")
    grid = [0.0] + list(np.geomspace(sigma_max * 1e-3, sigma_max, grid_n - 1))
    cache = {}

    def at(s):
        if s not in cache:
            cache[s] = reduced_spectrum(space, s, nev, phi, band)
        return cache[s]

    for s in grid:
        at(s)
    step_tol = 0.25 * (1.0 + abs(lam_star))
    budget = max_refine
    while budget > 0:
        grid = sorted(cache)
        inserted = False
        for lo, hi in zip(grid, grid[1:]):
            if np.max(np.abs(at(hi) - at(lo))) > step_tol and budget > 0:
                mid = 0.5 * (lo + hi)
                if mid not in cache:
                    at(mid)
                    inserted = True
                    budget -= 1
        if not inserted:
            break

    grid = np.array(sorted(cache))
    branches = np.column_stack([cache[s] for s in grid])
    inf_vals = reduced_spectrum(space, math.inf, nev, phi, band)
    return FlowBranchSet(grid, branches, inf_vals, lam_star, band, space, phi)


def crossing_count(flow: FlowBranchSet, lam_star: float = None) -> dict:
    """Branches climbing past the ground energy, with crossing locations.

    A branch crosses when it starts below ``lam - band`` and ends above
    ``lam + band``; branches still inside the band at the last sample are
    flagged inconclusive (the grid must then be extended).
    """
    lam = flow.lambda_star if lam_star is None else lam_star
    band = flow.band
    start = flow.branches[:, 0]
    end = flow.branches[:, -1]
    crossing = np.where((start < lam - band) & (end > lam + band))[0]
    straddling = np.where((start < lam - band) & (np.abs(end - lam) <= band))[0]
    sigmas = [locate_crossing(flow, int(m)) for m in crossing]
    return {
        "count": int(crossing.size),
        "branches": [int(m) for m in crossing],
        "sigmas": sigmas,
        "inconclusive": int(straddling.size),
    }


def locate_crossing(flow: FlowBranchSet, m: int, sigma_tol: float = 1e-8) -> float:
    """Bisection for the sigma where branch ``m`` meets the ground energy."""
    lam = flow.lambda_star
    vals = flow.branches[m]
    above = np.where(vals > lam)[0]
    if above.size == 0 or above[0] == 0:
        raise ValueError(f"branch {m} does not bracket the energy on the grid")
    hi = float(flow.sigma_grid[above[0]])
    lo = float(flow.sigma_grid[above[0] - 1])
    nev = flow.n_branches

    def gamma(s):
        return reduced_spectrum(flow.space, s, nev, flow.phi, flow.band)[m]

    while hi - lo > sigma_tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if gamma(mid) > lam:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def robin_duality_check(flow: FlowBranchSet, dtn_eigenvalues: np.ndarray,
                        tol_kernel: float, match_rtol: float = 1e-5) -> dict:
    """For each negative DtN eigenvalue ``-sigma_c``, the reduced pencil at
    ``sigma_c`` must contain the ground energy, with matching multiplicity."""
    lam = flow.lambda_star
    negs = np.sort(dtn_eigenvalues[dtn_eigenvalues < -tol_kernel])
    checks = []
    ok = True
    for nu in negs:
        sigma_c = float(-nu)
        vals = reduced_spectrum(flow.space, sigma_c, flow.n_branches, flow.phi, flow.band)
        dist = float(np.min(np.abs(vals - lam))) if vals.size else math.inf
        tol = match_rtol * (1.0 + abs(lam))
        mult_dn = int(np.sum(np.abs(dtn_eigenvalues - nu) <= tol_kernel))
        mult_pencil = int(np.sum(np.abs(vals - lam) <= max(flow.band, tol)))
        good = dist <= tol and mult_pencil >= mult_dn
        ok = ok and good
        checks.append({"sigma_c": sigma_c, "distance": dist,
                       "dn_multiplicity": mult_dn, "pencil_multiplicity": mult_pencil,
                       "ok": good})
    return {"ok": ok, "checks": checks}
