"""The sign-weighted Laplacian on a partition, and pair-compatibility checks.

Functions in the operator's form domain live in H^1 of each subdomain,
vanish on the outer boundary, and satisfy the sign-matching condition
``chi_i u_i = chi_j u_j`` along every interface segment.  Discretely this is
realized by *gluing*: every interface node carries one degree of freedom,
and each adjacent subdomain reads its own trace off that dof through a +-1
multiplier table.  The tables are derived purely from the per-segment sign
products (the induced cut), so edge-equivalent weight choices assemble
bit-identical matrices.

At nodes where three or more subdomains meet, the side relations around the
node may be inconsistent (this happens exactly at odd-valence junctions for
valid weights); the glued value is then forced to zero and the node joins
the Dirichlet set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import fem
from .fem import Region, SparsePencil
from .mesh import CurveMesh, Mesh
from .partition import (
    Partition, WeightAssignment, cut_from_weights, maximal_cut_weights,
    partition_from_labels, segment_product, validate_partition,
)

__all__ = [
    "GluedSpace", "GluedPencil", "GroundData", "ChiNodalReport",
    "build_glued_space", "assemble_weighted", "spectrum_weighted",
    "extract_nodal_partition", "check_spcc", "compute_ground_data",
    "align_cluster_representative",
    "phi_star_vector", "polish_partition", "lambda_band",
]

# Relative tolerance on subdomain ground energies for equipartition.
EQUI_RTOL = 1e-6
# Interface normal-derivative match: relative tolerance C_FLUX * h.
C_FLUX = 0.6
# Safety factor on the residual-based eigenvalue-distance bound when turning
# it into the half-width of the band identified with lambda*.
BAND_SAFETY = 50.0


def lambda_band(K, M, phi: np.ndarray, lam: float) -> float:
    """Half-width of the pencil-eigenvalue band identified with ``lam``.

    Adapts to the quality of the glued eigenfunction: exact on aligned
    structured meshes (band collapses to rounding level), O(h^2 lam) on
    generic meshes.
    """
    bound = fem.eig_distance_bound(K, M, phi, lam)
    return max(1e-9 * (1.0 + abs(lam)), BAND_SAFETY * bound)


@dataclass
class _NodeInfo:
    segments: list            # incident segment ids
    mult: Optional[dict]      # subdomain -> +-1 trace multiplier; None if inconsistent
    free: bool
    dof: int = -1
    end_count: int = 0        # number of segment ends meeting here (junction valence)


@dataclass
class GluedSpace:
    """Glued dof structure plus assembled stiffness/mass/interface-mass."""

    mesh: object
    partition: Partition
    weights: WeightAssignment
    regions: list
    node_info: dict
    ndof: int
    interior_dof_of: list      # per subdomain: dict local-interior-index -> dof
    gamma_dofs: np.ndarray     # glued dof index per free interface node (node order)
    gamma_nodes: np.ndarray
    restrictions: list         # per subdomain sparse (region nodes x ndof)
    K: sp.csr_array
    M: sp.csr_array
    B: sp.csr_array            # interface mass in glued dofs (the Robin term)

    @property
    def k(self) -> int:
        return self.partition.k

    def pencil(self, sigma: float) -> "GluedPencil":
        if sigma == math.inf:
            idx = self.interior_index()
            K = sp.csr_array(self.K[np.ix_(idx, idx)])
            M = sp.csr_array(self.M[np.ix_(idx, idx)])
            return GluedPencil(K, M, self, math.inf)
        if sigma < 0:
            raise ValueError("sigma must be nonnegative")
        K = self.K if sigma == 0.0 else sp.csr_array(self.K + sigma * self.B)
        return GluedPencil(K, self.M, self, float(sigma))

    def interior_index(self) -> np.ndarray:
        n_gamma = self.gamma_dofs.size
        return np.arange(self.ndof - n_gamma)

    def gamma_index(self) -> np.ndarray:
        n_gamma = self.gamma_dofs.size
        return np.arange(self.ndof - n_gamma, self.ndof)

    def junction_valences(self) -> dict:
        return {int(n): info.end_count for n, info in self.node_info.items()
                if info.end_count >= 3}


@dataclass
class GluedPencil:
    K: sp.csr_array
    M: sp.csr_array
    space: GluedSpace
    sigma: float


def _collect_segment_nodes(seg) -> list:
    nodes = list(seg.nodes)
    if seg.is_closed:
        nodes = nodes[:-1]
    return nodes


def build_glued_space(mesh, partition: Partition, weights: WeightAssignment) -> GluedSpace:
    validate_partition(mesh, partition)
    cut = cut_from_weights(partition, weights)
    if cut.witness is None:
        raise ValueError("weights are not valid (induced cut admits no orientations)")

    regions = [fem.assemble_region(mesh, sub) for sub in partition.subdomains]

    # node incidence and side-relation tables
    info: dict = {}
    prod = {s.id: segment_product(partition, weights, s.id) for s in partition.segments}
    for seg in partition.segments:
        for n in _collect_segment_nodes(seg):
            info.setdefault(int(n), _NodeInfo([], None, False)).segments.append(seg.id)
        for e in seg.endpoints():
            info.setdefault(int(e), _NodeInfo([], None, False))
    for seg in partition.segments:
        for e in seg.endpoints():
            info[int(e)].end_count += 1

    outer = mesh.boundary_nodes
    for n, ni in sorted(info.items()):
        # propagate trace multipliers around the node over GF(2)-style relations
        rel = [(partition.segments[a].left, partition.segments[a].right, prod[a])
               for a in ni.segments]
        adjacent = sorted({i for r in rel for i in r[:2]})
        mult = {adjacent[0]: 1}
        changed = True
        consistent = True
        while changed and consistent:
            changed = False
            for (i, j, pi) in rel:
                if i in mult and j in mult:
                    if mult[j] != pi * mult[i]:
                        consistent = False
                        break
                elif i in mult:
                    mult[j] = pi * mult[i]
                    changed = True
                elif j in mult:
                    mult[i] = pi * mult[j]
                    changed = True
        ni.mult = mult if consistent else None
        ni.free = consistent and (n not in outer)

    free_nodes = np.array([n for n in sorted(info) if info[n].free], dtype=np.int64)

    # dof layout: subdomain interiors first (subdomain-major), then interface dofs
    interior_dof_of = []
    ndof = 0
    for reg in regions:
        d = {}
        for l in reg.interior_local:
            d[int(l)] = ndof
            ndof += 1
        interior_dof_of.append(d)
    gamma_dofs = np.arange(ndof, ndof + free_nodes.size)
    for n, dof in zip(free_nodes, gamma_dofs):
        info[int(n)].dof = int(dof)
    ndof += free_nodes.size

    restrictions = []
    for i, reg in enumerate(regions):
        rows, cols, vals = [], [], []
        for l in reg.interior_local:
            rows.append(int(l))
            cols.append(interior_dof_of[i][int(l)])
            vals.append(1.0)
        for l in reg.boundary_local:
            g = int(reg.nodes[l])
            ni = info.get(g)
            if ni is None:
                if g not in outer:
                    raise ValueError(f"region boundary node {g} is neither outer nor interface")
                continue
            if not ni.free:
                continue
            rows.append(int(l))
            cols.append(ni.dof)
            vals.append(float(ni.mult[i]))
        R = sp.coo_array((vals, (rows, cols)), shape=(reg.num_nodes, ndof)).tocsr()
        restrictions.append(R)

    K = sp.csr_array((ndof, ndof))
    M = sp.csr_array((ndof, ndof))
    for reg, R in zip(regions, restrictions):
        K = K + R.T @ reg.K_full @ R
        M = M + R.T @ reg.M_full @ R

    # Robin interface mass: per segment P1 mass with side-multiplier products
    rows, cols, vals = [], [], []

    def side_mult(node, seg):
        return info[int(node)].mult[seg.left]

    for seg in partition.segments:
        if seg.is_point:
            n = int(seg.nodes[0])
            if info[n].free:
                rows.append(info[n].dof)
                cols.append(info[n].dof)
                vals.append(1.0)
            continue
        for u, v in zip(seg.nodes, seg.nodes[1:]):
            ell = float(np.linalg.norm(mesh.nodes[u] - mesh.nodes[v]))
            for (x, y, wgt) in ((u, u, ell / 3), (v, v, ell / 3), (u, v, ell / 6), (v, u, ell / 6)):
                ix, iy = info[int(x)], info[int(y)]
                if not (ix.free and iy.free):
                    continue
                rows.append(ix.dof)
                cols.append(iy.dof)
                vals.append(wgt * side_mult(x, seg) * side_mult(y, seg))
    B = sp.coo_array((vals, (rows, cols)), shape=(ndof, ndof)).tocsr()

    return GluedSpace(mesh, partition, weights, regions, info, ndof, interior_dof_of,
                      gamma_dofs, free_nodes, restrictions,
                      sp.csr_array(K), sp.csr_array(M), sp.csr_array(B))


def assemble_weighted(mesh, partition: Partition, weights: WeightAssignment,
                      sigma: float = 0.0) -> GluedPencil:
    """Glued pencil of the weighted Laplacian, optionally with a Robin term.

    ``sigma = 0`` gives the plain weighted Laplacian, finite sigma adds
    ``sigma *`` (interface mass), and ``sigma = inf`` eliminates the
    interface dofs entirely (the direct sum of subdomain Dirichlet pencils).
    """
    return build_glued_space(mesh, partition, weights).pencil(sigma)


def spectrum_weighted(pencil: GluedPencil, window) -> list:
    return fem.eigensolve((pencil.K, pencil.M), window)


# ----------------------------------------------------------------------------
# nodal partition extraction
# ----------------------------------------------------------------------------

# Cell averages below AMB_C * h^2 (relative) sit inside the discretization
# error of an eigenvector near its nodal set; their signs are not trusted.
AMB_C = 5.0


def align_cluster_representative(vectors, zero_rtol: float = 1e-9) -> np.ndarray:
    """Pick the rotation within a degenerate eigenspace with the most exact
    nodal zeros.

    A solver returns an arbitrary basis of a multiple eigenvalue's
    eigenspace; for a separable geometry the useful representatives are the
    ones whose nodal set is mesh-aligned, i.e. that vanish exactly on many
    nodes.  Candidate rotations are generated analytically by annihilating
    the pair combination at one node at a time.
    """
    vs = [np.asarray(v, dtype=float) for v in vectors]
    vs = [v / np.linalg.norm(v) for v in vs]
    if len(vs) == 1:
        return vs[0]

    def zero_count(v):
        return int(np.sum(np.abs(v) <= zero_rtol * np.abs(v).max()))

    def best_pair_rotation(v1, v2):
        n = v1.size
        sample = np.unique(np.linspace(0, n - 1, min(n, 400)).astype(int))
        best_v, best_z = v1, zero_count(v1)
        for cand in [v2]:
            z = zero_count(cand)
            if z > best_z:
                best_v, best_z = cand, z
        for idx in sample:
            a, b = v1[idx], v2[idx]
            if abs(a) < 1e-14 and abs(b) < 1e-14:
                continue
            th = math.atan2(-a, b)
            v = math.cos(th) * v1 + math.sin(th) * v2
            nv = np.linalg.norm(v)
            if nv < 1e-12:
                continue
            v = v / nv
            z = zero_count(v)
            if z > best_z:
                best_v, best_z = v, z
        return best_v

    best = vs[0]
    for j in range(1, len(vs)):
        best = best_pair_rotation(best, vs[j])
    return fem.canonical_sign(best)


def _cell_adjacency(mesh):
    adj = [[] for _ in range(mesh.num_cells)]
    if isinstance(mesh, CurveMesh):
        for c in range(mesh.num_cells):
            if mesh.closed:
                adj[c] = [(c - 1) % mesh.num_cells, (c + 1) % mesh.num_cells]
            else:
                adj[c] = [x for x in (c - 1, c + 1) if 0 <= x < mesh.num_cells]
    else:
        for ts in mesh.edges.values():
            if len(ts) == 2:
                adj[ts[0]].append(ts[1])
                adj[ts[1]].append(ts[0])
    return adj


def extract_nodal_partition(mesh, values: np.ndarray, zero_rtol: float = 1e-8,
                            max_zero_frac: float = 0.05, polish: bool = True) -> Partition:
    """Partition of the mesh by the sign structure of a nodal field.

    Cells are labeled by the sign of their nodal average.  Averages below
    the eigenvector-error scale ``AMB_C * h^2`` (relative) are treated as
    unreliable: components are seeded from the trusted cells only and the
    ambiguous cells are attached by sign preference.  With ``polish`` the
    interface is then locally snapped onto the equipartition configuration
    (see :func:`polish_partition`).

    Fails when more than ``max_zero_frac`` of the cells have near-zero
    average, which signals a nodal line that is not mesh-aligned.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[0] != mesh.num_nodes:
        raise ValueError("need one value per mesh node")
    if isinstance(mesh, CurveMesh):
        cells = np.array([mesh.cell_nodes(c) for c in range(mesh.num_cells)])
    else:
        cells = mesh.triangles
    avg = values[cells].mean(axis=1)
    scale = np.abs(avg).max()
    if scale == 0:
        raise ValueError("zero field has no nodal partition")
    near_zero = np.abs(avg) <= zero_rtol * scale
    if near_zero.mean() > max_zero_frac:
        raise ValueError(
            f"{near_zero.mean():.1%} of cells sit on the nodal set; "
            "nodal line is not aligned with the mesh")

    h = mesh.max_edge_length()
    amb_tol = max(AMB_C * h * h, 10.0 * zero_rtol) * scale
    zero_tol = zero_rtol * scale
    trusted = np.abs(avg) > amb_tol
    if not trusted.any():
        raise ValueError("no cell average rises above the ambiguity tolerance")
    signs = (avg > 0).astype(int)
    adj = _cell_adjacency(mesh)

    def shared_len(c, nb):
        if isinstance(mesh, CurveMesh):
            return 1.0
        common = set(map(int, mesh.triangles[c])) & set(map(int, mesh.triangles[nb]))
        u, v = sorted(common)
        return float(np.linalg.norm(mesh.nodes[u] - mesh.nodes[v]))

    # seed components from trusted cells
    comp = np.full(mesh.num_cells, -1, dtype=int)
    comp_sign = []
    for c in range(mesh.num_cells):
        if not trusted[c] or comp[c] >= 0:
            continue
        ci = len(comp_sign)
        comp_sign.append(signs[c])
        comp[c] = ci
        stack = [c]
        while stack:
            x = stack.pop()
            for nb in adj[x]:
                if trusted[nb] and comp[nb] < 0 and signs[nb] == signs[c]:
                    comp[nb] = ci
                    stack.append(nb)

    def attach(c, pool):
        weight = {}
        for nb in adj[c]:
            ci = int(comp[nb])
            if ci in pool:
                weight[ci] = weight.get(ci, 0.0) + shared_len(c, nb)
        best = max(weight.values())
        comp[c] = min(ci for ci, wl in weight.items() if wl >= best - 1e-12 * best)

    # phase 1: grow sign-matching waves, so a wrong-signed front can never
    # steal cells whose own side has not reached them yet
    while True:
        progress = False
        for c in range(mesh.num_cells):
            if comp[c] >= 0 or abs(avg[c]) <= zero_tol:
                continue
            pool = {int(comp[nb]) for nb in adj[c]
                    if comp[nb] >= 0 and comp_sign[int(comp[nb])] == signs[c]}
            if pool:
                attach(c, pool)
                progress = True
        if not progress:
            break
    # phase 2: remaining cells (true zeros, or enclaves with no matching
    # neighbor) go to the side they share the most interface with;
    # re-run phase 1 after each batch in case new sign contacts appeared
    while np.any(comp < 0):
        attached_any = False
        for c in np.where(comp < 0)[0]:
            pool = {int(comp[nb]) for nb in adj[c] if comp[nb] >= 0}
            if pool:
                attach(c, pool)
                attached_any = True
                break
        if not attached_any:
            raise ValueError("ambiguous cells are not connected to any trusted component")
        while True:
            progress = False
            for c in range(mesh.num_cells):
                if comp[c] >= 0 or abs(avg[c]) <= zero_tol:
                    continue
                pool = {int(comp[nb]) for nb in adj[c]
                        if comp[nb] >= 0 and comp_sign[int(comp[nb])] == signs[c]}
                if pool:
                    attach(c, pool)
                    progress = True
            if not progress:
                break

    p = partition_from_labels(mesh, comp)
    if polish:
        p = polish_partition(mesh, p, avg, amb_tol)
    return p


def polish_partition(mesh, p: Partition, cell_weight: np.ndarray, amb_tol: float,
                     max_sweeps: int = 8) -> Partition:
    """Snap ambiguous interface cells onto the equipartition configuration.

    Trial moves reassign an interface cell with ``|average| <= amb_tol`` to
    the neighboring subdomain and are accepted when they strictly reduce the
    spread of the subdomain ground energies.  The mesh-aligned nodal
    partition is a strict local minimizer (spread at rounding level), so a
    few sweeps suffice; partitions that are far from equipartition are
    returned unchanged by the energy test.
    """
    adj = _cell_adjacency(mesh)

    def energies_of(subs):
        vals = []
        for sub in subs:
            pencil = fem.assemble_dirichlet(mesh, sub)
            if pencil.n == 0:
                return None
            vals.append(fem.eigensolve(pencil, ("lowest", 1))[0].value)
        return np.array(vals)

    subs = [set(s) for s in p.subdomains]
    comp_of = {}
    for i, s in enumerate(subs):
        for c in s:
            comp_of[c] = i
    energies = energies_of(subs)
    if energies is None:
        return p
    spread = float(np.ptp(energies))
    if spread <= 1e-11 * (1.0 + float(np.abs(energies).max())):
        return p  # already an equipartition at rounding level

    for _ in range(max_sweeps):
        improved = False
        candidates = sorted(
            c for c in range(mesh.num_cells)
            if abs(cell_weight[c]) <= amb_tol
            and any(comp_of[nb] != comp_of[c] for nb in adj[c]))
        for c in candidates:
            src = comp_of[c]
            if len(subs[src]) <= 1:
                continue
            targets = sorted({comp_of[nb] for nb in adj[c] if comp_of[nb] != src})
            for dst in targets:
                trial_src = subs[src] - {c}
                if not _region_is_connected(mesh, trial_src, adj):
                    continue
                trial_dst = subs[dst] | {c}
                new_vals = energies.copy()
                ps = fem.assemble_dirichlet(mesh, sorted(trial_src))
                pd = fem.assemble_dirichlet(mesh, sorted(trial_dst))
                if ps.n == 0 or pd.n == 0:
                    continue
                new_vals[src] = fem.eigensolve(ps, ("lowest", 1))[0].value
                new_vals[dst] = fem.eigensolve(pd, ("lowest", 1))[0].value
                new_spread = float(np.ptp(new_vals))
                if new_spread < spread * (1.0 - 1e-12):
                    subs[src] = trial_src
                    subs[dst] = trial_dst
                    comp_of[c] = dst
                    energies = new_vals
                    spread = new_spread
                    improved = True
                    break
        if not improved:
            break

    labels = np.empty(mesh.num_cells, dtype=int)
    for i, s in enumerate(subs):
        for c in s:
            labels[c] = i
    return partition_from_labels(mesh, labels)


def _region_is_connected(mesh, cellset, adj) -> bool:
    cells = sorted(cellset)
    if not cells:
        return False
    seen = {cells[0]}
    stack = [cells[0]]
    while stack:
        x = stack.pop()
        for nb in adj[x]:
            if nb in cellset and nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == len(cells)


# ----------------------------------------------------------------------------
# ground states, pair compatibility, defect
# ----------------------------------------------------------------------------

@dataclass
class GroundData:
    """Per-subdomain Dirichlet ground states and their interface fluxes."""

    pencils: list
    energies: np.ndarray
    vectors: list              # free-dof coefficients, positive mean, M-normalized
    fluxes: list               # consistent flux on region boundary nodes
    pointwise: list            # recovered pointwise normal derivative
    lambda_star: float


@dataclass
class ChiNodalReport:
    is_chi_nodal: bool
    lambda_star: float
    energies: np.ndarray
    ground_states: list
    normal_match_residual: Optional[float]
    label: Optional[int] = None
    defect: Optional[int] = None
    multiplicity: Optional[int] = None
    k: int = 0
    junction_valences: dict = field(default_factory=dict)
    phi_star_residual: Optional[float] = None
    messages: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "is_chi_nodal": bool(self.is_chi_nodal),
            "lambda_star": float(self.lambda_star),
            "energies": [float(e) for e in self.energies],
            "normal_match_residual": None if self.normal_match_residual is None
            else float(self.normal_match_residual),
            "label": self.label,
            "defect": self.defect,
            "multiplicity": self.multiplicity,
            "k": self.k,
            "junction_valences": {str(k): v for k, v in self.junction_valences.items()},
            "phi_star_residual": None if self.phi_star_residual is None
            else float(self.phi_star_residual),
            "messages": list(self.messages),
        }


def compute_ground_data(mesh, partition: Partition) -> GroundData:
    pencils, energies, vectors, fluxes, pointwise = [], [], [], [], []
    for sub in partition.subdomains:
        pencil = fem.assemble_dirichlet(mesh, sub)
        if pencil.n == 0:
            raise fem.FemError("subdomain has no interior dofs; refine the mesh")
        pair = fem.eigensolve(pencil, ("lowest", 1))[0]
        vec = pair.vector if pair.vector.sum() >= 0 else -pair.vector
        r = fem.variational_normal_derivative(pencil, vec, pair.value)
        q = fem.recover_pointwise_normal(pencil.region, r)
        pencils.append(pencil)
        energies.append(pair.value)
        vectors.append(vec)
        fluxes.append(r)
        pointwise.append(q)
    energies = np.array(energies)
    return GroundData(pencils, energies, vectors, fluxes, pointwise,
                      float(energies.mean()))


def _segment_flux_mismatch(partition: Partition, ground: GroundData) -> float:
    """Worst relative mismatch of the two one-sided normal derivatives."""
    regions = [p.region for p in ground.pencils]
    bpos = []
    for reg in regions:
        bpos.append({int(reg.nodes[l]): i for i, l in enumerate(reg.boundary_local)})
    scale = max(float(np.abs(q).max()) for q in ground.pointwise)
    worst = 0.0
    for seg in partition.segments:
        qi = ground.pointwise[seg.left]
        qj = ground.pointwise[seg.right]
        for n in _collect_segment_nodes(seg):
            d = abs(qi[bpos[seg.left][int(n)]] - qj[bpos[seg.right][int(n)]])
            worst = max(worst, d / scale)
    return worst


def phi_star_vector(space: GluedSpace, ground: GroundData) -> np.ndarray:
    """Glued eigenfunction whose nodal partition is the given one.

    Each subdomain gets its positive ground state times the orientation
    witness of the induced cut; interface dofs vanish.
    """
    cut = cut_from_weights(space.partition, space.weights)
    eta = cut.witness
    phi = np.zeros(space.ndof)
    for i, (reg, pencil) in enumerate(zip(space.regions, ground.pencils)):
        for pos, l in enumerate(reg.interior_local):
            phi[space.interior_dof_of[i][int(l)]] = eta[i] * ground.vectors[i][pos]
    nm = math.sqrt(phi @ (space.M @ phi))
    return phi / nm


def _pencil_residual(K, M, vec, lam) -> float:
    r = K @ vec - lam * (M @ vec)
    return float(np.linalg.norm(r) / max(np.linalg.norm(K @ vec), 1e-300))


def check_spcc(mesh, partition: Partition, weights: Optional[WeightAssignment] = None,
               equip_rtol: float = EQUI_RTOL, flux_rtol: Optional[float] = None) -> ChiNodalReport:
    """Decide the strong pair compatibility condition and compute the defect.

    Checks that all subdomain ground energies agree and that the one-sided
    normal derivatives of the positive ground states match along every
    segment.  On success, assembles the glued operator (with the supplied
    weights, or the all-cut choice) and counts its spectrum below the common
    energy to produce the minimal label, defect, and multiplicity.
    """
    ground = compute_ground_data(mesh, partition)
    lam = ground.lambda_star
    report = ChiNodalReport(False, lam, ground.energies, ground.vectors, None,
                            k=partition.k)
    spread = float(np.abs(ground.energies - lam).max() / (1.0 + abs(lam)))
    if spread > equip_rtol:
        report.messages.append(
            f"not an equipartition: ground energy spread {spread:.2e} > {equip_rtol:.0e}")
        return report

    h = mesh.max_edge_length()
    if flux_rtol is None:
        flux_rtol = C_FLUX * h
    mismatch = _segment_flux_mismatch(partition, ground) if partition.segments else 0.0
    report.normal_match_residual = mismatch
    if mismatch > flux_rtol:
        report.messages.append(
            f"normal derivatives mismatch across interface: {mismatch:.2e} > {flux_rtol:.2e}")
        return report

    if weights is None:
        weights = maximal_cut_weights(partition, mesh)
    space = build_glued_space(mesh, partition, weights)
    phi = phi_star_vector(space, ground)
    report.phi_star_residual = _pencil_residual(space.K, space.M, phi, lam)
    report.junction_valences = space.junction_valences()

    band = lambda_band(space.K, space.M, phi, lam)
    upto, vals = fem.count_below((space.K, space.M), lam + band)
    below = int(np.sum(vals < lam - band))
    mult = int(np.sum(np.abs(vals - lam) <= band))
    report.is_chi_nodal = True
    report.label = below + 1
    report.defect = report.label - partition.k
    report.multiplicity = mult
    return report
