"""P1 finite elements on triangle and curve meshes.

Provides stiffness/mass assembly over cell subsets (regions), Dirichlet
elimination, a generalized symmetric eigensolver (dense for small pencils,
shift-invert ARPACK otherwise), boundary mass matrices, and variational
normal derivatives via consistent flux: for a discrete solution ``u`` of the
Helmholtz equation at energy ``lam``, the boundary functional

    r = (K_full - lam * M_full) u   restricted to boundary rows

represents the outward normal derivative weakly, and satisfies the discrete
Green identity ``r . g = u^T (K - lam M) w`` exactly for any ``w`` with
boundary trace ``g``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import CurveMesh, Mesh

__all__ = [
    "Region", "SparsePencil", "EigenPair", "assemble_region", "assemble_dirichlet",
    "eigensolve", "count_below", "cluster_eigenvalues", "boundary_mass",
    "variational_normal_derivative", "recover_pointwise_normal", "canonical_sign",
]

# Problems at or below this size are solved densely.
DENSE_CUTOFF = 900
# Relative residual bound every returned eigenpair must satisfy.
EIG_RESIDUAL_RTOL = 1e-9


class FemError(RuntimeError):
    pass


@dataclass
class EigenPair:
    value: float
    vector: np.ndarray


@dataclass
class Region:
    """Assembled P1 data over a subset of mesh cells.

    ``K_full``/``M_full`` are indexed by region-local node numbers and carry
    no boundary conditions; boundary handling is done by the callers.
    """

    mesh: object
    cells: np.ndarray
    nodes: np.ndarray              # global node ids, sorted ascending
    K_full: sp.csr_array
    M_full: sp.csr_array
    boundary_local: np.ndarray     # local indices of region-boundary nodes
    interior_local: np.ndarray
    _local: dict = field(repr=False, default_factory=dict)

    def local_index(self, global_node: int) -> int:
        return self._local[int(global_node)]

    @property
    def num_nodes(self) -> int:
        return self.nodes.size


@dataclass
class SparsePencil:
    """Stiffness/mass pair restricted to free dofs of a region."""

    K: sp.csr_array
    M: sp.csr_array
    free_nodes: np.ndarray         # global node id of each dof
    region: Region

    @property
    def n(self) -> int:
        return self.free_nodes.size

    @property
    def dof_map(self) -> dict:
        return {int(g): i for i, g in enumerate(self.free_nodes)}


def _tri_local_matrices(nodes, tris):
    """Vectorized P1 stiffness/lumped-mass element matrices for all triangles.

    The volume mass is lumped (area/3 per vertex).  On structured grids the
    resulting pencil has sampled separable eigenfunctions as exact discrete
    eigenvectors, which keeps mesh-aligned nodal lines exactly zero.
    """
    p0 = nodes[tris[:, 0]]
    p1 = nodes[tris[:, 1]]
    p2 = nodes[tris[:, 2]]
    d1 = p1 - p0
    d2 = p2 - p0
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    area = 0.5 * np.abs(det)
    # gradients of the three hat functions
    inv = np.empty((len(tris), 2, 2))
    inv[:, 0, 0] = d2[:, 1] / det
    inv[:, 0, 1] = -d2[:, 0] / det
    inv[:, 1, 0] = -d1[:, 1] / det
    inv[:, 1, 1] = d1[:, 0] / det
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    grads = np.einsum("vj,tjx->tvx", ref, inv)
    kloc = np.einsum("tax,tbx,t->tab", grads, grads, area)
    mloc = np.eye(3)[None, :, :] * (area / 3.0)[:, None, None]
    return kloc, mloc


def _assemble_pair(cell_nodes, kloc, mloc, nloc):
    nv = cell_nodes.shape[1]
    rows = np.repeat(cell_nodes, nv, axis=1).ravel()
    cols = np.tile(cell_nodes, (1, nv)).ravel()
    K = sp.coo_array((kloc.ravel(), (rows, cols)), shape=(nloc, nloc)).tocsr()
    M = sp.coo_array((mloc.ravel(), (rows, cols)), shape=(nloc, nloc)).tocsr()
    return K, M


def _region_connected(mesh, cells) -> bool:
    """Cells must form one facet-connected component."""
    cells = list(cells)
    if not cells:
        return False
    cellset = set(int(c) for c in cells)
    if isinstance(mesh, CurveMesh):
        adj = {c: [] for c in cellset}
        for c in cellset:
            for nb in ((c - 1) % mesh.num_cells, (c + 1) % mesh.num_cells) if mesh.closed \
                    else (c - 1, c + 1):
                if nb in cellset:
                    adj[c].append(nb)
    else:
        adj = {c: [] for c in cellset}
        for (u, v), ts in mesh.edges.items():
            inside = [t for t in ts if t in cellset]
            if len(inside) == 2:
                adj[inside[0]].append(inside[1])
                adj[inside[1]].append(inside[0])
    seen = {cells[0] if isinstance(cells[0], int) else int(cells[0])}
    stack = list(seen)
    while stack:
        c = stack.pop()
        for nb in adj[c]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == len(cellset)


def assemble_region(mesh, cells) -> Region:
    """Assemble unconstrained P1 stiffness and mass over the given cells."""
    cells = np.asarray(sorted(int(c) for c in cells), dtype=np.int64)
    if cells.size == 0:
        raise FemError("empty region")
    if not _region_connected(mesh, cells):
        raise FemError("region is not facet-connected")

    if isinstance(mesh, CurveMesh):
        cell_nodes = np.array([mesh.cell_nodes(c) for c in cells])
        lengths = np.array([mesh.cell_length(c) for c in cells])
        kloc = (1.0 / lengths)[:, None, None] * np.array([[1.0, -1.0], [-1.0, 1.0]])
        mloc = (lengths / 6.0)[:, None, None] * np.array([[2.0, 1.0], [1.0, 2.0]])
        # boundary nodes: nodes used by exactly one region cell side-wise
        counts = {}
        for cn in cell_nodes:
            for n in cn:
                counts[int(n)] = counts.get(int(n), 0) + 1
        bset = {n for n, c in counts.items() if c == 1}
    else:
        cell_nodes = mesh.triangles[cells]
        kloc, mloc = _tri_local_matrices(mesh.nodes, cell_nodes)
        cellset = set(int(c) for c in cells)
        bset = set()
        for (u, v), ts in mesh.edges.items():
            inside = [t for t in ts if t in cellset]
            if len(inside) == 1:
                bset.update((u, v))

    nodes = np.unique(cell_nodes.ravel())
    local = {int(g): i for i, g in enumerate(nodes)}
    local_cells = np.vectorize(local.get)(cell_nodes)
    K, M = _assemble_pair(local_cells, kloc, mloc, nodes.size)
    boundary_local = np.array(sorted(local[n] for n in bset), dtype=np.int64)
    mask = np.ones(nodes.size, dtype=bool)
    mask[boundary_local] = False
    interior_local = np.where(mask)[0]
    return Region(mesh, cells, nodes, K, M, boundary_local, interior_local, local)


def assemble_dirichlet(mesh, cells) -> SparsePencil:
    """Dirichlet pencil over a region: boundary dofs eliminated.

    A region so small that no free dofs remain yields an empty pencil.
    """
    region = assemble_region(mesh, cells)
    free = region.interior_local
    K = region.K_full[np.ix_(free, free)].tocsr()
    M = region.M_full[np.ix_(free, free)].tocsr()
    return SparsePencil(sp.csr_array(K), sp.csr_array(M), region.nodes[free], region)


def canonical_sign(v: np.ndarray) -> np.ndarray:
    """Fix the sign of an eigenvector deterministically (positive mean)."""
    s = v.sum()
    if abs(s) > 1e-10 * np.abs(v).sum():
        return v if s > 0 else -v
    i = int(np.argmax(np.abs(v)))
    return v if v[i] > 0 else -v


def _check_pairs(K, M, vals, vecs):
    pairs = []
    for j, lam in enumerate(vals):
        v = vecs[:, j]
        nm = float(np.sqrt(v @ (M @ v)))
        v = v / nm
        kr = K @ v
        res = np.linalg.norm(kr - lam * (M @ v))
        scale = max(np.linalg.norm(kr), 1e-300)
        if res > max(EIG_RESIDUAL_RTOL * scale, 1e-13):
            raise FemError(f"eigenpair residual {res / scale:.2e} exceeds tolerance")
        pairs.append(EigenPair(float(lam), canonical_sign(v)))
    return pairs


def _eigsh_retry(K, M, k, sigma, v0):
    last = None
    for attempt in range(4):
        try:
            vals, vecs = spla.eigsh(K, k=k, M=M, sigma=sigma, which="LM", v0=v0)
            return vals, vecs
        except (RuntimeError, spla.ArpackError, ValueError) as exc:  # singular shift, no convergence
            last = exc
            sigma = sigma - (1e-4 + abs(sigma) * 1e-4) * (attempt + 1)
    raise FemError(f"sparse eigensolve failed after shift retries: {last}")


def eigensolve(pencil, window) -> list:
    """Eigenpairs of ``K v = lam M v`` sorted ascending.

    ``window`` is ``("lowest", n)`` or ``("near", tau, n)``.  Results are
    M-normalized, sign-canonicalized and residual-checked.
    """
    if isinstance(pencil, SparsePencil):
        K, M = pencil.K, pencil.M
    else:
        K, M = pencil
    n = K.shape[0]
    if n == 0:
        return []
    kind = window[0]
    if kind == "lowest":
        nev = int(window[1])
        if nev < 1:
            raise ValueError("need nev >= 1")
        sigma = None
    elif kind == "near":
        tau = float(window[1])
        nev = int(window[2]) if len(window) > 2 else 6
        if not np.isfinite(tau):
            raise ValueError("target must be finite")
        sigma = tau
    else:
        raise ValueError(f"unknown window {window!r}")

    nev = min(nev, n)
    if n <= DENSE_CUTOFF or nev >= n - 1:
        vals, vecs = sla.eigh(K.toarray(), M.toarray())
        if kind == "near":
            order = np.argsort(np.abs(vals - sigma), kind="stable")[:nev]
            order = order[np.argsort(vals[order], kind="stable")]
        else:
            order = np.arange(nev)
        return _check_pairs(K, M, vals[order], vecs[:, order])

    v0 = np.full(n, 1.0 / np.sqrt(n))
    if sigma is None:
        # a slightly negative shift keeps K - sigma*M definite even if K is singular
        sigma = -1e-3 * (K.diagonal().sum() / max(M.diagonal().sum(), 1e-300)) - 1e-8
    vals, vecs = _eigsh_retry(sp.csc_array(K), sp.csc_array(M), nev, sigma, v0)
    order = np.argsort(vals, kind="stable")
    return _check_pairs(K, M, vals[order], vecs[:, order])


def eig_distance_bound(K, M, vec: np.ndarray, lam: float) -> float:
    """Upper bound on the distance from ``lam`` to the nearest pencil
    eigenvalue, from the residual of an approximate eigenvector
    (Bauer-Fike for symmetric pencils, in the M-weighted norms)."""
    r = K @ vec - lam * (M @ vec)
    y = spla.spsolve(sp.csc_array(sp.csr_array(M)), r)
    num = float(np.sqrt(abs(r @ y)))
    den = float(np.sqrt(vec @ (M @ vec)))
    return num / den


def count_below(pencil, threshold: float):
    """Number of pencil eigenvalues strictly below ``threshold``.

    Returns ``(count, values)`` where ``values`` covers at least everything
    below the threshold.
    """
    if isinstance(pencil, SparsePencil):
        K, M = pencil.K, pencil.M
    else:
        K, M = pencil
    n = K.shape[0]
    if n == 0:
        return 0, np.array([])
    if n <= DENSE_CUTOFF:
        vals = sla.eigh(K.toarray(), M.toarray(), eigvals_only=True)
        return int(np.sum(vals < threshold)), vals
    nev = 8
    while True:
        pairs = eigensolve((K, M), ("lowest", nev))
        vals = np.array([p.value for p in pairs])
        if vals.size < nev or vals.max() >= threshold:
            return int(np.sum(vals < threshold)), vals
        if nev >= n - 2:
            return int(np.sum(vals < threshold)), vals
        nev = min(2 * nev, n - 2)


def cluster_eigenvalues(values, rtol: float = 1e-6):
    """Group sorted eigenvalues into clusters of relative width ``rtol``."""
    values = np.sort(np.asarray(values, dtype=float))
    groups = []
    for lam in values:
        if groups and abs(lam - groups[-1][-1]) <= rtol * (1.0 + abs(lam)):
            groups[-1].append(lam)
        else:
            groups.append([lam])
    return groups


def boundary_mass(mesh, segments, size=None) -> sp.csr_array:
    """P1 mass matrix of a union of boundary polylines, embedded globally.

    ``segments`` is an iterable of node paths (2D polylines along mesh
    edges) or single-node paths (1D facet points, unit weight each).
    """
    if size is None:
        size = mesh.num_nodes
    rows, cols, vals = [], [], []
    for path in segments:
        path = [int(p) for p in path]
        if len(path) == 1:
            if not isinstance(mesh, CurveMesh):
                raise FemError("single-point segments only make sense on 1D meshes")
            rows.append(path[0])
            cols.append(path[0])
            vals.append(1.0)
            continue
        for u, v in zip(path, path[1:]):
            if isinstance(mesh, Mesh) and (min(u, v), max(u, v)) not in mesh.edges:
                raise FemError(f"segment edge ({u},{v}) is not a mesh edge")
            ell = float(np.linalg.norm(mesh.nodes[u] - mesh.nodes[v])) if isinstance(mesh, Mesh) \
                else abs(mesh.theta[v] - mesh.theta[u])
            for (r, c, w) in ((u, u, ell / 3), (v, v, ell / 3), (u, v, ell / 6), (v, u, ell / 6)):
                rows.append(r)
                cols.append(c)
                vals.append(w)
    return sp.coo_array((vals, (rows, cols)), shape=(size, size)).tocsr()


def variational_normal_derivative(pencil: SparsePencil, u: np.ndarray, lam: float,
                                  rtol: float = 1e-8) -> np.ndarray:
    """Consistent-flux boundary functional of an interior Helmholtz solution.

    ``u`` holds the free-dof coefficients.  Returns the residual
    ``(K_full - lam M_full) u`` on the region-boundary rows, ordered like
    ``pencil.region.boundary_local``.  Raises if ``u`` does not solve the
    interior equations at ``lam`` to relative tolerance ``rtol``.
    """
    region = pencil.region
    full = np.zeros(region.num_nodes)
    free_local = region.interior_local
    if u.shape[0] != free_local.size:
        raise ValueError("coefficient vector does not match the pencil's free dofs")
    full[free_local] = u
    r = (region.K_full @ full) - lam * (region.M_full @ full)
    scale = max(np.linalg.norm(region.K_full @ full), 1e-300)
    interior_res = np.linalg.norm(r[free_local])
    if interior_res > max(rtol * scale, 1e-12):
        raise FemError(
            f"interior residual {interior_res / scale:.2e} too large: u is not a "
            f"discrete solution at lam={lam}")
    return r[region.boundary_local]


def region_boundary_mass(region: Region) -> sp.csr_array:
    """P1 mass on the region's boundary curve, over boundary-local indices."""
    mesh = region.mesh
    nb = region.boundary_local.size
    pos = {int(region.nodes[l]): i for i, l in enumerate(region.boundary_local)}
    if isinstance(mesh, CurveMesh):
        return sp.csr_array(sp.eye_array(nb))
    cellset = set(int(c) for c in region.cells)
    rows, cols, vals = [], [], []
    for (u, v), ts in mesh.edges.items():
        if len([t for t in ts if t in cellset]) != 1:
            continue
        ell = float(np.linalg.norm(mesh.nodes[u] - mesh.nodes[v]))
        iu, iv = pos[u], pos[v]
        for (r, c, w) in ((iu, iu, ell / 3), (iv, iv, ell / 3), (iu, iv, ell / 6), (iv, iu, ell / 6)):
            rows.append(r)
            cols.append(c)
            vals.append(w)
    return sp.coo_array((vals, (rows, cols)), shape=(nb, nb)).tocsr()


def recover_pointwise_normal(region: Region, r: np.ndarray) -> np.ndarray:
    """Pointwise normal derivative from a consistent-flux functional.

    Solves ``(boundary mass) q = r`` on the region's boundary nodes with the
    lumped boundary mass, which keeps the recovery monotone (no overshoot at
    region corners, where the consistent solve rings).  On 1D regions the
    boundary mass is the identity on the endpoint pair.
    """
    Mb = region_boundary_mass(region)
    if Mb.shape[0] == 0:
        return np.array([])
    lumped = np.asarray(Mb.sum(axis=1)).ravel()
    return r / lumped
