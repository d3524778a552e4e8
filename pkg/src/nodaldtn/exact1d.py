"""Closed-form verification for interval and circle partitions.

Equipartitions of the circle into k arcs are the nodal partitions of the
anti-periodic (odd k) or periodic (even k) second-derivative operator; the
common ground energy is (k/2)^2, the minimal label is k, and the
Dirichlet-to-Neumann operator on the one-dimensional constraint subspace is
identically zero.  Interval equipartitions have an empty constraint
subspace, so the operator carries no information at all: the defect is zero
and the eigenvalue is simple (the Sturm oscillation picture).

Everything here is computed from explicit trigonometric solutions; no
meshes are involved.  The module doubles as an oracle for the finite
element pipeline run on 1D discretizations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .dtn import DtNOperator

__all__ = [
    "OneDPartition", "OneDReport", "anti_periodic_spectrum", "periodic_spectrum",
    "circle_partition", "interval_partition", "circle_report", "interval_report",
    "exact_dtn_1d", "solve_arc_bvp",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class OneDPartition:
    """Division of the circle or an interval into consecutive subintervals.

    ``points``: the division points.  On the circle these are the k cut
    points (strictly increasing in [0, 2pi)); subinterval ``i`` runs from
    ``points[i]`` to ``points[(i+1) % k]``.  On an interval of length L the
    points are ``0 = p_0 < ... < p_k = L`` and the cut points are the k-1
    interior ones, indexed 1..k-1.

    ``weights``: map (subinterval, point index) -> +-1 on both sides of
    every cut point.
    """

    topology: str
    points: tuple
    weights: dict = field(hash=False)

    def __post_init__(self):
        if self.topology not in ("circle", "interval"):
            raise ValueError("topology must be 'circle' or 'interval'")
        pts = np.asarray(self.points, dtype=float)
        if np.any(np.diff(pts) <= 0):
            raise ValueError("division points must be strictly increasing")
        if self.topology == "circle" and (pts[0] < 0 or pts[-1] >= TWO_PI):
            raise ValueError("circle points must lie in [0, 2pi)")

    @property
    def k(self) -> int:
        return len(self.points) if self.topology == "circle" else len(self.points) - 1

    def cut_point_ids(self) -> list:
        return list(range(self.k)) if self.topology == "circle" else list(range(1, self.k))

    def subinterval(self, i: int) -> tuple:
        pts = self.points
        if self.topology == "circle":
            left = pts[i]
            right = pts[(i + 1) % self.k]
            if i == self.k - 1:
                right = pts[0] + TWO_PI
            return (left, right)
        return (pts[i], pts[i + 1])

    def ends(self, i: int) -> tuple:
        """(point id at the left end, point id at the right end); an id is
        None when that end lies on the outer boundary (interval only)."""
        if self.topology == "circle":
            return (i, (i + 1) % self.k)
        left = i if i >= 1 else None
        right = i + 1 if i + 1 <= self.k - 1 else None
        return (left, right)


def anti_periodic_spectrum(n: int) -> list:
    """First ``n`` distinct eigenvalues of -u'' with u(0) = -u(2pi),
    u'(0) = -u'(2pi): values (j/2)^2 for odd j, each of multiplicity 2,
    with eigenfunctions sin(j t/2) and cos(j t/2)."""
    if n < 1:
        raise ValueError("need n >= 1")
    out = []
    for idx in range(n):
        j = 2 * idx + 1
        out.append({
            "value": (j / 2.0) ** 2,
            "multiplicity": 2,
            "eigenfunctions": (
                (lambda t, j=j: np.sin(j * np.asarray(t) / 2.0)),
                (lambda t, j=j: np.cos(j * np.asarray(t) / 2.0)),
            ),
        })
    return out


def periodic_spectrum(n: int) -> list:
    """First ``n`` distinct eigenvalues of -u'' on the circle: 0 (simple)
    then m^2 with multiplicity 2."""
    out = [{"value": 0.0, "multiplicity": 1,
            "eigenfunctions": ((lambda t: np.ones_like(np.asarray(t, dtype=float))),)}]
    for m in range(1, n):
        out.append({
            "value": float(m * m),
            "multiplicity": 2,
            "eigenfunctions": (
                (lambda t, m=m: np.sin(m * np.asarray(t))),
                (lambda t, m=m: np.cos(m * np.asarray(t))),
            ),
        })
    return out[:n]


def circle_partition(k: int, weights: str = "alternating") -> OneDPartition:
    """Equipartition of the circle at points 2*pi*i/k.

    ``weights="alternating"`` uses the sign pattern sampling cos(k t/2) at
    the endpoints (valid for odd k; for even k it degenerates to the
    plus-minus alternation).  ``weights="single_cut"`` is all +1 except the
    wrap-around side of the last subinterval; the two choices are edge
    equivalent.  ``weights="ones"`` (even k only) is the bipartite choice.
    """
    pts = tuple(TWO_PI * i / k for i in range(k))
    w = {}
    if weights == "alternating":
        for i in range(k):
            w[(i, i)] = (-1) ** i            # left endpoint
            w[(i, (i + 1) % k)] = (-1) ** (i + 1)
    elif weights == "single_cut":
        for i in range(k):
            w[(i, i)] = 1
            w[(i, (i + 1) % k)] = 1
        w[(k - 1, 0)] = -1
    elif weights == "ones":
        if k % 2:
            raise ValueError("all-ones weights are only valid for even k (bipartite)")
        for i in range(k):
            w[(i, i)] = 1
            w[(i, (i + 1) % k)] = 1
    else:
        raise ValueError(f"unknown weight preset {weights!r}")
    return OneDPartition("circle", pts, w)


def interval_partition(points) -> OneDPartition:
    """Partition of (0, L) at the given division points (0 and L included),
    with the all-cut sign choice on the interior points."""
    pts = tuple(float(p) for p in points)
    k = len(pts) - 1
    w = {}
    for a in range(1, k):
        w[(a - 1, a)] = 1
        w[(a, a)] = -1
    return OneDPartition("interval", pts, w)


def _sign_table(p: OneDPartition):
    """chi values and outward orientation bookkeeping per (subinterval, end)."""
    table = {}
    for i in range(p.k):
        la, ra = p.ends(i)
        if la is not None:
            table[(i, la)] = p.weights[(i, la)]
        if ra is not None:
            table[(i, ra)] = p.weights[(i, ra)]
    return table


def solve_arc_bvp(p: OneDPartition, i: int, lam: float, left_value: float,
                  right_value: float, compat_rtol: float = 1e-9):
    """Closed-form Helmholtz solve on subinterval ``i`` at its resonance.

    The general solution is A cos(s(t-l)) + B sin(s(t-l)) with s = sqrt(lam)
    and s * length = pi; the data must satisfy right = -left (the
    solvability constraint), and orthogonality to the ground state forces
    B = 0.  Returns (A, B) with B = 0.
    """
    left, right = p.subinterval(i)
    s = math.sqrt(lam)
    if abs(s * (right - left) - math.pi) > 1e-12 * math.pi:
        raise ValueError(f"{lam} is not the ground energy of subinterval {i}")
    scale = max(abs(left_value), abs(right_value), 1e-300)
    if abs(right_value + left_value) > compat_rtol * scale:
        raise ValueError("boundary data violates the arc solvability constraint")
    return float(left_value), 0.0


def exact_dtn_1d(p: OneDPartition, lam: float = None) -> DtNOperator:
    """Dirichlet-to-Neumann matrix of a 1D equipartition, in closed form.

    The constraint subspace has dimension (#cut points) - (k - 1); for each
    basis vector the per-arc solutions are pure cosines whose endpoint
    derivatives vanish, so the matrix is identically zero.  The computation
    still goes through the generic steps (constraints, null space, solve,
    two-sided trace) so it can serve as an oracle.
    """
    k = p.k
    lengths = [p.subinterval(i)[1] - p.subinterval(i)[0] for i in range(k)]
    energies = [(math.pi / L) ** 2 for L in lengths]
    if lam is None:
        lam = float(np.mean(energies))
    if max(abs(e - lam) for e in energies) > 1e-10 * (1.0 + abs(lam)):
        raise ValueError("partition is not an equipartition at the given energy")
    s = math.sqrt(lam)
    chi = _sign_table(p)

    cuts = p.cut_point_ids()
    pos = {a: idx for idx, a in enumerate(cuts)}
    nT = len(cuts)

    # ground states sqrt(2/L) sin(s(t-l)): outward derivative -s*amp at both ends
    amp = [math.sqrt(2.0 / L) for L in lengths]
    # glue signs: eta_i chi_i alternates so the glued function is an eigenfunction
    eta = _glue_signs(p, chi)

    C = np.zeros((k, nT))
    for i in range(k):
        la, ra = p.ends(i)
        dn = -s * amp[i] * eta[i]
        if la is not None:
            C[i, pos[la]] += chi[(i, la)] * dn
        if ra is not None:
            C[i, pos[ra]] += chi[(i, ra)] * dn
    rank = np.linalg.matrix_rank(C) if C.size else 0
    if rank != k - 1:
        raise ValueError(f"constraint rank {rank} != k-1")
    basis = sla.null_space(C) if nT else np.zeros((0, 0))

    d = basis.shape[1] if basis.size else 0
    F = np.zeros((d, d))
    for q in range(d):
        g = basis[:, q]
        r = np.zeros(nT)
        for i in range(k):
            la, ra = p.ends(i)
            lv = chi[(i, la)] * g[pos[la]] if la is not None else 0.0
            rv = chi[(i, ra)] * g[pos[ra]] if ra is not None else 0.0
            A, B = solve_arc_bvp(p, i, lam, lv, rv)
            L = lengths[i]
            # u = A cos(s(t-l)) + B sin(s(t-l)); outward normal derivatives
            du_l = -(B * s)                       # -u'(left)
            du_r = A * s * (-math.sin(s * L)) + B * s * math.cos(s * L)
            if la is not None:
                r[pos[la]] += chi[(i, la)] * du_l
            if ra is not None:
                r[pos[ra]] += chi[(i, ra)] * du_r
        F[:, q] = basis.T @ r
    matrix = 0.5 * (F + F.T)
    return DtNOperator(matrix, float(lam), tol_kernel=1e-12,
                       asymmetry=float(np.abs(F - F.T).max()) if d else 0.0)


def _glue_signs(p: OneDPartition, chi) -> list:
    """Signs eta with eta_i chi_i = -eta_j chi_j at every cut point, so the
    glued ground states form an eigenfunction; exists iff weights valid."""
    eta = {0: 1}
    frontier = [0]
    while frontier:
        i = frontier.pop()
        for a in [e for e in p.ends(i) if e is not None]:
            for j in range(p.k):
                if j == i or j in eta:
                    continue
                if a in [e for e in p.ends(j) if e is not None]:
                    eta[j] = -eta[i] * chi[(i, a)] * chi[(j, a)]
                    frontier.append(j)
    # consistency check around the circle
    for i in range(p.k):
        la, ra = p.ends(i)
        for a in (la, ra):
            if a is None:
                continue
            for j in range(p.k):
                if j != i and a in [e for e in p.ends(j) if e is not None]:
                    if eta[i] * chi[(i, a)] != -eta[j] * chi[(j, a)]:
                        raise ValueError("weights are not valid on this 1D partition")
    return [eta[i] for i in range(p.k)]


@dataclass
class OneDReport:
    topology: str
    k: int
    lambda_star: float
    is_chi_nodal: bool
    label: int = None
    defect: int = None
    multiplicity: int = None
    dim_S: int = None
    dn_matrix: list = None
    morse: int = None
    kernel_dim: int = None
    bipartite: bool = False
    identities: dict = field(default_factory=dict)
    energies: list = field(default_factory=list)
    messages: list = field(default_factory=list)

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        out["schema_version"] = 1
        return out


def circle_report(k: int) -> OneDReport:
    """Full verification record for the circle k-equipartition.

    Odd k uses the anti-periodic operator (single cut); even k is the
    bipartite case and runs against the plain periodic operator.
    """
    if k < 2:
        raise ValueError("need k >= 2 arcs")
    lam = (k / 2.0) ** 2
    if k % 2 == 1:
        p = circle_partition(k, "alternating")
        spec = anti_periodic_spectrum(n=(k + 3) // 2)
        bipartite = False
    else:
        p = circle_partition(k, "ones")
        spec = periodic_spectrum(n=k // 2 + 2)
        bipartite = True
    below = sum(rec["multiplicity"] for rec in spec if rec["value"] < lam - 1e-12)
    mult = sum(rec["multiplicity"] for rec in spec
               if abs(rec["value"] - lam) <= 1e-12 * (1 + lam))
    label = below + 1
    dtn = exact_dtn_1d(p, lam)
    counts = {"morse": int(np.sum(dtn.eigenvalues < -dtn.tol_kernel)),
              "kernel_dim": int(np.sum(np.abs(dtn.eigenvalues) <= dtn.tol_kernel))}
    rep = OneDReport(
        topology="circle", k=k, lambda_star=lam, is_chi_nodal=True,
        label=label, defect=label - k, multiplicity=mult,
        dim_S=dtn.matrix.shape[0], dn_matrix=dtn.matrix.tolist(),
        morse=counts["morse"], kernel_dim=counts["kernel_dim"],
        bipartite=bipartite, energies=[lam] * k)
    rep.identities = {
        "defect_equals_morse": rep.defect == rep.morse,
        "multiplicity_equals_kernel_plus_one": rep.multiplicity == rep.kernel_dim + 1,
    }
    return rep


def interval_report(k: int, length: float = math.pi, points=None) -> OneDReport:
    """Verification record for an interval partition.

    Only equipartitions are pair compatible; other division points produce a
    report with ``is_chi_nodal`` false and the offending energies listed.
    """
    if k < 1:
        raise ValueError("need k >= 1")
    if points is None:
        points = [length * i / k for i in range(k + 1)]
    p = interval_partition(points)
    lengths = [p.subinterval(i)[1] - p.subinterval(i)[0] for i in range(p.k)]
    energies = [(math.pi / L) ** 2 for L in lengths]
    lam = float(np.mean(energies))
    spread = max(abs(e - lam) for e in energies) / (1.0 + lam)
    if spread > 1e-12:
        return OneDReport(
            topology="interval", k=p.k, lambda_star=lam, is_chi_nodal=False,
            energies=energies,
            messages=[f"not an equipartition: relative energy spread {spread:.2e}"])
    # Dirichlet spectrum of (0, L): (m pi / L)^2, all simple
    L = p.points[-1]
    label = k
    dtn = exact_dtn_1d(p, lam)
    counts = {"morse": int(np.sum(dtn.eigenvalues < -dtn.tol_kernel)),
              "kernel_dim": int(np.sum(np.abs(dtn.eigenvalues) <= dtn.tol_kernel))}
    rep = OneDReport(
        topology="interval", k=p.k, lambda_star=lam, is_chi_nodal=True,
        label=label, defect=0, multiplicity=1,
        dim_S=dtn.matrix.shape[0], dn_matrix=dtn.matrix.tolist(),
        morse=counts["morse"], kernel_dim=counts["kernel_dim"],
        bipartite=True, energies=energies)
    rep.identities = {
        "defect_equals_morse": rep.defect == rep.morse,
        "multiplicity_equals_kernel_plus_one": rep.multiplicity == rep.kernel_dim + 1,
    }
    return rep
