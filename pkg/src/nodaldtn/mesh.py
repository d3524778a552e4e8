"""Triangular meshes of planar domains and P1 line meshes of 1D domains.

Two mesh flavors share one downstream interface:

* :class:`Mesh` -- a conforming triangulation.  Cells are triangles (stored
  counterclockwise), facets are edges.
* :class:`CurveMesh` -- a subdivided interval or circle.  Cells are the
  subintervals, facets are points.

The rectangle mesher is structured (right triangles on a uniform grid) so
that axis-aligned nodal lines of separable eigenfunctions fall exactly on
mesh edges whenever the subdivision counts divide the nodal-line positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Mesh", "CurveMesh", "generate_mesh", "rect_mesh", "disk_mesh",
    "polygon_mesh", "circle_mesh", "interval_mesh", "read_mesh", "write_mesh",
]


@dataclass
class Mesh:
    """Conforming triangulation of a planar domain.

    Parameters
    ----------
    nodes : (N, 2) float array
        Node coordinates.
    triangles : (T, 3) int array
        Node triples.  Reoriented counterclockwise on construction.

    Attributes
    ----------
    edges : dict
        ``(u, v) -> list of adjacent triangle ids`` with ``u < v``.
    boundary_edges : list of (u, v)
        Edges adjacent to exactly one triangle (the outer boundary).
    boundary_nodes : set of int
    """

    nodes: np.ndarray
    triangles: np.ndarray
    edges: dict = field(init=False, repr=False)
    boundary_edges: list = field(init=False, repr=False)
    boundary_nodes: set = field(init=False, repr=False)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise ValueError("nodes must be an (N, 2) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValueError("triangles must be a (T, 3) array")
        # orient counterclockwise, reject degenerate triangles
        p = self.nodes
        t = self.triangles
        cross = ((p[t[:, 1], 0] - p[t[:, 0], 0]) * (p[t[:, 2], 1] - p[t[:, 0], 1])
                 - (p[t[:, 1], 1] - p[t[:, 0], 1]) * (p[t[:, 2], 0] - p[t[:, 0], 0]))
        if np.any(cross == 0.0):
            raise ValueError("mesh contains a degenerate (zero-area) triangle")
        flip = cross < 0
        if np.any(flip):
            t[flip] = t[flip][:, [0, 2, 1]]
        self.edges = {}
        for ti, tri in enumerate(self.triangles):
            for a in range(3):
                key = (int(tri[a]), int(tri[(a + 1) % 3]))
                key = (min(key), max(key))
                self.edges.setdefault(key, []).append(ti)
        bad = [e for e, ts in self.edges.items() if len(ts) > 2]
        if bad:
            raise ValueError(f"non-conforming mesh: edge {bad[0]} shared by {len(self.edges[bad[0]])} triangles")
        self.boundary_edges = [e for e, ts in self.edges.items() if len(ts) == 1]
        self.boundary_nodes = {n for e in self.boundary_edges for n in e}

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def num_cells(self) -> int:
        return self.triangles.shape[0]

    @property
    def dim(self) -> int:
        return 2

    def cell_nodes(self, c: int) -> np.ndarray:
        return self.triangles[c]

    def edge_length(self, u: int, v: int) -> float:
        return float(np.linalg.norm(self.nodes[u] - self.nodes[v]))

    def max_edge_length(self) -> float:
        return max(self.edge_length(u, v) for (u, v) in self.edges)

    def triangle_area(self, c: int) -> float:
        p = self.nodes[self.triangles[c]]
        return 0.5 * abs((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1])
                         - (p[1, 1] - p[0, 1]) * (p[2, 0] - p[0, 0]))

    def has_directed_edge(self, c: int, u: int, v: int) -> bool:
        """True if triangle ``c`` lists ``u -> v`` consecutively (CCW order).

        With counterclockwise triangles this means the triangle lies to the
        left of the directed edge.
        """
        tri = self.triangles[c]
        for a in range(3):
            if tri[a] == u and tri[(a + 1) % 3] == v:
                return True
        return False

    def cells_of_edge(self, u: int, v: int) -> list:
        return self.edges[(min(u, v), max(u, v))]


@dataclass
class CurveMesh:
    """Uniformly ordered P1 mesh of an interval or a circle.

    ``theta`` holds increasing node coordinates.  For a closed mesh the last
    cell wraps from ``theta[-1]`` back to ``theta[0] + period``.
    """

    theta: np.ndarray
    closed: bool
    period: float = 2.0 * math.pi

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.ndim != 1 or self.theta.size < 2:
            raise ValueError("theta must hold at least two nodes")
        if np.any(np.diff(self.theta) <= 0):
            raise ValueError("theta must be strictly increasing")
        if self.closed and self.theta[-1] - self.theta[0] >= self.period:
            raise ValueError("closed mesh nodes must span less than one period")

    @property
    def num_nodes(self) -> int:
        return self.theta.size

    @property
    def num_cells(self) -> int:
        return self.theta.size if self.closed else self.theta.size - 1

    @property
    def dim(self) -> int:
        return 1

    def cell_nodes(self, c: int) -> np.ndarray:
        n = self.num_nodes
        if self.closed:
            return np.array([c, (c + 1) % n], dtype=np.int64)
        return np.array([c, c + 1], dtype=np.int64)

    def cell_length(self, c: int) -> float:
        n = self.num_nodes
        if self.closed and c == n - 1:
            return float(self.theta[0] + self.period - self.theta[-1])
        return float(self.theta[c + 1] - self.theta[c])

    def max_edge_length(self) -> float:
        return max(self.cell_length(c) for c in range(self.num_cells))

    @property
    def boundary_nodes(self) -> set:
        if self.closed:
            return set()
        return {0, self.num_nodes - 1}

    def left_cell_of_node(self, n: int) -> int | None:
        """Cell ending at node ``n`` (on its lower-coordinate side)."""
        if self.closed:
            return (n - 1) % self.num_nodes
        return n - 1 if n > 0 else None


def rect_mesh(a: float, b: float, nx: int, ny: int) -> Mesh:
    """Structured right-triangle mesh of the rectangle (0,a) x (0,b).

    Each grid cell is split along its SW-NE diagonal, so vertical lines
    x = a*i/nx and horizontal lines y = b*j/ny are unions of mesh edges.
    """
    if a <= 0 or b <= 0 or nx < 1 or ny < 1:
        raise ValueError("rectangle sides and subdivision counts must be positive")
    xs = np.linspace(0.0, a, nx + 1)
    ys = np.linspace(0.0, b, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            n00, n10, n01, n11 = nid(i, j), nid(i + 1, j), nid(i, j + 1), nid(i + 1, j + 1)
            tris.append((n00, n10, n11))
            tris.append((n00, n11, n01))
    return Mesh(nodes, np.array(tris))


def disk_mesh(r: float, h: float) -> Mesh:
    """Spiderweb mesh of the disk of radius ``r``: ring ``j`` carries ``6j`` nodes.

    Radial spokes at multiples of 60 degrees are unions of mesh edges, so
    sector partitions cut along those angles are mesh-aligned.
    """
    if r <= 0 or h <= 0:
        raise ValueError("radius and target edge length must be positive")
    m = max(1, math.ceil(r / h))
    nodes = [(0.0, 0.0)]
    ring_start = [None]  # ring index -> first node id
    for j in range(1, m + 1):
        ring_start.append(len(nodes))
        rad = r * j / m
        for t in range(6 * j):
            ang = 2.0 * math.pi * t / (6 * j)
            nodes.append((rad * math.cos(ang), rad * math.sin(ang)))
    tris = []
    # innermost fan
    s1 = ring_start[1]
    for t in range(6):
        tris.append((0, s1 + t, s1 + (t + 1) % 6))
    # ring j-1 to ring j: per 60-degree sector, j-1 inner and j outer nodes
    for j in range(2, m + 1):
        si, so = ring_start[j - 1], ring_start[j]
        ni, no = 6 * (j - 1), 6 * j
        for s in range(6):
            inner = [si + (s * (j - 1) + t) % ni for t in range(j)]      # wraps to next spoke
            outer = [so + (s * j + t) % no for t in range(j + 1)]
            # alternate outer-based and inner-based triangles along the sector
            for t in range(j):
                tris.append((outer[t], outer[t + 1], inner[t]))
                if t < j - 1:
                    tris.append((outer[t + 1], inner[t + 1], inner[t]))
    return Mesh(np.array(nodes), np.array(tris))


def _segments_properly_intersect(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return int(v > 0) - int(v < 0)

    o1, o2 = orient(p1, p2, p3), orient(p1, p2, p4)
    o3, o4 = orient(p3, p4, p1), orient(p3, p4, p2)
    return o1 != o2 and o3 != o4 and 0 not in (o1, o2, o3, o4)


def _ear_clip(poly: np.ndarray) -> list:
    """Triangulate a simple polygon (CCW vertex order) by ear clipping."""
    n = len(poly)
    idx = list(range(n))
    tris = []

    def area2(a, b, c):
        return (poly[b, 0] - poly[a, 0]) * (poly[c, 1] - poly[a, 1]) \
            - (poly[b, 1] - poly[a, 1]) * (poly[c, 0] - poly[a, 0])

    while len(idx) > 3:
        clipped = False
        for k in range(len(idx)):
            a, b, c = idx[k - 1], idx[k], idx[(k + 1) % len(idx)]
            if area2(a, b, c) <= 0:
                continue
            ear = True
            for q in idx:
                if q in (a, b, c):
                    continue
                # barycentric containment test
                d0, d1, d2 = area2(a, b, q), area2(b, c, q), area2(c, a, q)
                if d0 >= 0 and d1 >= 0 and d2 >= 0:
                    ear = False
                    break
            if ear:
                tris.append((a, b, c))
                idx.pop(k)
                clipped = True
                break
        if not clipped:
            raise ValueError("polygon triangulation failed (is the polygon simple?)")
    tris.append(tuple(idx))
    return tris


def polygon_mesh(vertices, h: float) -> Mesh:
    """Mesh a simple polygon: ear-clip, then quadrisect until edges <= 1.5h."""
    verts = np.asarray(vertices, dtype=float)
    if verts.ndim != 2 or verts.shape[1] != 2 or len(verts) < 3:
        raise ValueError("polygon needs at least three (x, y) vertices")
    n = len(verts)
    for i in range(n):
        for j in range(i + 1, n):
            if abs(i - j) in (1, n - 1):
                continue
            if _segments_properly_intersect(verts[i], verts[(i + 1) % n], verts[j], verts[(j + 1) % n]):
                raise ValueError("polygon is self-intersecting")
    # signed area; flip to CCW
    area2 = np.sum(verts[:, 0] * np.roll(verts[:, 1], -1) - np.roll(verts[:, 0], -1) * verts[:, 1])
    if area2 == 0:
        raise ValueError("degenerate polygon")
    if area2 < 0:
        verts = verts[::-1]
    tris = _ear_clip(verts)
    mesh = Mesh(verts, np.array(tris))
    while mesh.max_edge_length() > 1.5 * h:
        mesh = _quadrisect(mesh)
    return mesh


def _quadrisect(mesh: Mesh) -> Mesh:
    nodes = list(map(tuple, mesh.nodes))
    mid = {}

    def midpoint(u, v):
        key = (min(u, v), max(u, v))
        if key not in mid:
            mid[key] = len(nodes)
            nodes.append(tuple(0.5 * (mesh.nodes[u] + mesh.nodes[v])))
        return mid[key]

    tris = []
    for tri in mesh.triangles:
        a, b, c = map(int, tri)
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        tris += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
    return Mesh(np.array(nodes), np.array(tris))


def generate_mesh(shape, h: float) -> Mesh:
    """Mesh one of the supported shapes with maximum edge length <= 1.5h.

    ``shape`` is ``("rectangle", a, b)``, ``("disk", r)`` or
    ``("polygon", vertices)``.
    """
    if h <= 0:
        raise ValueError("target edge length h must be positive")
    kind = shape[0]
    if kind == "rectangle":
        _, a, b = shape
        if a <= 0 or b <= 0:
            raise ValueError("rectangle sides must be positive")
        return rect_mesh(a, b, max(1, math.ceil(a / h)), max(1, math.ceil(b / h)))
    if kind == "disk":
        _, r = shape
        return disk_mesh(r, h)
    if kind == "polygon":
        _, vertices = shape
        return polygon_mesh(vertices, h)
    raise ValueError(f"unknown shape kind {kind!r}")


def circle_mesh(n: int, period: float = 2.0 * math.pi) -> CurveMesh:
    """Uniform closed mesh of the circle with ``n`` nodes."""
    if n < 3:
        raise ValueError("need at least 3 nodes on the circle")
    return CurveMesh(np.arange(n) * period / n, closed=True, period=period)


def graded_circle_mesh(n: int, arcs: int, skew: float = 0.6) -> CurveMesh:
    """Circle mesh with an identical asymmetric node grading inside each of
    ``arcs`` equal arcs.

    The arcs stay congruent (so arc equipartitions are exact) while the
    grading breaks reflection symmetry, giving the discretization its
    generic O(h^2) error; the uniform mesh is too special for convergence
    studies because sampled trigonometric eigenfunctions are exact on it.
    """
    if n % arcs:
        raise ValueError("node count must be divisible by the number of arcs")
    per_arc = n // arcs
    x = np.arange(per_arc) / per_arc
    tau = x + skew * x * (1 - x) * (x - 0.37)
    if np.any(np.diff(tau) <= 0):
        raise ValueError("skew too large: grading is not monotone")
    nodes = np.concatenate([2 * math.pi * a / arcs + (2 * math.pi / arcs) * tau
                            for a in range(arcs)])
    return CurveMesh(nodes, closed=True)


def interval_mesh(length: float, n: int) -> CurveMesh:
    """Uniform mesh of (0, length) with ``n`` cells."""
    if length <= 0 or n < 1:
        raise ValueError("length and cell count must be positive")
    return CurveMesh(np.linspace(0.0, length, n + 1), closed=False, period=math.inf)


def write_mesh(path, mesh: Mesh, regions=None) -> None:
    """Write the plain-text mesh format.

    Line 1: ``nodes N``; then N lines ``x y``; then ``triangles T`` and T
    lines of three zero-based node indices; optionally ``regions`` and T
    lines assigning each triangle a subdomain id.
    """
    with open(path, "w") as f:
        f.write(f"nodes {mesh.num_nodes}\n")
        for x, y in mesh.nodes:
            f.write(f"{float(x)!r} {float(y)!r}\n")
        f.write(f"triangles {mesh.num_cells}\n")
        for tri in mesh.triangles:
            f.write(f"{tri[0]} {tri[1]} {tri[2]}\n")
        if regions is not None:
            if len(regions) != mesh.num_cells:
                raise ValueError("regions must assign one id per triangle")
            f.write("regions\n")
            for r in regions:
                f.write(f"{int(r)}\n")


def read_mesh(path):
    """Read the plain-text mesh format; returns ``(mesh, regions_or_None)``."""
    with open(path) as f:
        tokens = f.read().split()
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(tokens):
            raise ValueError("truncated mesh file")
        tok = tokens[pos]
        pos += 1
        return tok

    if take() != "nodes":
        raise ValueError("mesh file must start with 'nodes N'")
    n = int(take())
    nodes = np.array([[float(take()), float(take())] for _ in range(n)])
    if take() != "triangles":
        raise ValueError("expected 'triangles T' block")
    t = int(take())
    tris = np.array([[int(take()), int(take()), int(take())] for _ in range(t)], dtype=np.int64)
    regions = None
    if pos < len(tokens):
        if take() != "regions":
            raise ValueError("unexpected trailing content in mesh file")
        regions = np.array([int(take()) for _ in range(t)], dtype=np.int64)
    return Mesh(nodes, tris), regions
