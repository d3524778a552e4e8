"""Partitions, boundary segments, and the sign/cut combinatorics.

A partition splits the mesh cells into connected subdomains; each maximal
interface piece between two subdomains is a :class:`BoundarySegment` (a
polyline of mesh edges in 2D, a single node in 1D).  Weight assignments put
a sign on each (subdomain, segment) side.  A set of weights is *valid* when
it is induced by orientation choices, which happens exactly when the set of
segments where the two side signs multiply to -1 (the induced *cut*) is a
valid cut: orientations of the subdomains exist so that a segment is cut iff
its two subdomains carry the same orientation.  Validity is decided here as
a parity system over GF(2) on the neighbor multigraph.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .mesh import CurveMesh, Mesh

__all__ = [
    "BoundarySegment", "Partition", "NeighborGraph", "WeightAssignment", "Cut",
    "build_neighbor_graph", "is_bipartite", "weights_from_orientations",
    "cut_from_weights", "is_valid_cut", "minimal_valid_cut", "weight_equivalence",
    "maximal_cut_weights", "minimal_cut_weights", "random_valid_weights",
    "enumerate_valid_weights", "partition_from_labels", "validate_partition",
    "segment_product", "partition_to_json", "partition_from_json",
    "weights_to_json", "weights_from_json",
]


@dataclass(frozen=True)
class BoundarySegment:
    """Interface piece between two subdomains.

    ``nodes`` is the ordered node path of the polyline (2D; closed loops
    repeat the first node at the end) or a single node id (1D point).
    """

    id: int
    left: int
    right: int
    nodes: tuple

    def __post_init__(self):
        if self.left == self.right:
            raise ValueError("a segment must separate two distinct subdomains")
        if self.left > self.right:
            raise ValueError("segment sides must be ordered left < right")
        if len(self.nodes) == 0:
            raise ValueError("segment geometry must be nonempty")

    @property
    def is_point(self) -> bool:
        return len(self.nodes) == 1

    @property
    def is_closed(self) -> bool:
        return len(self.nodes) > 2 and self.nodes[0] == self.nodes[-1]

    def endpoints(self) -> tuple:
        if self.is_point or self.is_closed:
            return ()
        return (self.nodes[0], self.nodes[-1])


@dataclass(frozen=True)
class Partition:
    """Subdomains (cell id tuples) plus their boundary segments."""

    dim: int
    subdomains: tuple
    segments: tuple

    @property
    def k(self) -> int:
        return len(self.subdomains)

    def segment(self, a: int) -> BoundarySegment:
        return self.segments[a]

    def sides(self, a: int) -> tuple:
        s = self.segments[a]
        return (s.left, s.right)

    def segments_of(self, i: int) -> list:
        return [s.id for s in self.segments if i in (s.left, s.right)]


@dataclass(frozen=True)
class NeighborGraph:
    """Multigraph with one edge per boundary segment; loops are forbidden."""

    vertices: tuple
    edges: tuple  # (segment id, i, j)


@dataclass(frozen=True)
class WeightAssignment:
    """Signs chi_i restricted to each segment: map (subdomain, segment) -> +-1."""

    signs: tuple  # sorted tuple of ((subdomain, segment), sign)

    @staticmethod
    def from_dict(d: dict) -> "WeightAssignment":
        items = tuple(sorted(((int(i), int(a)), int(s)) for (i, a), s in d.items()))
        if any(s not in (-1, 1) for _, s in items):
            raise ValueError("weights must be +-1")
        return WeightAssignment(items)

    def as_dict(self) -> dict:
        return dict(self.signs)

    def sign(self, i: int, a: int) -> int:
        return self.as_dict()[(i, a)]


@dataclass(frozen=True)
class Cut:
    """Subset of segment ids; when valid, ``witness`` holds orientations
    with ``a in members  <=>  witness[i(a)] == witness[j(a)]``."""

    members: frozenset
    witness: Optional[dict] = None


def build_neighbor_graph(p: Partition) -> NeighborGraph:
    edges = tuple((s.id, s.left, s.right) for s in p.segments)
    return NeighborGraph(tuple(range(p.k)), edges)


def is_bipartite(g: NeighborGraph):
    """Proper 2-coloring of the multigraph, or ``None`` if none exists."""
    color = {}
    adj = {v: [] for v in g.vertices}
    for _, i, j in g.edges:
        adj[i].append(j)
        adj[j].append(i)
    for start in g.vertices:
        if start in color:
            continue
        color[start] = 0
        stack = [start]
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if w not in color:
                    color[w] = 1 - color[v]
                    stack.append(w)
                elif color[w] == color[v]:
                    return None
    return color


class _ParityDSU:
    """Union-find with edge parities, for GF(2) orientation systems."""

    def __init__(self, n):
        self.parent = list(range(n))
        self.par = [0] * n
        self.rank = [0] * n

    def find_with_parity(self, x):
        if self.parent[x] == x:
            return x, 0
        root, parity = self.find_with_parity(self.parent[x])
        self.parent[x] = root
        self.par[x] = self.par[x] ^ parity
        return root, self.par[x]

    def union(self, x, y, rel) -> bool:
        """Impose parity(x) xor parity(y) == rel; False on contradiction."""
        rx, px = self.find_with_parity(x)
        ry, py = self.find_with_parity(y)
        if rx == ry:
            return (px ^ py) == rel
        if self.rank[rx] < self.rank[ry]:
            rx, ry, px, py = ry, rx, py, px
        self.parent[ry] = rx
        self.par[ry] = px ^ py ^ rel
        if self.rank[rx] == self.rank[ry]:
            self.rank[rx] += 1
        return True


def is_valid_cut(p: Partition, members):
    """Witness orientations for a candidate cut, or ``None`` if invalid.

    Solves o_i xor o_j = 0 for cut segments and = 1 otherwise, over GF(2).
    The witness is normalized so that the smallest subdomain id of every
    neighbor-graph component gets orientation +1.
    """
    members = frozenset(int(a) for a in members)
    dsu = _ParityDSU(p.k)
    for s in p.segments:
        rel = 0 if s.id in members else 1
        if not dsu.union(s.left, s.right, rel):
            return None
    parities = {}
    comp_root = {}
    for i in range(p.k):
        r, q = dsu.find_with_parity(i)
        parities[i] = q
        comp_root.setdefault(r, i)  # smallest id first since we iterate ascending
    witness = {}
    for i in range(p.k):
        r, q = dsu.find_with_parity(i)
        anchor = parities[comp_root[r]]
        witness[i] = 1 if (q ^ anchor) == 0 else -1
    return witness


def segment_product(p: Partition, w: WeightAssignment, a: int) -> int:
    s = p.segments[a]
    d = w.as_dict()
    return d[(s.left, a)] * d[(s.right, a)]


def cut_from_weights(p: Partition, w: WeightAssignment) -> Cut:
    """Induced cut: segments where the two side signs multiply to -1."""
    d = w.as_dict()
    for s in p.segments:
        for side in (s.left, s.right):
            if (side, s.id) not in d:
                raise ValueError(f"weights undefined on side ({side}, {s.id})")
    members = frozenset(s.id for s in p.segments if segment_product(p, w, s.id) == -1)
    return Cut(members, is_valid_cut(p, members))


def _graph_connected_without(p: Partition, removed) -> bool:
    adj = {v: [] for v in range(p.k)}
    for s in p.segments:
        if s.id in removed:
            continue
        adj[s.left].append(s.right)
        adj[s.right].append(s.left)
    seen = {0}
    stack = [0]
    while stack:
        v = stack.pop()
        for u in adj[v]:
            if u not in seen:
                seen.add(u)
                stack.append(u)
    return len(seen) == p.k


def minimal_valid_cut(p: Partition) -> Cut:
    """Smallest valid cut whose removal keeps the slit domain connected.

    Enumerates orientation assignments (2^(k-1) after fixing one), keeps
    valid cuts with connected complement, and returns the one of smallest
    cardinality, tie-broken by lexicographically smallest member set.
    Every smallest-cardinality valid cut automatically has a connected
    complement, so the two minimality notions coincide here.
    """
    if p.k == 1:
        return Cut(frozenset(), {0: 1})
    if not _graph_connected_without(p, frozenset()):
        raise ValueError("neighbor graph is disconnected; no minimal cut")
    if p.k > 20:
        raise ValueError("minimal cut search is exhaustive; k > 20 unsupported")
    best = None
    for bits in range(1 << (p.k - 1)):
        o = [1] + [1 if (bits >> i) & 1 else -1 for i in range(p.k - 1)]
        members = frozenset(s.id for s in p.segments if o[s.left] == o[s.right])
        if not _graph_connected_without(p, members):
            continue
        key = (len(members), tuple(sorted(members)))
        if best is None or key < best[0]:
            best = (key, members, {i: o[i] for i in range(p.k)})
    assert best is not None  # the empty-or-spanning-tree argument guarantees one
    return Cut(best[1], best[2])


def _traversal_agreement(mesh, p: Partition, seg: BoundarySegment, i: int) -> int:
    """+1 when the stored segment direction agrees with the counterclockwise
    traversal of the boundary of subdomain ``i`` (2D), or when the segment
    point is the increasing-coordinate endpoint of ``i`` (1D)."""
    cells = set(int(c) for c in p.subdomains[i])
    if isinstance(mesh, CurveMesh):
        node = seg.nodes[0]
        left = mesh.left_cell_of_node(node)
        return 1 if left is not None and left in cells else -1
    u, v = seg.nodes[0], seg.nodes[1]
    for c in mesh.cells_of_edge(u, v):
        if c in cells:
            return 1 if mesh.has_directed_edge(c, u, v) else -1
    raise ValueError(f"subdomain {i} does not border segment {seg.id}")


def weights_from_orientations(p: Partition, mesh, domain_orient: dict,
                              segment_orient: dict) -> WeightAssignment:
    """Valid weights induced by orientation choices.

    The sign on side (i, a) is the traversal-direction parity of the shared
    polyline relative to the counterclockwise boundary of subdomain i,
    flipped by ``domain_orient[i]`` and ``segment_orient[a]``.
    """
    signs = {}
    for s in p.segments:
        for i in (s.left, s.right):
            agree = _traversal_agreement(mesh, p, s, i)
            signs[(i, s.id)] = agree * int(domain_orient[i]) * int(segment_orient[s.id])
    return WeightAssignment.from_dict(signs)


def maximal_cut_weights(p: Partition, mesh) -> WeightAssignment:
    """Weights with every segment cut (all subdomains equally oriented)."""
    return weights_from_orientations(p, mesh, {i: 1 for i in range(p.k)},
                                     {s.id: 1 for s in p.segments})


def minimal_cut_weights(p: Partition, mesh) -> WeightAssignment:
    """Weights inducing the minimal valid cut."""
    cut = minimal_valid_cut(p)
    return weights_from_orientations(p, mesh, cut.witness,
                                     {s.id: 1 for s in p.segments})


def random_valid_weights(p: Partition, mesh, rng=None) -> WeightAssignment:
    rng = np.random.default_rng(rng)
    dom = {i: int(rng.choice([-1, 1])) for i in range(p.k)}
    seg = {s.id: int(rng.choice([-1, 1])) for s in p.segments}
    return weights_from_orientations(p, mesh, dom, seg)


def enumerate_valid_weights(p: Partition, mesh) -> list:
    """All valid weights of a small partition (exhaustive over orientations)."""
    nseg = len(p.segments)
    if p.k + nseg > 16:
        raise ValueError("exhaustive weight enumeration limited to small partitions")
    seen = {}
    for dbits in range(1 << p.k):
        dom = {i: 1 if (dbits >> i) & 1 else -1 for i in range(p.k)}
        for sbits in range(1 << nseg):
            seg = {s.id: 1 if (sbits >> s.id) & 1 else -1 for s in p.segments}
            w = weights_from_orientations(p, mesh, dom, seg)
            seen[w.signs] = w
    return list(seen.values())


def weight_equivalence(p: Partition, w1: WeightAssignment, w2: WeightAssignment):
    """(edge_equivalent, domain_equivalent) per the two sign symmetries."""
    edge = all(segment_product(p, w1, s.id) == segment_product(p, w2, s.id)
               for s in p.segments)
    d1, d2 = w1.as_dict(), w2.as_dict()
    domain = True
    for i in range(p.k):
        ratios = {d1[(i, a)] * d2[(i, a)] for a in p.segments_of(i)}
        if len(ratios) > 1:
            domain = False
            break
    return edge, domain


# ----------------------------------------------------------------------------
# construction from cell labels (nodal extraction backend) and validation
# ----------------------------------------------------------------------------

def _connected_components_of_cells(mesh, cells):
    cells = sorted(int(c) for c in cells)
    cellset = set(cells)
    if isinstance(mesh, CurveMesh):
        adj = {}
        for c in cells:
            nbrs = []
            for nb in ((c - 1) % mesh.num_cells, (c + 1) % mesh.num_cells) if mesh.closed \
                    else [x for x in (c - 1, c + 1) if 0 <= x < mesh.num_cells]:
                if nb in cellset:
                    nbrs.append(nb)
            adj[c] = nbrs
    else:
        adj = {c: [] for c in cells}
        for ts in mesh.edges.values():
            inside = [t for t in ts if t in cellset]
            if len(inside) == 2:
                adj[inside[0]].append(inside[1])
                adj[inside[1]].append(inside[0])
    comps = []
    seen = set()
    for c in cells:
        if c in seen:
            continue
        comp = [c]
        seen.add(c)
        stack = [c]
        while stack:
            x = stack.pop()
            for nb in adj[x]:
                if nb not in seen:
                    seen.add(nb)
                    comp.append(nb)
                    stack.append(nb)
        comps.append(tuple(sorted(comp)))
    return comps


def _walk_chains(edge_pairs, breakpoints):
    """Split an edge set (pairs of nodes) into simple chains and loops."""
    adj = {}
    for (u, v) in edge_pairs:
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    for nbrs in adj.values():
        nbrs.sort()
    unused = {tuple(sorted(e)) for e in edge_pairs}
    chains = []

    def walk(start, nxt):
        path = [start, nxt]
        unused.discard(tuple(sorted((start, nxt))))
        while path[-1] not in breakpoints:
            here = path[-1]
            options = [w for w in adj[here] if tuple(sorted((here, w))) in unused]
            if not options:
                break
            nxt2 = options[0]
            unused.discard(tuple(sorted((here, nxt2))))
            path.append(nxt2)
        return path

    for b in sorted(breakpoints):
        if b not in adj:
            continue
        for w in list(adj[b]):
            if tuple(sorted((b, w))) in unused:
                chains.append(walk(b, w))
    while unused:  # leftover closed loops
        u, v = sorted(unused)[0]
        path = walk(u, v)
        if path[0] != path[-1]:
            path.append(path[0])  # close the loop explicitly
        chains.append(path)
    return chains


def partition_from_labels(mesh, labels) -> Partition:
    """Partition whose subdomains are the connected components of equal-label
    cells, with interface chains split at junction nodes."""
    labels = np.asarray(labels)
    if labels.shape[0] != mesh.num_cells:
        raise ValueError("one label per cell required")
    comps = []
    for lab in np.unique(labels):
        comps.extend(_connected_components_of_cells(mesh, np.where(labels == lab)[0]))
    comps.sort(key=lambda c: c[0])
    comp_of_cell = {}
    for ci, comp in enumerate(comps):
        for c in comp:
            comp_of_cell[c] = ci

    if isinstance(mesh, CurveMesh):
        segments = []
        n = mesh.num_nodes
        for node in range(n):
            lc = mesh.left_cell_of_node(node)
            rc = node % n if mesh.closed else (node if node < mesh.num_cells else None)
            if lc is None or rc is None:
                continue
            ci, cj = comp_of_cell[lc], comp_of_cell[rc]
            if ci != cj:
                segments.append(BoundarySegment(len(segments), min(ci, cj), max(ci, cj), (node,)))
        return Partition(1, tuple(comps), tuple(segments))

    change_edges = []
    pair_of_edge = {}
    for (u, v), ts in mesh.edges.items():
        if len(ts) != 2:
            continue
        ci, cj = comp_of_cell[ts[0]], comp_of_cell[ts[1]]
        if ci != cj:
            change_edges.append((u, v))
            pair_of_edge[(u, v)] = (min(ci, cj), max(ci, cj))
    degree = {}
    for (u, v) in change_edges:
        degree[u] = degree.get(u, 0) + 1
        degree[v] = degree.get(v, 0) + 1
    breakpoints = {n for n, d in degree.items() if d != 2}
    breakpoints |= {n for n in degree if n in mesh.boundary_nodes}
    chains = _walk_chains(change_edges, breakpoints)
    segments = []
    for path in chains:
        pair = pair_of_edge[tuple(sorted((path[0], path[1])))]
        for u, v in zip(path, path[1:]):
            if pair_of_edge[tuple(sorted((u, v)))] != pair:
                raise ValueError("interface chain crosses a subdomain-pair change")
        segments.append(BoundarySegment(len(segments), pair[0], pair[1], tuple(path)))
    return Partition(2, tuple(comps), tuple(segments))


def validate_partition(mesh, p: Partition, require_cover: bool = True) -> None:
    """Raise ValueError on structural defects."""
    if p.k < 1:
        raise ValueError("need at least one subdomain")
    all_cells = [c for sub in p.subdomains for c in sub]
    if len(set(all_cells)) != len(all_cells):
        raise ValueError("subdomain cell sets are not disjoint")
    if require_cover and len(all_cells) != mesh.num_cells:
        raise ValueError("subdomains do not cover the mesh")
    for i, sub in enumerate(p.subdomains):
        if not sub:
            raise ValueError(f"subdomain {i} is empty")
        if not _region_connected_cells(mesh, sub):
            raise ValueError(f"subdomain {i} is not connected")
    if p.k >= 2 and not p.segments:
        raise ValueError("multi-subdomain partition has no segments")
    endpoint_use = {}
    for s in p.segments:
        if s.left >= p.k or s.right >= p.k:
            raise ValueError("segment references unknown subdomain")
        if p.dim == 2:
            if len(s.nodes) < 2:
                raise ValueError(f"2D segment {s.id} needs a polyline")
            interior = s.nodes[1:-1] if not s.is_closed else s.nodes[1:-1]
            if len(set(interior)) != len(interior):
                raise ValueError(f"segment {s.id} polyline is not simple")
            for u, v in zip(s.nodes, s.nodes[1:]):
                if (min(u, v), max(u, v)) not in mesh.edges:
                    raise ValueError(f"segment {s.id} leaves the mesh edges")
                cells = mesh.cells_of_edge(u, v)
                if len(cells) != 2:
                    raise ValueError(f"segment {s.id} runs along the outer boundary")
                subs = {_subdomain_of_cell(p, c) for c in cells}
                if subs != {s.left, s.right}:
                    raise ValueError(f"segment {s.id} does not separate its subdomains")
            for e in s.endpoints():
                endpoint_use[e] = endpoint_use.get(e, 0) + 1
        else:
            if len(s.nodes) != 1:
                raise ValueError("1D segments are single points")
    # nodes shared between several segments must be endpoints of each
    if p.dim == 2:
        interior_nodes = {}
        for s in p.segments:
            rng = s.nodes[1:-1]
            for n in rng:
                interior_nodes.setdefault(n, set()).add(s.id)
        for n, segs in interior_nodes.items():
            if len(segs) > 1 or n in endpoint_use:
                raise ValueError(f"node {n} is interior to a segment but shared; split at junctions")


def _subdomain_of_cell(p: Partition, c: int) -> int:
    for i, sub in enumerate(p.subdomains):
        if c in sub:
            return i
    raise ValueError(f"cell {c} belongs to no subdomain")


def _region_connected_cells(mesh, cells) -> bool:
    comps = _connected_components_of_cells(mesh, cells)
    return len(comps) == 1


# ----------------------------------------------------------------------------
# JSON serialization
# ----------------------------------------------------------------------------

def partition_to_json(p: Partition, w: Optional[WeightAssignment] = None) -> dict:
    doc = {
        "schema_version": 1,
        "dim": p.dim,
        "subdomains": [list(map(int, sub)) for sub in p.subdomains],
        "segments": [
            {"id": s.id, "left": s.left, "right": s.right, "nodes": list(map(int, s.nodes))}
            for s in p.segments
        ],
    }
    if w is not None:
        doc["signs"] = [
            {"subdomain": i, "segment": a, "sign": sgn}
            for (i, a), sgn in w.signs
        ]
    return doc


def partition_from_json(doc: dict):
    try:
        dim = int(doc["dim"])
        subdomains = tuple(tuple(int(c) for c in sub) for sub in doc["subdomains"])
        segments = tuple(
            BoundarySegment(int(s["id"]), int(s["left"]), int(s["right"]),
                            tuple(int(n) for n in s["nodes"]))
            for s in doc["segments"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed partition document: {exc}") from exc
    p = Partition(dim, subdomains, segments)
    w = None
    if "signs" in doc:
        w = weights_from_json(doc["signs"])
    return p, w


def weights_to_json(w: WeightAssignment) -> list:
    return [{"subdomain": i, "segment": a, "sign": s} for (i, a), s in w.signs]


def weights_from_json(records) -> WeightAssignment:
    try:
        d = {(int(r["subdomain"]), int(r["segment"])): int(r["sign"]) for r in records}
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed weights document: {exc}") from exc
    return WeightAssignment.from_dict(d)
