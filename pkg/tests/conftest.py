"""Shared builders for the test suite."""

import numpy as np
import pytest

from nodaldtn import fem, glued
from nodaldtn import partition as pt
from nodaldtn.mesh import circle_mesh, disk_mesh, rect_mesh

RECT_A = np.pi
RECT_B = np.pi / np.sqrt(2)


def rect_case(index, nx=30, ny=20):
    """Nodal-partition pipeline inputs for eigenfunction ``index`` of the
    rectangle (0, pi) x (0, pi/sqrt(2))."""
    mesh = rect_mesh(RECT_A, RECT_B, nx, ny)
    pencil = fem.assemble_dirichlet(mesh, range(mesh.num_cells))
    pairs = fem.eigensolve(pencil, ("lowest", index))
    full = np.zeros(mesh.num_nodes)
    full[pencil.free_nodes] = pairs[index - 1].vector
    partition = glued.extract_nodal_partition(mesh, full)
    return mesh, partition, pairs[index - 1].value


def circle_fem_case(k, n_nodes):
    """1D FEM circle equipartition with the alternating-sign weights."""
    mesh = circle_mesh(n_nodes)
    labels = np.repeat(np.arange(k), n_nodes // k)
    partition = pt.partition_from_labels(mesh, labels)
    dom = {i: (-1) ** i for i in range(k)}
    weights = pt.weights_from_orientations(
        partition, mesh, dom, {s.id: 1 for s in partition.segments})
    return mesh, partition, weights


def mercedes_partition(h=0.3):
    """Three disk sectors meeting at the center, cut at 0/120/240 degrees."""
    mesh = disk_mesh(1.0, h)
    cent = mesh.nodes[mesh.triangles].mean(axis=1)
    ang = np.mod(np.arctan2(cent[:, 1], cent[:, 0]), 2 * np.pi)
    labels = np.digitize(ang, [2 * np.pi / 3, 4 * np.pi / 3])
    partition = pt.partition_from_labels(mesh, labels)
    return mesh, partition


def checkerboard_partition(n=4):
    """2x2 block partition of the unit square (bipartite)."""
    mesh = rect_mesh(1.0, 1.0, n, n)
    cent = mesh.nodes[mesh.triangles].mean(axis=1)
    labels = (cent[:, 0] > 0.5).astype(int) + 2 * (cent[:, 1] > 0.5).astype(int)
    return mesh, pt.partition_from_labels(mesh, labels)


def brute_force_valid_cut(partition, members):
    """Exhaustive oracle for cut validity: try all 2^k orientations."""
    members = frozenset(members)
    k = partition.k
    for bits in range(1 << k):
        o = [(bits >> i) & 1 for i in range(k)]
        ok = True
        for s in partition.segments:
            same = o[s.left] == o[s.right]
            if same != (s.id in members):
                ok = False
                break
        if ok:
            return {i: 1 if o[i] == 0 else -1 for i in range(k)}
    return None


def graph_partition(k, edges):
    """Combinatorics-only partition: one dummy cell and point per segment."""
    segs = tuple(
        pt.BoundarySegment(a, min(i, j), max(i, j), (a,))
        for a, (i, j) in enumerate(edges))
    return pt.Partition(1, tuple((i,) for i in range(k)), segs)


@pytest.fixture(scope="session")
def rect_cases_coarse():
    return {idx: rect_case(idx) for idx in (2, 3, 4, 5, 6)}
