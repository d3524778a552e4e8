"""Numerics for nodal partitions of planar and one-dimensional domains.

The package builds the sign-weighted Laplacian attached to a partition and a
choice of boundary weights, the two-sided weighted Dirichlet-to-Neumann
operator at the common ground energy, and the Robin eigenvalue flow that
connects the two.  The headline integer identities it verifies are

    defect  = ell - k      = Morse index of the DtN operator,
    multiplicity of lambda = dim ker(DtN) + 1,
    defect                 = number of Robin branches crossing lambda,

for partitions satisfying the strong pair compatibility condition.
"""

from .mesh import (
    Mesh, CurveMesh, generate_mesh, rect_mesh, disk_mesh, polygon_mesh,
    circle_mesh, graded_circle_mesh, interval_mesh, read_mesh, write_mesh,
)
from .partition import (
    Partition, BoundarySegment, NeighborGraph, WeightAssignment, Cut,
    build_neighbor_graph, is_bipartite, weights_from_orientations,
    cut_from_weights, is_valid_cut, minimal_valid_cut, weight_equivalence,
    maximal_cut_weights, minimal_cut_weights, random_valid_weights,
    enumerate_valid_weights, partition_from_labels, validate_partition,
    partition_to_json, partition_from_json, weights_to_json, weights_from_json,
)
from .fem import (
    SparsePencil, EigenPair, Region, assemble_region, assemble_dirichlet,
    eigensolve, count_below, cluster_eigenvalues, boundary_mass,
    variational_normal_derivative, recover_pointwise_normal,
)
from .glued import (
    GluedSpace, GluedPencil, GroundData, ChiNodalReport, build_glued_space,
    assemble_weighted, spectrum_weighted, extract_nodal_partition, check_spcc,
    compute_ground_data, phi_star_vector, polish_partition, lambda_band,
    align_cluster_representative,
)
from .dtn import (
    SubspaceS, DtNOperator, CanonicalSystem, BvpCompatibilityError,
    build_subspace_S, solve_bvp_orthogonal, two_sided_trace, assemble_dtn,
    index_and_kernel, canonical_solution, kernel_tolerance,
)
from .flow import (
    FlowBranchSet, reduced_spectrum, trace_branches, crossing_count,
    locate_crossing, robin_duality_check,
)
from .exact1d import (
    OneDPartition, OneDReport, anti_periodic_spectrum, periodic_spectrum,
    circle_partition, interval_partition, circle_report, interval_report,
    exact_dtn_1d, solve_arc_bvp,
)

__version__ = "0.1.0"
