"""Covariance-matrix criteria for quantum network states."""

from .linalg import (
    SubsystemLayout,
    eigvals_hermitian,
    is_psd,
    khatri_rao,
    kron,
    partial_trace,
    permute_subsystems,
    psd_project,
    trace_norm,
)
from .ncmx import read_matrix, write_matrix
from .states import (
    DensityOperator,
    KrausChannel,
    apply_local_channels,
    apply_local_unitaries,
    bell_pair,
    btn_assemble,
    cluster4_state,
    convex_mix,
    dicke_state,
    ghz_state,
    maximally_mixed,
    mix_white_noise,
    network_state,
    pure_state,
    split_nodes,
    triangle_layout,
    w_state,
)
from .observables import (
    Observable,
    ObservableSet,
    OrthogonalBasis,
    embed,
    full_product_set,
    named_observable_set,
    orthogonal_basis,
    orthogonal_from_unitary,
    pauli_basis,
    product_observable_set,
    reduced_observable,
)
from .covariance import (
    BlockCovarianceMatrix,
    block,
    cm_of,
    covariance_matrix,
    load_cm,
    mean_vector,
    product_state_cm,
    recombine_cm,
    save_cm,
)
from .topology import NetworkTopology, SourceMask, block_pattern, is_ncds, line_topology, triangle_topology
from .criteria import (
    BtnDecomposition,
    CriterionReport,
    btn_cm_residual,
    btn_decompose,
    ghz_fidelity_bound,
    trace_norm_criterion,
    visibility_threshold,
    xi_matrix,
    xi_report,
)
from .feasibility import FeasibilityOutcome, FeasibilityProblem, solve, verify_witness

__version__ = "0.1.0"
