"""Quantum state tomography of spin-l systems from spin-component statistics."""

from .basis import (
    BasisLabel,
    CoefficientVector,
    OperatorBasis,
    complete_basis,
    decompose,
    extremal_pair,
    reconstruct_from_coefficients,
    spin1_named_operators,
)
from .bipartite import (
    JointRecord,
    ProductBasis,
    ProductCoefficients,
    correlated_moment,
    joint_distribution,
    reconstruct_bipartite,
)
from .decoherence import evolve_closed_form, evolve_numeric, lindblad_rhs, misalignment_factor
from .measurement import (
    MeasurementRecord,
    OutcomeDistribution,
    RecordEntry,
    moments,
    outcome_distribution,
    predict_moment,
    sample_counts,
)
from .spin import DensityMatrix, Direction, SpinLength, build_spin_operators, projector_family, spin_component
from .tomography import (
    PAPER_SPIN1_FIVE,
    DirectionSet,
    ReconstructionReport,
    build_design_matrix,
    consistency_residuals,
    psd_project,
    reconstruct_linear,
    reconstruct_spin1_explicit,
)

__version__ = "0.1.0"
