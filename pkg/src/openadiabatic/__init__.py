"""Adiabaticity of open quantum systems via Jordan decompositions of Lindblad generators."""
from .conditions import (
    ClosedConditionReport,
    OpenConditionReport,
    closed_condition,
    count_M,
    count_N,
    enumerate_multi_indices,
    eta_theorem1,
    heuristic_condition,
    open_condition,
    time_condition,
)
from .errors import (
    EigenvalueCrossingError,
    JordanError,
    ModelError,
    NonHermitianError,
    StructureAmbiguityError,
    StructureChangeError,
    TrackingError,
)
from .evolution import (
    Trajectory,
    bloch_trajectory,
    integrate_exact,
    integrate_r_adiabatic,
    integrate_r_exact,
    integrate_schrodinger,
    leakage,
    project_to_blocks,
)
from .jordan import (
    JordanBlock,
    JordanDecomposition,
    TrackedDecomposition,
    basis_derivative,
    chain_bases,
    jordan_decompose,
    track_decomposition,
)
from .lindblad import (
    Schedule,
    TimeDependentOperator,
    TimeDependentSuperoperator,
    apply_generator,
    supermatrix,
    supermatrix_derivative,
)
from .models import (
    TwoLevelModel,
    analytic_solution,
    build_two_level,
    load_model,
    save_model,
    symmetry_condition_value,
)
from .operator_space import OperatorBasis, build_basis, devectorize, hs_inner, vectorize

__version__ = "0.1.0"
