"""Deterministic dense coding with partially entangled states.

Numerical feasibility of N-message encodings at a given Schmidt spectrum,
maximal alphabets, phase-boundary mapping over the ordered simplex, and
audits of the structural constraints that pin where the alphabet bound
lambda_0 <= d/N can be reached.
"""

from .spectra import (
    BipartiteState,
    LambdaMatrix,
    NegativeCoefficient,
    NotNormalized,
    NotSorted,
    SchmidtSpectrum,
    SpectrumError,
    lambda_matrix,
    make_spectrum,
    mes,
    product_state,
    state_coefficients,
)
from .orthogonality import (
    GramMatrix,
    MessageSetError,
    UnitaryMessageSet,
    gram,
    lambda_inner,
    max_abs_overlap,
    residual,
    shift_set,
)
from .unitary_solver import (
    AlphabetError,
    FeasibilityReport,
    PolishResult,
    SolverConfig,
    cost_and_gradient,
    find_messages,
    max_alphabet,
    polish,
)
from .kraus import (
    CompletenessViolation,
    KrausError,
    KrausMessage,
    KrausMessageSet,
    LinearDependence,
    MessageDensity,
    OperatorBoundReport,
    cross_orthogonality_residual,
    effective_unitary,
    find_kraus_messages,
    make_kraus_message,
    message_density,
    message_purities,
    operator_bound_check,
    purity,
    theorem2_audit,
    unitary_message,
)
from .theorems import (
    BrualdiVerdict,
    PhiGramReport,
    Theorem1Report,
    block_form_deviation,
    brualdi_covers,
    corner_spectrum,
    lemma_overlaps,
    overlap_bound,
    reshape_phi,
    theorem1_audit,
)
from .phasemap import (
    BisectionResult,
    BracketError,
    PhaseDiagram,
    Ray,
    boundary_bisect,
    export_diagram,
    import_diagram,
    map_diagram,
    ordered_simplex_grid,
    ray_from_mes,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
