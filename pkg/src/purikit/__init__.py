"""Simultaneous purification of non-signalling assemblages and Bell models
of the communication scenarios they compose into."""

from .assemblages import (
    Assemblage,
    AssemblageReport,
    MarginalReport,
    assemble,
    marginals,
    random_non_signalling,
    random_povm,
    sample_purified,
    validate,
)
from .errors import (
    CapacityError,
    DimensionError,
    InconsistencyError,
    NotPSDError,
    ParseError,
    PurikitError,
    SignallingError,
)
from .linalg import (
    Factor,
    SpaceLayout,
    apply_choi,
    choi_from_kraus,
    link_product,
    partial_trace,
    partial_transpose,
    psd_pow,
    tensor,
)
from .objectsets import (
    ProjectorSpec,
    QuantumObjectSet,
    ValidityReport,
    channel_set,
    comb_set,
    extend_set,
    is_valid_object,
    measurement_set,
    project,
    random_pure_object,
    state_set,
)
from .purification import (
    IsometricDilation,
    KrausFamily,
    Purification,
    minimal_kraus,
    purify_instrument_kraus,
    purify_object,
    purify_states,
    verify_dilation,
    verify_purification,
)
from .scenarios import (
    BellModel,
    Correlations,
    LHVModel,
    Node,
    ProcessMatrixSpec,
    Scenario,
    Wire,
    bell_from_chain,
    bell_from_dag,
    bell_from_loop,
    bell_from_process_matrix,
    bell_from_scenario,
    causal_process_matrix,
    chain_scenario,
    direct_correlations,
    eval_bell,
    eval_direct,
    eval_lhv,
    eval_process_matrix,
    loop_scenario,
    process_matrix_correlations,
)
from .steering import (
    SteeringFailure,
    UnsteerableDecomposition,
    bell_xz_assemblage,
    compose_classical,
    find_unsteerable,
    planted_unsteerable,
    verify_unsteerable,
)

__version__ = "0.1.0"
