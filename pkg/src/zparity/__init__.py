"""Simulator and analysis library for repeated non-destructive three-qubit
parity measurements on a nuclear-spin register with a readout ancilla."""

__version__ = "0.1.0"

from .errors import ConfigError, InvariantError, ZparityError
from .qmat import (
    DensityMatrix,
    DensityViolation,
    StateVector,
    basis_state,
    fidelity,
    kron,
    maximally_mixed,
    partial_trace,
    validate_density,
)
from .pauli import (
    PARITY_OBSERVABLES,
    PARITY_XXX,
    PARITY_XYY,
    PARITY_YXY,
    PARITY_YYX,
    PauliString,
    ProjectorPair,
    commutes,
    compatible_set,
    multiply,
    projectors,
    single_site,
    to_matrix,
)
from .instrument import (
    Branch,
    Channel,
    Instrument,
    OutcomeRecord,
    ReadoutModel,
    apply_instrument,
    dephasing_channel,
    depolarizing_channel,
    ideal_parity_instrument,
    noisy_parity_instrument,
    parity_preservation,
    parity_segment_instrument,
    sample_instrument,
)
from .sequencer import (
    ControlSequence,
    PhaseTracker,
    Schedule,
    SequenceSegment,
    compile,
    count_branches,
    execute,
    sequence_to_json,
)
from .calibration import (
    FitReport,
    NoiseParams,
    ReadoutRecords,
    config_hash,
    fit_readout,
    load_config,
    log_likelihood,
    save_config,
    simulate_repeated_readout,
)
from .experiments import (
    CONTEXTS,
    ContextResult,
    GhzReport,
    NciReport,
    SingleShotReport,
    ZenoReport,
    ghz_target,
    nchv_bound,
    nchv_c_value,
    nchv_context_values,
    p_value,
    run_ghz_generation,
    run_nci,
    run_single_shot_ghz,
    run_zeno_study,
    standard_error,
)
