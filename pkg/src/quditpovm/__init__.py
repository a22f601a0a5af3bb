"""Ancilla-free generalized qubit measurements in a four-level qudit."""

__version__ = "0.1.0"

from .estimation import (
    EstimationReport,
    OutcomeHistogram,
    bias,
    estimate_expectation,
    mitigated_estimate,
    sample_outcomes,
    scatter_export,
)
from .naimark import (
    GateSequence,
    Givens,
    PulseSchedule,
    RPulse,
    VirtualZ,
    build_naimark_unitary,
    compile_schedule,
    givens_decompose,
    ideal_unitary_of_schedule,
    povm_from_unitary,
    schedule_demo,
    to_sqrtx_sequence,
)
from .povm import (
    Observable,
    Povm,
    PovmError,
    ProductPovm,
    QubitState,
    decompose_observable,
    demo_povm,
    estimator_variance,
    expectation_from_probs,
    operational_distance,
    outcome_probabilities,
    projective_z_povm,
    sic_povm,
    total_variation,
    validate_povm,
)
from .pulse_sim import (
    CalibrationResult,
    DriveConfig,
    NoiseChannel,
    average_gate_fidelity,
    budgeted_schedule,
    calibrate_sqrtx,
    charge_noise_channel,
    povm_schedule,
    propagate,
    simulated_povm,
    sweep_ejec,
)
from .tomography import (
    ConfusionMatrix,
    CountsTable,
    linear_inversion,
    measured_readout_confusion,
    mitigate_readout,
    ml_tomography,
    reference_states,
    sample_counts,
    tomo_scaling_experiment,
)
from .transmon import (
    DecayModel,
    Spectrum,
    TransmonParams,
    anharmonicity,
    calibrate_params,
    calibrate_to_anharmonicity,
    charge_dispersion,
    decay_evolve,
    decay_fit,
    diagonalize,
    spectrum,
)

__all__ = [name for name in dir() if not name.startswith("_")]
