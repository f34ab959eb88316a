"""Chaotic spin-bath decoherence toolkit.

Simulates a detector qubit coupled to a disordered, chaos-tunable spin
bath two ways: exact Schrodinger propagation of the full system with a
thermal average over bath eigenstates, and a unitary-ensemble channel
built from the diagonal coupling elements in the bath eigenbasis.  Chaos
diagnostics (level-spacing statistics, ground-state echo) and comparison
harness included.
"""

from .diagnostics import (
    EchoSeries,
    SpacingStatistics,
    echo_decay_rate,
    fidelity,
    loschmidt_echo,
    purity,
    spacing_distribution,
    unfold_spectrum,
    unfold_with_fallback,
)
from .dynamics import (
    SUPERPOSITION_STATE,
    Trajectory,
    check_density,
    exact_reduced_trajectory,
    partial_trace_bath,
    propagate,
)
from .errors import (
    CapacityError,
    ChaosbathError,
    ConfigError,
    NumericError,
    UnfoldingError,
    ValidationError,
)
from .harness import (
    ComparisonReport,
    ExperimentSpec,
    load_experiment,
    run_chaos_suite,
    run_experiment,
    run_full,
)
from .kraus import (
    KrausEnsemble,
    QubitBranchCoefficients,
    build_ensemble,
    choi_matrix,
    completeness_residual,
    propagate_kraus,
    qubit_closed_form,
)
from .model import (
    ModelConfig,
    ModelParameters,
    OperatorMatrix,
    PauliTerm,
    apply_hamiltonian,
    assemble_hamiltonians,
    load_config,
    sample_parameters,
)
from .spectral import (
    BathSpectrum,
    CouplingMatrix,
    boltzmann_weights,
    coupling_matrix_elements,
    diagonalize_bath,
    offdiag_suppression,
    thermal_bath,
)

__version__ = "0.1.0"
