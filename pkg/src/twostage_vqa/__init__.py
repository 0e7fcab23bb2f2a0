"""Two-stage (convex warm start + nonconvex refinement) optimization for
variational quantum circuits, with a BB84 cloning-attack testbed."""

__version__ = "0.1.0"

from .sim import (
    ChannelMode,
    Circuit,
    DensityMatrix,
    Gate,
    NoiseSpec,
    SimulationError,
    StateVector,
    apply_circuit,
    apply_depolarizing,
    apply_gate,
    expectation_z,
    partial_trace,
    sample_z,
    state_fidelity,
)
from .observables import ObservableSpec
from .ansatz import (
    AnsatzSpec,
    InitScheme,
    angle_encode,
    build_pqc3,
    expectation_value,
    grad_parameter_shift,
    init_params,
)
from .cloning import (
    CloningSetup,
    FidelityReport,
    average_fidelity,
    clone_fidelities,
    pccm_bound,
)
from .losses import (
    ConvexLossSpec,
    LinearizedSystem,
    LossError,
    build_linearized_system,
    convex_cloning_surrogate,
    convex_loss,
    energy_loss,
    hessian_psd_check,
    nonconvex_cloning_loss,
    ridge_objective,
    ridge_solve,
)
from .optimizer import (
    ConvergenceReport,
    LossHandle,
    OptimizationError,
    ProblemHandle,
    TrainingTrace,
    TwoStageConfig,
    check_descent_inequality,
    estimate_smoothness,
    run_two_stage,
    stage1_convex,
    stage2_refine,
)
from .experiments import (
    iteration_curve,
    layer_sweep,
    make_cloning_problem,
)
from .diagnostics import (
    GradientVarianceReport,
    VarianceSweepSpec,
    gradient_variance_sweep,
    warm_start_gradient_audit,
)
from .config import ConfigError, ExperimentConfig, load_config, save_config
from .runner import run_experiment

__all__ = [
    "AnsatzSpec",
    "ChannelMode",
    "Circuit",
    "CloningSetup",
    "ConfigError",
    "ConvergenceReport",
    "ConvexLossSpec",
    "DensityMatrix",
    "ExperimentConfig",
    "FidelityReport",
    "Gate",
    "GradientVarianceReport",
    "InitScheme",
    "LinearizedSystem",
    "LossError",
    "LossHandle",
    "NoiseSpec",
    "ObservableSpec",
    "OptimizationError",
    "ProblemHandle",
    "SimulationError",
    "StateVector",
    "TrainingTrace",
    "TwoStageConfig",
    "VarianceSweepSpec",
    "angle_encode",
    "apply_circuit",
    "apply_depolarizing",
    "apply_gate",
    "average_fidelity",
    "build_linearized_system",
    "build_pqc3",
    "check_descent_inequality",
    "clone_fidelities",
    "convex_cloning_surrogate",
    "convex_loss",
    "energy_loss",
    "estimate_smoothness",
    "expectation_value",
    "expectation_z",
    "grad_parameter_shift",
    "gradient_variance_sweep",
    "hessian_psd_check",
    "init_params",
    "iteration_curve",
    "layer_sweep",
    "load_config",
    "make_cloning_problem",
    "nonconvex_cloning_loss",
    "partial_trace",
    "pccm_bound",
    "ridge_objective",
    "ridge_solve",
    "run_experiment",
    "run_two_stage",
    "sample_z",
    "save_config",
    "stage1_convex",
    "stage2_refine",
    "state_fidelity",
    "warm_start_gradient_audit",
]
