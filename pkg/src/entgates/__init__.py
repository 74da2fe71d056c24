"""Entanglement-assisted nonlocal gates: simulation, optimization, compilation.

Subpackages:
  linalg    dense states/operators, tensor products, the expm oracle
  protocol  exact stage-protocol simulation with forced or sampled outcomes
  optimizer expected-ebit minimization over stage schedules
  comm      typical-set compression and communication accounting
  compiler  tensor-product Hamiltonian -> collective-Z schedules
  general   the controlled-V protocol for U = sum_k lambda_k (x)_j V_k^(j)
  cli       reproducibility harness (figures, reports, verification)
"""
from ._backend import active_backend, HAS_NUMBA
from .linalg import (
    OperatorMatrix,
    StateVector,
    Stator,
    binary_entropy,
    expm_oracle,
    op_distance_phase_invariant,
    project_subsystem,
    resource_entanglement,
    resource_state,
    tensor,
)
from .protocol import (
    Forced,
    StageParams,
    StageSchedule,
    Transcript,
    canon_angle,
    doubling_schedule,
    failure_residual,
    fold_pi,
    gamma_for,
    run_deterministic_stage,
    run_protocol,
    run_stage,
)
from .optimizer import (
    BASELINE_EBIT_RATE,
    OPTIMIZED_EBIT_RATE,
    CostProfile,
    EntanglementOptimizer,
    OptimizerConfig,
    asymptotic_bound,
    baseline_cost,
    baseline_dyadic_cost,
    expected_cost,
    optimize_schedule,
    shared_optimizer,
    sweep_entanglement_curve,
)
from .comm import (
    CommProfile,
    TypicalSetReport,
    block_fourier_stage,
    compressed_state_fidelity,
    leader_comm_rate,
    leader_ratio_curve,
    log_ratio_fit,
    optimize_leader_comm,
    typical_set,
    worker_comm_rate,
)
from .compiler import (
    CompiledSchedule,
    DiagonalizedForm,
    HamiltonianSpec,
    compile_factor_step,
    compile_sum,
    cost_estimate,
    diagonalize,
    evaluate_schedule,
    load_hamiltonian,
)
from .compiler import compile as compile_hamiltonian
from .general import (
    GeneralForced,
    ResourceDesign,
    TensorDecomposition,
    canonical_two_qubit,
    design_resource,
    diagonal_family,
    failure_policy_cost,
    failure_vanishing_check,
    run_general_protocol,
    success_probability,
)

__version__ = "0.1.0"
