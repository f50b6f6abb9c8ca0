"""Smoothed policy iteration for discrete mean field games."""

from .coupling import (
    BoundCoupling,
    Kernel,
    LocalCoupling,
    NonlocalCoupling,
    UnsupportedPotential,
    discrete_energy,
    monotonicity_probe,
)
from .grid import BC, GridError, GridSpec, Policy, divergence, laplacian, mass, two_sided_gradient
from .hamiltonian import HamiltonianSpec, extract_policy
from .io import write_run_outputs
from .scenarios import PRESETS, Scenario, ScenarioError, load_scenario, sample_initial_density
from .spi import (
    Algorithm,
    Certification,
    InvariantViolation,
    IterationReport,
    Schedule,
    SolveResult,
    SolverConfig,
    certify_fixed_point,
    run_policy_iteration,
    run_spi1,
    run_spi2,
    solve,
)
from .steppers import assemble_transport_matrices, fpk_forward_sweep, hjb_backward_sweep

__all__ = [
    "Algorithm", "BC", "BoundCoupling", "Certification", "GridError", "GridSpec",
    "HamiltonianSpec", "InvariantViolation", "IterationReport", "Kernel", "LocalCoupling",
    "NonlocalCoupling", "PRESETS", "Policy", "Scenario", "ScenarioError", "Schedule",
    "SolveResult", "SolverConfig", "UnsupportedPotential", "assemble_transport_matrices",
    "certify_fixed_point", "discrete_energy", "divergence", "extract_policy",
    "fpk_forward_sweep", "hjb_backward_sweep", "laplacian", "load_scenario", "mass",
    "monotonicity_probe", "run_policy_iteration", "run_spi1", "run_spi2",
    "sample_initial_density", "solve", "two_sided_gradient", "write_run_outputs",
]
