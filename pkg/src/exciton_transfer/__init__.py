"""Open-system simulation of excitation transfer between coupled two-level monomers."""
__version__ = "0.1.0"

from .analysis import (concurrence, fgr_rate, fit_equilibration, resonance_scan,
                       transfer_rate)
from .errors import (ContractViolation, ConvergenceError, CutoffWarning, FitError,
                     IntegrationFailure, InvalidModelError, UndefinedRateError)
from .hilbert import (FockSpace, JointOperator, ManifoldBasis, boson_ops, build_manifold_basis,
                      reduced_two_qubit_state, sigma_z_manifold)
from .lindblad import (ChannelSet, DensityMatrix, Trajectory, cutoff_convergence, evolve,
                       initial_state, simulate, steady_state)
from .model import (ModelParams, build_hamiltonian, exciton_couplings_dimer,
                    intermonomer_coupling_table, monomer_exciton_basis, sample_disorder)

__all__ = [
    "ChannelSet", "ContractViolation", "ConvergenceError", "CutoffWarning", "DensityMatrix",
    "FitError", "FockSpace", "IntegrationFailure", "InvalidModelError", "JointOperator",
    "ManifoldBasis", "ModelParams", "Trajectory", "UndefinedRateError", "boson_ops",
    "build_hamiltonian", "build_manifold_basis", "concurrence", "cutoff_convergence", "evolve",
    "exciton_couplings_dimer", "fgr_rate", "fit_equilibration", "initial_state",
    "intermonomer_coupling_table", "monomer_exciton_basis", "reduced_two_qubit_state",
    "resonance_scan", "sample_disorder", "sigma_z_manifold", "simulate", "steady_state",
    "transfer_rate",
]
