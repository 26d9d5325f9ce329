"""Dissipative hydrogen-atom spectroscopy via a bath hierarchy propagator."""

__version__ = "0.1.0"

from .basis import (
    BasisSet,
    OperatorMatrix,
    QuantumNumbers,
    dipole_operator_matrix,
    eigenenergy,
    enumerate_basis,
    hamiltonian_matrix,
    position_operator_matrix,
    radial_integral,
    radial_wavefunction,
    real_spherical_harmonic,
)
from .bath import (
    BathSpec,
    PadeScheme,
    ThetaCoefficients,
    bose_function,
    drude_sdf,
    pade_decomposition,
    theta_coefficients,
)
from .hierarchy import (
    ADOIndex,
    HierarchyIndexSpace,
    damping_rate,
    enumerate_indices,
    neighbor,
)
from .propagator import (
    HierarchyState,
    ModelContext,
    PropagatorConfig,
    boltzmann_initial,
    build_model,
    diagnostics,
    equilibrate,
    heom_rhs,
    load_checkpoint,
    propagate,
    rk4_step,
    save_checkpoint,
)
from .spectroscopy import (
    ResponseTrace,
    Spectrum,
    StickSpectrum,
    apply_dipole_commutator,
    compute_response,
    convolve_sticks,
    golden_rule_spectrum,
    rydberg_frequency,
    spectrum_from_response,
)

__all__ = [name for name in dir() if not name.startswith("_")]
