"""Wigner-function propagation in quadratic potentials, with harmonic-bath influence phases."""

__version__ = "0.1.0"

from .caldeira_leggett import (
    CLParams,
    GaussianMomentum,
    LangevinEnsemble,
    MomentumGrid,
    MomentumKernel,
    effective_temperature,
    estimate_phase_space_kernel,
    langevin_sample,
    momentum_kernel,
    propagate_momentum_marginal,
)
from .dynamics import (
    AffineSymplecticMap,
    Coefficient,
    QuadraticPotential,
    classical_action,
    classical_trajectory,
    flow_map,
    solve_homogeneous,
)
from .influence import (
    Coupling,
    InfluencePhase,
    MemoryKernels,
    OscillatorSpec,
    PacketParams,
    PathPair,
    SpectralDensity,
    Thermal,
    Vacuum,
    kernels_from_spectral_density,
    phase_collection,
    phase_continuum,
    phase_gaussian_packet,
    phase_single_general,
    phase_thermal,
    phase_vacuum,
)
from .propagator import liouville_oracle, propagate, propagate_gaussian, propagate_grid
from .states import (
    DensityMatrixGrid,
    GaussianWignerState,
    GridWignerState,
    gaussian_packet,
    thermal_oscillator,
    weyl_to_wigner,
    wigner_to_weyl,
)
