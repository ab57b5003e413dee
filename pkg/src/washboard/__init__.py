"""Vibrational-state control in a 1-D optical lattice: bands, displacement pulses, echoes."""

__version__ = "0.1.0"

from .lattice import (  # noqa: E402
    BandStructure,
    BlochSolution,
    LatticeConfig,
    SolverError,
    band_structure,
    lz_lifetimes,
    solve_bands,
    wannier,
)
from .pulses import BandAmplitudes, PulseSpec, apply_pulse, displacement_matrix, free_evolution, make_pulse, pulse_matrix  # noqa: E402
from .coupling import CouplingResult, coupling_probabilities, depth_scan, loss_vs_coupling, optimize_pulse  # noqa: E402
from .harmonic import HoConfig, ho_fock_simulation, ho_single_step_coupling, ho_square_delay_angle  # noqa: E402
from .echo import (  # noqa: E402
    EchoTrace,
    EnsembleSpec,
    EnvelopeFit,
    calibrate_inhomogeneity,
    echo_amplitude,
    echo_vs_t0,
    fit_envelope,
    simulate_echo,
    simulate_population_trace,
)
