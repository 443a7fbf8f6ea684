"""Two-dimensional Fourier-transform state tomography for coupled spin-1/2 registers.

The package simulates the two pulse sequences of the protocol (a 2D experiment
for all off-diagonal density-matrix elements and a 1D experiment for the
diagonal), processes the signals into spectra, and inverts them back into the
deviation density matrix by forward-model least squares.
"""

from .core import (AXES, SpinSystem, all_labels, build_spin_system,
                   coefficients_to_density, density_to_coefficients,
                   diagonal_labels, format_label, hamiltonian,
                   observable_labels, offdiagonal_labels, parse_label,
                   product_operator, rotation_pulse)
from .dynamics import (EvolutionCache, apply_unitary, coherence_order_decompose,
                       detect_signal, evolution_cache, evolve, gradient_project,
                       realistic_gradient_project)
from .errors import (ConfigError, DegenerateTransitionError, LineOverlapError,
                     NyquistError, RankDeficiencyError, SpinTomoError)
from .experiment import (AcquisitionParams, Signal1D, Signal2D, Transition,
                         TransitionTable, default_acquisition, reference_fid,
                         run_sequence_A, run_sequence_B, transition_table)
from .spectral import (CrossSection, HybridSpectrum, Spectrum1D, Spectrum2D,
                       cross_section, dft_fid, dft_t1, dft_t2,
                       hybrid_omega2_axis, peak_amplitudes)
from .tomography import (DesignMatrix, TomographyResult, build_design_matrix,
                         fidelity, fit_diagonal, fit_offdiagonal, load_design,
                         max_relative_element_error, reconstruct,
                         reference_normalize, save_design, tomograph_state)

__version__ = "0.1.0"

__all__ = [
    "AXES", "AcquisitionParams", "ConfigError", "CrossSection",
    "DegenerateTransitionError", "DesignMatrix", "EvolutionCache",
    "HybridSpectrum", "LineOverlapError", "NyquistError",
    "RankDeficiencyError", "Signal1D", "Signal2D", "SpinSystem",
    "SpinTomoError", "Spectrum1D", "Spectrum2D", "TomographyResult",
    "Transition", "TransitionTable", "all_labels", "apply_unitary",
    "build_design_matrix", "build_spin_system", "coefficients_to_density",
    "coherence_order_decompose", "cross_section", "default_acquisition",
    "density_to_coefficients", "detect_signal", "dft_fid", "dft_t1", "dft_t2",
    "diagonal_labels", "evolution_cache", "evolve", "fidelity", "fit_diagonal",
    "fit_offdiagonal", "format_label", "gradient_project", "hamiltonian",
    "hybrid_omega2_axis", "load_design", "max_relative_element_error",
    "observable_labels", "offdiagonal_labels", "parse_label",
    "peak_amplitudes", "product_operator", "realistic_gradient_project",
    "reconstruct", "reference_fid", "reference_normalize", "rotation_pulse",
    "run_sequence_A", "run_sequence_B", "save_design", "tomograph_state",
    "transition_table",
]
