"""Excitation structure of injective matrix product states from their transfer channel."""

__version__ = "0.1.0"

from .channel import (
    QuantumChannel,
    SpectralData,
    StructureTensor,
    channel_spectrum,
    choi_cp_check,
    spectrum_feasibility,
    structure_constants,
    transfer_matrix,
)
from .errors import MpsexcError, NumericalError, ValidationError
from .excitations import (
    FourierTransfer,
    ParticleMode,
    RegimeReport,
    fourier_transfer,
    gauge_particle_tensor,
    multiparticle_energy,
    normal_dispersion,
    one_particle_modes,
    regime_validity,
    stability_diagnostics,
)
from .glauber import ising_mps, simulate, tau_table
from .localization import DisorderFamily, XiCurve, family_channel, lambda_schedule, sweep, xi_metric
from .mps import (
    MpsTensor,
    ParticleInsertionSpec,
    StateVector,
    canonicalize,
    excited_state_vector,
    injectivity_rank,
    load_mps,
    state_vector,
)
from .parent import EdReport, ParentHamiltonian, assemble_or_apply, correction_matrix, ed_report, local_term
