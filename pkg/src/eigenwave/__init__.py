"""Eigenwave: dual eigenfunction decomposition of non-stationary MU-MIMO
channel kernels, interference-free joint space-time precoding, eigenwave
carrier modulation, and a deterministic Monte-Carlo benchmark harness."""

from .config import (
    KernelSpec,
    SimConfig,
    SimResult,
    config_hash,
    preset_kernel_spec,
)
from .decomposition import (
    EigenSystem,
    by_count,
    by_energy,
    decompose,
    orthonormality_defect,
    reconstruct,
    unfold,
    verify_duality,
)
from .errors import (
    CapacityError,
    ConfigurationError,
    EigenwaveError,
    FormatError,
    IllConditionedSubchannelError,
    NumericError,
)
from .kernels import (
    ChannelKernel,
    PhysicalPathSet,
    PropagationPath,
    SpaceTimeSignal,
    apply_kernel,
    identity_kernel,
    kernel_from_impulse_response,
    kernel_from_kronecker,
    kernel_from_paths,
)
from .modem import (
    CONSTELLATIONS,
    Constellation,
    MemFrame,
    SymbolFrame,
    mem_demodulate,
    mem_equalize,
    mem_modulate,
    ofdm_baseline,
    otfs_tfst_baseline,
    qam_ber_awgn,
    qam_demap,
    qam_map,
    qam_ser_awgn,
    zp_mem,
)
from .precoding import (
    PrecodeResult,
    SlicePrecodeResult,
    hogmt_precode,
    per_slice_svd_precode,
    per_slice_zf_precode,
    receiver_estimate,
    spatial_slices,
)
from .simulate import (
    compare_schemes,
    perturb_csi,
    realize_kernel,
    run_sweep,
)

__version__ = "0.1.0"
