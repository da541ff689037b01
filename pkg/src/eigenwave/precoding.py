"""Joint space-time precoding on dual eigenfunctions, plus per-slice
baselines.

The eigenfunction precoder works in three steps: project the data signal
onto the receive-side eigenfunctions (projections s_n), divide by the
subchannel gains (coefficients x_n = s_n / sigma_n), and transmit
sum_n x_n * conj(phi_n).  The channel turns each conj(phi_n) into
sigma_n * psi_n, so the receiver observes the data signal directly and
needs no processing stage beyond symbol decisions.

The per-slice baselines precode each time slice independently with the
instantaneous spatial matrix H_t = data[:, t, :, t]; they cancel spatial
interference only, leaving the kernel's t2 != t coupling untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decomposition import EigenSystem
from .errors import ConfigurationError, IllConditionedSubchannelError
from .kernels import ChannelKernel, SpaceTimeSignal

__all__ = [
    "PrecodeResult",
    "SlicePrecodeResult",
    "hogmt_precode",
    "receiver_estimate",
    "spatial_slices",
    "per_slice_zf_precode",
    "per_slice_svd_precode",
]

DEFAULT_SIGMA_FLOOR = 1e-12  # relative to sigma_1
DEFAULT_SLICE_RCOND = 1e-10  # pseudo-inverse cutoff for the baselines


@dataclass(frozen=True)
class PrecodeResult:
    """Output of the eigenfunction precoder.

    ``tx_signal`` is the precoded transmit grid, ``projections`` the
    per-subchannel data projections s_n, ``coefficients`` the transmit
    weights x_n = s_n / sigma_n.  ``tx_energy`` is sum |x_n|^2 and
    ``residual_power`` the data energy outside the kept span (irreducible
    reconstruction error for this truncation).
    """

    tx_signal: SpaceTimeSignal
    coefficients: np.ndarray
    projections: np.ndarray
    tx_energy: float
    residual_power: float


@dataclass(frozen=True)
class SlicePrecodeResult:
    """Per-slice baseline output; records which time slices needed a
    regularized pseudo-inverse and the cutoff used."""

    tx_signal: SpaceTimeSignal
    regularized_slices: tuple[int, ...]
    rcond: float


def hogmt_precode(
    s: SpaceTimeSignal,
    eig: EigenSystem,
    sigma_floor: float = DEFAULT_SIGMA_FLOOR,
) -> PrecodeResult:
    """Precode a data signal onto the kept dual eigenfunctions.

    Parameters
    ----------
    s : SpaceTimeSignal
        Data signal on the receive grid (U, T).
    eig : EigenSystem
        Decomposition of the kernel the signal will traverse.
    sigma_floor : float
        Relative floor; any kept sigma at or below ``sigma_floor *
        sigma_1`` raises :class:`IllConditionedSubchannelError`.

    Returns
    -------
    PrecodeResult
        Noiseless channel application of ``tx_signal`` returns the
        projection of ``s`` onto the kept receive eigenfunctions; when
        they span ``s`` this is exactly ``s``.
    """
    if s.data.shape != eig.rx_dims:
        raise ConfigurationError(
            f"signal grid {s.data.shape} does not match eigensystem receive "
            f"grid {eig.rx_dims}"
        )
    sigmas = eig.kept_sigmas
    floor = sigma_floor * (eig.sigmas[0] if eig.sigmas[0] > 0 else 1.0)
    if np.any(sigmas <= floor):
        worst = float(sigmas.min())
        raise IllConditionedSubchannelError(
            f"kept subchannel gain {worst:.3e} is at/below the floor "
            f"{floor:.3e}; truncate the eigensystem (fewer kept "
            "subchannels) before precoding"
        )
    flat = s.flatten()
    projections = eig.kept_psi.conj() @ flat
    coefficients = projections / sigmas
    tx_flat = eig.kept_phi.conj().T @ coefficients
    u2, t2 = eig.tx_dims
    residual = float(
        max(np.linalg.norm(flat) ** 2 - np.linalg.norm(projections) ** 2, 0.0)
    )
    return PrecodeResult(
        tx_signal=SpaceTimeSignal.from_flat(tx_flat, u2, t2),
        coefficients=coefficients,
        projections=projections,
        tx_energy=float(np.sum(np.abs(coefficients) ** 2)),
        residual_power=residual,
    )


def receiver_estimate(r: SpaceTimeSignal) -> SpaceTimeSignal:
    """Identity stage: the estimate is the received signal itself.

    Kept as an explicit pipeline step to make the no-receiver-processing
    property visible where symbol decisions are made.
    """
    return r


def spatial_slices(kernel: ChannelKernel) -> np.ndarray:
    """Instantaneous spatial matrices ``H_t[u, u2] = data[u, t, u2, t]``.

    Only meaningful when the receive and transmit time grids coincide.
    """
    if kernel.n_rx_time != kernel.n_tx_time:
        raise ConfigurationError("per-slice baselines need matching time grids")
    t_idx = np.arange(kernel.n_rx_time)
    return kernel.data[:, t_idx, :, t_idx]  # shape [T, U, U2]


def _pinv_with_cutoff(h: np.ndarray, rcond: float) -> tuple[np.ndarray, bool]:
    u_mat, sing, vh = np.linalg.svd(h, full_matrices=False)
    cutoff = rcond * (sing[0] if sing.size and sing[0] > 0 else 1.0)
    keep = sing > cutoff
    inv = np.zeros_like(sing)
    inv[keep] = 1.0 / sing[keep]
    pinv = vh.conj().T @ (inv[:, None] * u_mat.conj().T)
    return pinv, bool(np.any(~keep))


def per_slice_zf_precode(
    slices: np.ndarray,
    s: SpaceTimeSignal,
    rcond: float = DEFAULT_SLICE_RCOND,
) -> SlicePrecodeResult:
    """Zero-forcing baseline: ``tx[:, t] = pinv(H_t) @ s[:, t]`` per slice.

    Rank-deficient slices fall back to a truncated pseudo-inverse with the
    recorded cutoff.
    """
    slices = np.asarray(slices, dtype=np.complex128)
    if slices.ndim != 3:
        raise ConfigurationError("slices must be [t, u, u2]")
    n_time, n_rx, n_tx = slices.shape
    if s.data.shape != (n_rx, n_time):
        raise ConfigurationError(
            f"signal grid {s.data.shape} does not match slices ({n_rx}, {n_time})"
        )
    tx = np.zeros((n_tx, n_time), dtype=np.complex128)
    regularized = []
    for t in range(n_time):
        pinv, hit = _pinv_with_cutoff(slices[t], rcond)
        tx[:, t] = pinv @ s.data[:, t]
        if hit:
            regularized.append(t)
    return SlicePrecodeResult(SpaceTimeSignal(tx), tuple(regularized), rcond)


def per_slice_svd_precode(
    slices: np.ndarray,
    s: SpaceTimeSignal,
    rcond: float = DEFAULT_SLICE_RCOND,
) -> SlicePrecodeResult:
    """Per-slice singular-decomposition baseline.

    Transmits ``V_t @ S_t^-1 @ U_t^H @ s[:, t]`` per slice; coincides with
    the zero-forcing baseline on square full-rank slices.
    """
    slices = np.asarray(slices, dtype=np.complex128)
    if slices.ndim != 3:
        raise ConfigurationError("slices must be [t, u, u2]")
    n_time, n_rx, n_tx = slices.shape
    if s.data.shape != (n_rx, n_time):
        raise ConfigurationError(
            f"signal grid {s.data.shape} does not match slices ({n_rx}, {n_time})"
        )
    tx = np.zeros((n_tx, n_time), dtype=np.complex128)
    regularized = []
    for t in range(n_time):
        u_mat, sing, vh = np.linalg.svd(slices[t], full_matrices=False)
        cutoff = rcond * (sing[0] if sing.size and sing[0] > 0 else 1.0)
        keep = sing > cutoff
        if np.any(~keep):
            regularized.append(t)
        coeff = np.zeros_like(sing, dtype=np.complex128)
        coeff[keep] = (u_mat.conj().T @ s.data[:, t])[keep] / sing[keep]
        tx[:, t] = vh.conj().T @ coeff
    return SlicePrecodeResult(SpaceTimeSignal(tx), tuple(regularized), rcond)
