"""Dual eigenfunction decomposition of 4-D kernels.

The kernel's 4-D gain array is unfolded into a linear map M between the
flattened transmit and receive space-time grids (index = space * n_time +
time on each side).  A singular decomposition M = sum_n sigma_n * psi_n *
v_n^H then yields, with phi_n = conj(v_n), the expansion

    data[u, t, u2, t2] = sum_n sigma_n * psi_n(u, t) * phi_n(u2, t2)

whose pairs (psi_n, phi_n) are each orthonormal on their own grid and
satisfy the duality relation: sending conj(phi_n) through the noiseless
kernel returns exactly sigma_n * psi_n.  Every subchannel is therefore a
scalar (flat-fading) link with gain sigma_n.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericError
from .kernels import ChannelKernel

__all__ = [
    "EigenSystem",
    "by_count",
    "by_energy",
    "unfold",
    "decompose",
    "verify_duality",
    "reconstruct",
    "orthonormality_defect",
]

FLATTEN_ORDER = "space-major"  # index = space * n_time + time


@dataclass(frozen=True)
class by_count:
    """Keep the ceil(fraction * n_total) largest-sigma subchannels."""

    fraction: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.fraction <= 1.0:
            raise ConfigurationError(f"count fraction {self.fraction} not in (0, 1]")

    def n_kept(self, sigmas: np.ndarray) -> int:
        return int(np.ceil(self.fraction * len(sigmas)))


@dataclass(frozen=True)
class by_energy:
    """Keep the smallest descending-sigma prefix holding the requested
    fraction of total sigma^2 energy."""

    fraction: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.fraction <= 1.0:
            raise ConfigurationError(f"energy fraction {self.fraction} not in (0, 1]")

    def n_kept(self, sigmas: np.ndarray) -> int:
        energy = np.asarray(sigmas, dtype=float) ** 2
        total = energy.sum()
        if total == 0:
            return len(sigmas)
        cum = np.cumsum(energy) / total
        return min(int(np.searchsorted(cum, self.fraction - 1e-15) + 1), len(sigmas))


@dataclass(frozen=True)
class EigenSystem:
    """Ordered (sigma_n, psi_n, phi_n) triples with a truncation record.

    All n_total triples are stored; ``n_kept`` marks the active prefix
    that downstream processing uses.  ``psi[n]`` / ``phi[n]`` are the
    flattened receive / transmit eigenfunctions.
    """

    sigmas: np.ndarray  # real [n_total], descending
    psi: np.ndarray  # complex [n_total, U*T]
    phi: np.ndarray  # complex [n_total, U2*T2]
    n_kept: int
    rx_dims: tuple[int, int]  # (U, T)
    tx_dims: tuple[int, int]  # (U2, T2)
    flatten_order: str = FLATTEN_ORDER

    def __post_init__(self):
        if np.any(self.sigmas < 0) or np.any(np.diff(self.sigmas) > 0):
            raise NumericError("sigmas must be non-negative and descending")
        if not 1 <= self.n_kept <= self.n_total:
            raise ConfigurationError(
                f"n_kept {self.n_kept} outside [1, {self.n_total}]"
            )

    @property
    def n_total(self) -> int:
        return len(self.sigmas)

    @property
    def kept_sigmas(self) -> np.ndarray:
        return self.sigmas[: self.n_kept]

    @property
    def kept_psi(self) -> np.ndarray:
        return self.psi[: self.n_kept]

    @property
    def kept_phi(self) -> np.ndarray:
        return self.phi[: self.n_kept]

    def truncated(self, keep) -> "EigenSystem":
        """Same system with the truncation policy re-applied."""
        return EigenSystem(
            self.sigmas,
            self.psi,
            self.phi,
            keep.n_kept(self.sigmas),
            self.rx_dims,
            self.tx_dims,
            self.flatten_order,
        )


def unfold(kernel: ChannelKernel) -> np.ndarray:
    """Flatten the 4-D kernel into its matrix form.

    ``M[u * T + t, u2 * T2 + t2] = data[u, t, u2, t2]``; applying the
    kernel (noiseless) equals this matrix times the flattened signal.
    """
    u, t, u2, t2 = kernel.dims
    return kernel.data.reshape(u * t, u2 * t2)


def decompose(kernel: ChannelKernel, keep=by_count(1.0)) -> EigenSystem:
    """Decompose a kernel into dual orthonormal eigenfunction pairs.

    Parameters
    ----------
    kernel : ChannelKernel
    keep : by_count | by_energy
        Truncation policy; the full system is always computed and stored,
        the policy fixes the active count.

    Returns
    -------
    EigenSystem
        With ``M = unfold(kernel)``: ``M @ conj(phi[n]) = sigmas[n] *
        psi[n]`` and the full system reconstructs M exactly (up to
        floating point).
    """
    m = unfold(kernel)
    if not np.all(np.isfinite(m)):
        raise NumericError("cannot decompose kernel with non-finite entries")
    try:
        u_mat, sigmas, vh = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericError(f"singular decomposition failed: {exc}") from exc
    # phi_n = conj(v_n) and vh rows are conj(v_n) already.
    psi = np.ascontiguousarray(u_mat.T)
    phi = np.ascontiguousarray(vh)
    return EigenSystem(
        sigmas=sigmas,
        psi=psi,
        phi=phi,
        n_kept=keep.n_kept(sigmas),
        rx_dims=(kernel.n_rx_space, kernel.n_rx_time),
        tx_dims=(kernel.n_tx_space, kernel.n_tx_time),
    )


def reconstruct(eig: EigenSystem, kept_only: bool = False) -> np.ndarray:
    """Rebuild the unfolded kernel matrix from the (kept) triples."""
    n = eig.n_kept if kept_only else eig.n_total
    return (eig.psi[:n].T * eig.sigmas[:n]) @ eig.phi[:n]


def verify_duality(kernel: ChannelKernel, eig: EigenSystem) -> float:
    """Largest relative duality residual over the kept subchannels.

    Returns ``max_n ||M @ conj(phi_n) - sigma_n * psi_n|| / max(sigma_n,
    eps)`` with ``eps = 1e-12 * sigma_1``, so near-null subchannels do not
    divide by zero.
    """
    m = unfold(kernel)
    if m.shape[0] != eig.psi.shape[1] or m.shape[1] != eig.phi.shape[1]:
        raise ConfigurationError("kernel and eigensystem dimensions differ")
    mapped = eig.kept_phi.conj() @ m.T  # rows: M @ conj(phi_n)
    target = eig.kept_psi * eig.kept_sigmas[:, None]
    resid = np.linalg.norm(mapped - target, axis=1)
    floor = 1e-12 * (eig.sigmas[0] if eig.sigmas[0] > 0 else 1.0)
    return float(np.max(resid / np.maximum(eig.kept_sigmas, floor)))


def orthonormality_defect(eig: EigenSystem) -> float:
    """Largest deviation of the kept psi/phi Gram matrices from identity."""
    gp = eig.kept_psi.conj() @ eig.kept_psi.T
    gf = eig.kept_phi.conj() @ eig.kept_phi.T
    eye = np.eye(eig.n_kept)
    return float(
        max(np.abs(gp - eye).max(), np.abs(gf - eye).max())
    )
