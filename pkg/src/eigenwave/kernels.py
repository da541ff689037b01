"""Discretized 4-D space-time channel kernels.

A kernel maps the transmit space-time signal to the receive space-time
signal through a complex gain array ``data[u, t, u2, t2]``: the receive
sample at (space ``u``, time ``t``) accumulates ``data[u, t, u2, t2] *
tx[u2, t2]`` over all transmit coordinates.  Kernels built from a
time-varying impulse response ``h_{u,u2}(t, tau)`` follow the coordinate
shift ``data[u, t, u2, t2] = h_{u,u2}(t, t - t2)`` and are causal: entries
with ``t < t2`` are zero.

Time-varying taps carry a quadratic phase ``exp(j*2*pi*(nu*t +
0.5*mu*t^2))`` so a nonzero Doppler rate ``mu`` makes the channel
statistics drift within the observation window (the non-stationary
regime this package targets).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "SpaceTimeSignal",
    "ChannelKernel",
    "PropagationPath",
    "PhysicalPathSet",
    "kernel_from_impulse_response",
    "kernel_from_paths",
    "kernel_from_kronecker",
    "apply_kernel",
    "identity_kernel",
    "EVA_TAP_DELAYS_S",
    "EVA_TAP_POWERS_DB",
]

# Extended Vehicular A power-delay profile (9 taps), external-standard
# constants; powers are relative dB before per-link normalization.
EVA_TAP_DELAYS_S = np.array(
    [0.0, 30e-9, 150e-9, 310e-9, 370e-9, 710e-9, 1090e-9, 1730e-9, 2510e-9]
)
EVA_TAP_POWERS_DB = np.array([0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9])

# Fractional delays are realized by a windowed sinc over +/- this many taps.
SINC_HALF_WIDTH = 4


@dataclass(frozen=True)
class SpaceTimeSignal:
    """Complex signal grid over (space index, time index) at one link end."""

    data: np.ndarray  # complex array [space, time]

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.complex128)
        if arr.ndim != 2:
            raise ConfigurationError(
                f"signal must be 2-D (space, time), got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ConfigurationError("signal contains non-finite entries")
        object.__setattr__(self, "data", arr)

    @property
    def n_space(self) -> int:
        return self.data.shape[0]

    @property
    def n_time(self) -> int:
        return self.data.shape[1]

    def flatten(self) -> np.ndarray:
        """Vector view in space-major order (index = space * n_time + time)."""
        return self.data.reshape(-1)

    @staticmethod
    def from_flat(vec: np.ndarray, n_space: int, n_time: int) -> "SpaceTimeSignal":
        return SpaceTimeSignal(np.asarray(vec).reshape(n_space, n_time))


@dataclass(frozen=True)
class ChannelKernel:
    """Discretized 4-D channel kernel with grid metadata.

    Attributes
    ----------
    n_rx_space, n_tx_space : int
        Space indices at the receive / transmit side (users x antennas).
    n_rx_time, n_tx_time : int
        Time samples at the receive / transmit side.
    sample_period : float
        Seconds per time grid step.
    data : np.ndarray
        Complex gains indexed ``[u, t, u2, t2]``.
    """

    n_rx_space: int
    n_tx_space: int
    n_rx_time: int
    n_tx_time: int
    sample_period: float
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.complex128)
        shape = (self.n_rx_space, self.n_rx_time, self.n_tx_space, self.n_tx_time)
        if arr.shape != shape:
            raise ConfigurationError(
                f"kernel data shape {arr.shape} does not match grid {shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ConfigurationError("kernel contains non-finite entries")
        if self.sample_period <= 0:
            raise ConfigurationError("sample_period must be positive")
        object.__setattr__(self, "data", arr)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return (self.n_rx_space, self.n_rx_time, self.n_tx_space, self.n_tx_time)

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.data.reshape(-1)))


@dataclass(frozen=True)
class PropagationPath:
    """One propagation path of a (u, u2) link."""

    delay_s: float
    gain: complex
    doppler_hz: float = 0.0
    doppler_rate_hz_per_s: float = 0.0


@dataclass(frozen=True)
class PhysicalPathSet:
    """Per-link path lists for a parametric multipath channel.

    ``links[u][u2]`` is the tuple of paths coupling transmit space index
    ``u2`` into receive space index ``u``.  ``normalized`` records whether
    the mean aggregate path power per link was scaled to 1.
    """

    links: tuple  # links[u][u2] -> tuple[PropagationPath, ...]
    normalized: bool = False

    def __post_init__(self):
        links = tuple(tuple(tuple(ps) for ps in row) for row in self.links)
        if not links or not links[0]:
            raise ConfigurationError("path set needs at least one link")
        width = len(links[0])
        if any(len(row) != width for row in links):
            raise ConfigurationError("ragged link table in path set")
        for row in links:
            for paths in row:
                for p in paths:
                    if p.delay_s < 0:
                        raise ConfigurationError(f"negative path delay {p.delay_s}")
        object.__setattr__(self, "links", links)

    @property
    def n_rx_space(self) -> int:
        return len(self.links)

    @property
    def n_tx_space(self) -> int:
        return len(self.links[0])

    def max_delay_s(self) -> float:
        return max(
            (p.delay_s for row in self.links for ps in row for p in ps),
            default=0.0,
        )

    def normalize_power(self) -> "PhysicalPathSet":
        """Scale gains so mean aggregate tap power is 1 on every link."""
        rows = []
        for row in self.links:
            new_row = []
            for paths in row:
                power = sum(abs(p.gain) ** 2 for p in paths)
                if power <= 0:
                    raise ConfigurationError("link has zero aggregate path power")
                scale = 1.0 / np.sqrt(power)
                new_row.append(
                    tuple(
                        PropagationPath(
                            p.delay_s,
                            p.gain * scale,
                            p.doppler_hz,
                            p.doppler_rate_hz_per_s,
                        )
                        for p in paths
                    )
                )
            rows.append(tuple(new_row))
        return PhysicalPathSet(tuple(rows), normalized=True)


def _sinc_taps(delay_steps: float, n_taps: int) -> np.ndarray:
    """Windowed-sinc tap weights for a (possibly fractional) delay.

    Lanczos window over +/- SINC_HALF_WIDTH taps, renormalized to unit
    pulse energy so fractional delays preserve path power exactly
    (integer delays reduce to a single unit tap).
    """
    k = np.arange(n_taps)
    x = k - delay_steps
    window = np.sinc(x / SINC_HALF_WIDTH)
    taps = np.where(np.abs(x) <= SINC_HALF_WIDTH, np.sinc(x) * window, 0.0)
    norm = np.linalg.norm(taps)
    if norm == 0:
        raise ConfigurationError(
            f"delay {delay_steps} grid steps has no tap support on the grid"
        )
    return taps / norm


def kernel_from_impulse_response(
    h: np.ndarray,
    sample_period: float,
    n_tx_time: int | None = None,
) -> ChannelKernel:
    """Build a kernel from per-link time-varying impulse responses.

    Parameters
    ----------
    h : np.ndarray
        Complex array ``[u, u2, t, tau]`` with ``h[u, u2, t, k]`` the gain
        of tap ``k`` observed at receive time ``t`` on link (u, u2).
    sample_period : float
        Seconds per grid step.
    n_tx_time : int, optional
        Transmit-side time grid length; defaults to the receive length.

    Returns
    -------
    ChannelKernel
        ``data[u, t, u2, t2] = h[u, u2, t, t - t2]`` for delays inside the
        tap support, zero elsewhere (causal).
    """
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim != 4:
        raise ConfigurationError(
            f"impulse response must be [u, u2, t, tau], got shape {h.shape}"
        )
    n_rx, n_tx, n_time, n_tau = h.shape
    t_tx = n_time if n_tx_time is None else int(n_tx_time)
    if n_tau > t_tx:
        raise ConfigurationError(
            f"tap support {n_tau} exceeds transmit grid length {t_tx}"
        )
    data = np.zeros((n_rx, n_time, n_tx, t_tx), dtype=np.complex128)
    for k in range(n_tau):
        t_idx = np.arange(k, n_time)
        t2_idx = t_idx - k
        valid = t2_idx < t_tx
        data[:, t_idx[valid], :, t2_idx[valid]] = h[:, :, t_idx[valid], k].transpose(
            2, 0, 1
        )
    return ChannelKernel(n_rx, n_tx, n_time, t_tx, sample_period, data)


def impulse_response_from_paths(
    paths: PhysicalPathSet,
    n_time: int,
    sample_period: float,
    n_tau: int | None = None,
) -> np.ndarray:
    """Evaluate per-link taps ``h[u, u2, t, tau]`` from a path set.

    Each path contributes a windowed-sinc interpolated tap at its delay,
    rotated by ``exp(j*2*pi*(nu*t + 0.5*mu*t^2))``.
    """
    max_delay_steps = paths.max_delay_s() / sample_period
    if n_tau is None:
        n_tau = int(np.ceil(max_delay_steps)) + SINC_HALF_WIDTH + 1
    n_tau = min(n_tau, n_time)
    t = np.arange(n_time) * sample_period
    h = np.zeros((paths.n_rx_space, paths.n_tx_space, n_time, n_tau), dtype=np.complex128)
    for u, row in enumerate(paths.links):
        for u2, link_paths in enumerate(row):
            for p in link_paths:
                taps = _sinc_taps(p.delay_s / sample_period, n_tau)
                phase = np.exp(
                    2j
                    * np.pi
                    * (p.doppler_hz * t + 0.5 * p.doppler_rate_hz_per_s * t * t)
                )
                h[u, u2] += p.gain * np.outer(phase, taps)
    return h


def kernel_from_paths(
    paths: PhysicalPathSet,
    n_time: int,
    sample_period: float,
    n_tx_time: int | None = None,
) -> ChannelKernel:
    """Synthesize a kernel from a parametric multipath description.

    Raises a configuration error when any path delay falls outside the
    transmit time grid.
    """
    t_tx = n_time if n_tx_time is None else int(n_tx_time)
    if paths.max_delay_s() >= t_tx * sample_period:
        raise ConfigurationError(
            f"path delay {paths.max_delay_s():g}s exceeds grid span "
            f"{t_tx * sample_period:g}s"
        )
    h = impulse_response_from_paths(paths, n_time, sample_period)
    return kernel_from_impulse_response(h, sample_period, n_tx_time)


def kernel_from_kronecker(
    spatial: np.ndarray,
    temporal: np.ndarray,
    sample_period: float,
    n_time: int | None = None,
    n_tx_time: int | None = None,
) -> ChannelKernel:
    """Kernel with separable space/time structure.

    Parameters
    ----------
    spatial : np.ndarray
        Complex space coupling matrix ``[u, u2]``.
    temporal : np.ndarray
        Shared impulse response, either static taps ``[tau]`` (requires
        ``n_time``) or time-varying ``[t, tau]``.

    Returns
    -------
    ChannelKernel
        ``data[u, t, u2, t2] = spatial[u, u2] * h(t, t - t2)``.
    """
    spatial = np.asarray(spatial, dtype=np.complex128)
    temporal = np.asarray(temporal, dtype=np.complex128)
    if spatial.ndim != 2:
        raise ConfigurationError("spatial part must be a matrix [u, u2]")
    if temporal.ndim == 1:
        if n_time is None:
            raise ConfigurationError("static taps [tau] need an explicit n_time")
        temporal = np.tile(temporal, (n_time, 1))
    if temporal.ndim != 2:
        raise ConfigurationError("temporal part must be [t, tau] or [tau]")
    h = np.einsum("ij,tk->ijtk", spatial, temporal)
    return kernel_from_impulse_response(h, sample_period, n_tx_time)


def apply_kernel(
    kernel: ChannelKernel,
    tx: SpaceTimeSignal,
    noise_variance: float = 0.0,
    rng: np.random.Generator | None = None,
) -> SpaceTimeSignal:
    """Propagate a transmit signal through the kernel.

    ``r[u, t] = sum_{u2, t2} data[u, t, u2, t2] * tx[u2, t2] + v[u, t]``
    with ``v`` circularly-symmetric complex Gaussian of the given variance
    per sample (0 allowed for noiseless runs, in which case no rng is
    needed).
    """
    if tx.data.shape != (kernel.n_tx_space, kernel.n_tx_time):
        raise ConfigurationError(
            f"tx shape {tx.data.shape} does not match kernel transmit grid "
            f"({kernel.n_tx_space}, {kernel.n_tx_time})"
        )
    r = np.einsum("utvs,vs->ut", kernel.data, tx.data)
    if noise_variance < 0:
        raise ConfigurationError("noise variance must be non-negative")
    if noise_variance > 0:
        if rng is None:
            raise ConfigurationError("rng required when noise_variance > 0")
        scale = np.sqrt(noise_variance / 2.0)
        r = r + scale * (
            rng.standard_normal(r.shape) + 1j * rng.standard_normal(r.shape)
        )
    return SpaceTimeSignal(r)


def identity_kernel(
    n_space: int, n_time: int, sample_period: float = 1.0
) -> ChannelKernel:
    """Kernel acting as the identity map on the (space, time) grid."""
    h = np.zeros((n_space, n_space, n_time, 1), dtype=np.complex128)
    for u in range(n_space):
        h[u, u, :, 0] = 1.0
    return kernel_from_impulse_response(h, sample_period)
