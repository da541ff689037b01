"""Symbol-domain machinery: Gray-coded QAM, eigenwave-carrier modulation
with matched-filter demodulation, and OFDM / OTFS single-tap baselines.

Constellations are normalized to unit average symbol energy.  The
eigenwave modulator places one QAM symbol per subchannel, strongest gain
first; a matched filter at the receiver recovers sigma_n * s_n + v_n per
carrier with zero leakage between carriers.  The zero-padded variant
leaves the weakest-gain carriers silent to avoid their noise enhancement
at a proportional throughput cost.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import erfc

import numpy as np

from .decomposition import EigenSystem, unfold
from .errors import CapacityError, ConfigurationError
from .kernels import ChannelKernel, SpaceTimeSignal

__all__ = [
    "Constellation",
    "CONSTELLATIONS",
    "SymbolFrame",
    "MemFrame",
    "qam_map",
    "qam_demap",
    "qam_ber_awgn",
    "qam_ser_awgn",
    "mem_modulate",
    "mem_demodulate",
    "mem_equalize",
    "zp_mem",
    "ofdm_geometry",
    "otfs_geometry",
    "ofdm_baseline",
    "otfs_tfst_baseline",
]


def _gray(n: int) -> int:
    return n ^ (n >> 1)


class Constellation:
    """Square Gray-mapped QAM constellation with unit average energy."""

    def __init__(self, name: str, order: int):
        side = int(round(np.sqrt(order)))
        if side * side != order or side & (side - 1):
            raise ConfigurationError(f"{order}-QAM is not a square power of two")
        self.name = name
        self.order = order
        self.bits_per_symbol = int(np.log2(order))
        self._half_bits = self.bits_per_symbol // 2
        # PAM levels in *position* order, then index by Gray label.
        levels = np.arange(side) * 2.0 - (side - 1)
        pos_of_gray = np.zeros(side, dtype=int)
        for pos in range(side):
            pos_of_gray[_gray(pos)] = pos
        full_energy = 2.0 * np.mean(levels**2)
        self._levels = levels / np.sqrt(full_energy)
        self._pos_of_gray = pos_of_gray
        labels = np.arange(order)
        i_label = labels >> self._half_bits
        q_label = labels & (side - 1)
        self.points = (
            self._levels[pos_of_gray[i_label]]
            + 1j * self._levels[pos_of_gray[q_label]]
        )
        self._side = side

    def map_labels(self, labels: np.ndarray) -> np.ndarray:
        return self.points[np.asarray(labels, dtype=int)]

    def demap_labels(self, symbols: np.ndarray) -> np.ndarray:
        """Minimum-distance hard decision."""
        sym = np.asarray(symbols, dtype=np.complex128).reshape(-1)
        sym = np.where(np.isfinite(sym), sym, 1e12 + 1e12j)
        dist = np.abs(sym[:, None] - self.points[None, :])
        return dist.argmin(axis=1)

    # -- exact AWGN error rates (per-axis enumeration) ------------------
    def _axis_transition_matrix(self, snr_db: float) -> np.ndarray:
        """p[g_tx, pos_rx]: prob a PAM axis sent with Gray label g_tx is
        decided into position pos_rx, at Es/N0 = snr (total symbol energy
        over both axes)."""
        n0 = 10.0 ** (-snr_db / 10.0)
        sd = np.sqrt(n0 / 2.0)
        lev = self._levels
        edges = np.concatenate([[-np.inf], (lev[:-1] + lev[1:]) / 2.0, [np.inf]])

        def cdf(x):
            if np.isposinf(x):
                return 1.0
            if np.isneginf(x):
                return 0.0
            return 0.5 * erfc(-x / np.sqrt(2.0))

        side = self._side
        p = np.zeros((side, side))
        for g_tx in range(side):
            a = lev[self._pos_of_gray[g_tx]]
            for pos in range(side):
                p[g_tx, pos] = cdf((edges[pos + 1] - a) / sd) - cdf(
                    (edges[pos] - a) / sd
                )
        return p

    def ber_awgn(self, snr_db: float) -> float:
        p = self._axis_transition_matrix(snr_db)
        side = self._side
        total = 0.0
        for g_tx in range(side):
            for pos in range(side):
                total += p[g_tx, pos] * bin(g_tx ^ _gray(pos)).count("1")
        return total / (side * self._half_bits)

    def ser_awgn(self, snr_db: float) -> float:
        p = self._axis_transition_matrix(snr_db)
        correct = np.mean([p[g, self._pos_of_gray[g]] for g in range(self._side)])
        return 1.0 - correct**2


CONSTELLATIONS = {
    "qpsk": Constellation("qpsk", 4),
    "16qam": Constellation("16qam", 16),
    "64qam": Constellation("64qam", 64),
}


def _resolve(constellation) -> Constellation:
    if isinstance(constellation, Constellation):
        return constellation
    try:
        return CONSTELLATIONS[str(constellation).lower()]
    except KeyError:
        raise ConfigurationError(
            f"unknown constellation {constellation!r}; "
            f"choose from {sorted(CONSTELLATIONS)}"
        ) from None


def qam_ber_awgn(snr_db: float, constellation="16qam") -> float:
    """Exact AWGN bit error rate for a Gray-mapped square constellation
    under minimum-distance detection (Es/N0 in dB)."""
    return _resolve(constellation).ber_awgn(snr_db)


def qam_ser_awgn(snr_db: float, constellation="16qam") -> float:
    """Exact AWGN symbol error rate, same model as :func:`qam_ber_awgn`."""
    return _resolve(constellation).ser_awgn(snr_db)


@dataclass(frozen=True)
class SymbolFrame:
    """QAM symbol vector plus the bit payload it encodes."""

    constellation: str
    symbols: np.ndarray
    bits: np.ndarray
    gray_coded: bool = True

    def __post_init__(self):
        const = _resolve(self.constellation)
        if len(self.bits) != len(self.symbols) * const.bits_per_symbol:
            raise ConfigurationError(
                f"{len(self.bits)} bits cannot label {len(self.symbols)} "
                f"{const.name} symbols"
            )


def qam_map(bits: np.ndarray, constellation="16qam") -> SymbolFrame:
    """Map a bit array to Gray-coded QAM symbols (MSB first per symbol)."""
    const = _resolve(constellation)
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
    k = const.bits_per_symbol
    if len(bits) % k:
        raise ConfigurationError(
            f"bit count {len(bits)} not divisible by {k} ({const.name})"
        )
    groups = bits.reshape(-1, k)
    weights = 1 << np.arange(k - 1, -1, -1)
    labels = groups @ weights
    return SymbolFrame(const.name, const.map_labels(labels), bits)


def qam_demap(symbols: np.ndarray, constellation="16qam") -> np.ndarray:
    """Hard-decide symbols back to bits."""
    const = _resolve(constellation)
    labels = const.demap_labels(symbols)
    k = const.bits_per_symbol
    out = np.zeros((len(labels), k), dtype=np.uint8)
    for j in range(k):
        out[:, j] = (labels >> (k - 1 - j)) & 1
    return out.reshape(-1)


# ---------------------------------------------------------------------
# eigenwave-carrier modulation
# ---------------------------------------------------------------------


@dataclass(frozen=True)
class MemFrame:
    """Modulated eigenwave frame: which carriers hold data, how many of
    the weakest were deliberately silenced, and the transmit grid."""

    carrier_indices: np.ndarray
    zero_padded: int
    tx_signal: SpaceTimeSignal


def mem_modulate(frame: SymbolFrame, eig: EigenSystem) -> MemFrame:
    """Place symbols on the strongest-gain carriers.

    ``tx = sum_n s_n * conj(phi_n)`` over the first ``len(symbols)`` kept
    subchannels (gains are stored descending).
    """
    n_sym = len(frame.symbols)
    if n_sym > eig.n_kept:
        raise CapacityError(
            f"{n_sym} symbols exceed the {eig.n_kept} kept carriers"
        )
    carriers = np.arange(n_sym)
    tx_flat = eig.kept_phi[carriers].conj().T @ frame.symbols
    u2, t2 = eig.tx_dims
    return MemFrame(carriers, 0, SpaceTimeSignal.from_flat(tx_flat, u2, t2))


def zp_mem(frame: SymbolFrame, eig: EigenSystem, zp_fraction: float) -> MemFrame:
    """Zero-padded variant: silence the weakest carriers.

    Out of the ``n_kept`` carrier budget, the ``floor(zp_fraction *
    n_kept)`` lowest-gain carriers carry zeros; the frame must fit on the
    remainder.  Throughput scales by (1 - zp_fraction).
    """
    if not 0.0 <= zp_fraction < 1.0:
        raise ConfigurationError(f"zp_fraction {zp_fraction} not in [0, 1)")
    budget = eig.n_kept
    n_zp = int(np.floor(zp_fraction * budget))
    usable = budget - n_zp
    n_sym = len(frame.symbols)
    if n_sym > usable:
        raise CapacityError(
            f"{n_sym} symbols exceed the {usable} usable carriers "
            f"({n_zp} of {budget} zero-padded)"
        )
    carriers = np.arange(n_sym)
    tx_flat = eig.kept_phi[carriers].conj().T @ frame.symbols
    u2, t2 = eig.tx_dims
    return MemFrame(carriers, n_zp, SpaceTimeSignal.from_flat(tx_flat, u2, t2))


def mem_demodulate(
    r: SpaceTimeSignal, eig: EigenSystem, carriers: np.ndarray
) -> np.ndarray:
    """Matched-filter outputs ``<r, psi_n>`` for the requested carriers.

    Noiselessly each output is sigma_n * s_n; orthonormality keeps white
    noise white (variance N0 per output) and carriers leak-free.
    """
    carriers = np.asarray(carriers, dtype=int)
    if carriers.size and (carriers.min() < 0 or carriers.max() >= eig.n_kept):
        raise ConfigurationError(
            f"carrier indices must lie in [0, {eig.n_kept}), got "
            f"[{carriers.min()}, {carriers.max()}]"
        )
    if r.data.shape != eig.rx_dims:
        raise ConfigurationError(
            f"received grid {r.data.shape} does not match eigensystem "
            f"receive grid {eig.rx_dims}"
        )
    return eig.kept_psi[carriers].conj() @ r.flatten()


def mem_equalize(
    raw: np.ndarray,
    eig: EigenSystem,
    carriers: np.ndarray,
    noise_variance: float = 0.0,
    mode: str = "zf",
) -> np.ndarray:
    """Per-carrier scalar equalization of matched-filter outputs.

    ``zf`` divides by the subchannel gain; ``mmse`` applies the scalar
    MMSE weight sigma / (sigma^2 + N0) for unit-energy symbols.
    """
    sig = eig.kept_sigmas[np.asarray(carriers, dtype=int)]
    if mode == "zf":
        return raw / np.maximum(sig, 1e-300)
    if mode == "mmse":
        return sig * raw / (sig**2 + noise_variance)
    raise ConfigurationError(f"unknown equalizer mode {mode!r}")


# ---------------------------------------------------------------------
# single-link OFDM / OTFS baselines
# ---------------------------------------------------------------------


def _single_link_matrix(kernel: ChannelKernel) -> np.ndarray:
    if kernel.n_rx_space != 1 or kernel.n_tx_space != 1:
        raise ConfigurationError("modem baselines run on single-link kernels")
    if kernel.n_rx_time != kernel.n_tx_time:
        raise ConfigurationError("modem baselines need matching time grids")
    n = kernel.n_rx_time
    if n & (n - 1):
        raise ConfigurationError(f"time grid {n} must be a power of two")
    return unfold(kernel)


def ofdm_geometry(n_time: int) -> tuple[int, int]:
    """(n_fft, cp_len) used by the OFDM baseline on an n_time grid."""
    n_fft = n_time // 2
    return n_fft, n_fft // 4


def otfs_geometry(n_time: int, n_doppler: int = 8) -> tuple[int, int, int, int]:
    """(block, cp_len, n_delay, n_symbols) for the OTFS baseline."""
    if n_time % n_doppler:
        raise ConfigurationError(
            f"doppler bins {n_doppler} must divide time grid {n_time}"
        )
    block = n_time // n_doppler
    cp = max(1, block // 4)
    n_delay = block - cp
    if n_delay < 1:
        raise ConfigurationError("time grid too short for OTFS blocks")
    return block, cp, n_delay, n_doppler * n_delay


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    mag = np.abs(den)
    eps = 1e-6 * max(float(mag.max()), 1e-30)
    return num / np.where(mag < eps, eps, den)


def ofdm_baseline(
    frame: SymbolFrame,
    kernel: ChannelKernel,
    snr_db: float,
    rng: np.random.Generator,
) -> tuple[int, int]:
    """Cyclic-prefix OFDM with one-tap frequency equalization.

    One OFDM symbol occupies the first cp + n_fft samples of the grid;
    the equalizer uses the channel frequency response at the symbol
    midpoint (exact for time-invariant channels within the prefix).
    Returns (bit_errors, n_bits).
    """
    m = _single_link_matrix(kernel)
    n_time = m.shape[0]
    n_fft, cp = ofdm_geometry(n_time)
    if len(frame.symbols) != n_fft:
        raise ConfigurationError(
            f"frame carries {len(frame.symbols)} symbols, OFDM grid needs {n_fft}"
        )
    x = np.fft.ifft(frame.symbols) * np.sqrt(n_fft)
    tx = np.zeros(n_time, dtype=np.complex128)
    tx[: cp + n_fft] = np.concatenate([x[-cp:], x])
    y = m @ tx
    body = slice(cp, cp + n_fft)
    es = float(np.mean(np.sum(np.abs(m[body]) ** 2, axis=1)))
    n0 = es / 10.0 ** (snr_db / 10.0)
    y = y + np.sqrt(n0 / 2.0) * (
        rng.standard_normal(n_time) + 1j * rng.standard_normal(n_time)
    )
    spectrum = np.fft.fft(y[body]) / np.sqrt(n_fft)
    t_mid = cp + n_fft // 2
    taps = m[t_mid, t_mid::-1]  # h(t_mid, tau) for tau = 0, 1, ...
    freq = np.fft.fft(taps, n_fft)
    estimates = _safe_div(spectrum, freq)
    bits_hat = qam_demap(estimates, frame.constellation)
    return int(np.sum(bits_hat != frame.bits)), len(frame.bits)


def otfs_tfst_baseline(
    frame: SymbolFrame,
    kernel: ChannelKernel,
    snr_db: float,
    rng: np.random.Generator,
    n_doppler: int = 8,
) -> tuple[int, int]:
    """Delay-Doppler modulation with time-frequency single-tap detection.

    Symbols live on an (n_doppler x n_delay) grid; each time block gets a
    cyclic prefix and is equalized by one tap per frequency bin taken at
    the block midpoint, then transformed back to the delay-Doppler grid.
    Returns (bit_errors, n_bits).
    """
    m = _single_link_matrix(kernel)
    n_time = m.shape[0]
    block, cp, n_delay, n_sym = otfs_geometry(n_time, n_doppler)
    if len(frame.symbols) != n_sym:
        raise ConfigurationError(
            f"frame carries {len(frame.symbols)} symbols, OTFS grid needs {n_sym}"
        )
    dd = frame.symbols.reshape(n_doppler, n_delay)
    # Per delay bin, spread across time blocks (unitary along Doppler).
    blocks = np.fft.ifft(dd, axis=0) * np.sqrt(n_doppler)
    tx = np.zeros(n_time, dtype=np.complex128)
    body_idx = []
    for n in range(n_doppler):
        seg = np.concatenate([blocks[n][-cp:], blocks[n]])
        tx[n * block : (n + 1) * block] = seg
        body_idx.extend(range(n * block + cp, (n + 1) * block))
    y = m @ tx
    body_idx = np.asarray(body_idx)
    es = float(np.mean(np.sum(np.abs(m[body_idx]) ** 2, axis=1)))
    n0 = es / 10.0 ** (snr_db / 10.0)
    y = y + np.sqrt(n0 / 2.0) * (
        rng.standard_normal(n_time) + 1j * rng.standard_normal(n_time)
    )
    eq_blocks = np.zeros((n_doppler, n_delay), dtype=np.complex128)
    for n in range(n_doppler):
        seg = y[n * block + cp : (n + 1) * block]
        spectrum = np.fft.fft(seg) / np.sqrt(n_delay)
        t_mid = n * block + cp + n_delay // 2
        taps = m[t_mid, t_mid::-1]
        freq = np.fft.fft(taps, n_delay)
        eq = _safe_div(spectrum, freq)
        eq_blocks[n] = np.fft.ifft(eq) * np.sqrt(n_delay)
    dd_hat = np.fft.fft(eq_blocks, axis=0) / np.sqrt(n_doppler)
    bits_hat = qam_demap(dd_hat.reshape(-1), frame.constellation)
    return int(np.sum(bits_hat != frame.bits)), len(frame.bits)
