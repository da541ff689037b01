"""Deterministic Monte-Carlo engine.

Every (SNR point, trial) pair owns a counter-derived random substream:
``SeedSequence([seed, point_index, trial_index])`` spawns independent
generators for the kernel realization, the bit payload, the noise, and
the CSI perturbation.  Trials are therefore order-independent and the
aggregate is bitwise identical regardless of thread count.  Two configs
sharing a seed see identical kernels, bits and noise, which makes paired
comparisons (truncation sweeps, CSI-error sweeps) deterministic.

SNR convention: Es/N0 where Es is the scheme's average received energy
per symbol.  Precoding schemes deliver unit-energy data symbols, so
N0 = 10^(-snr/10); carrier modulation sees Es = mean sigma^2 over the
used carriers; the OFDM/OTFS baselines use the mean received body-sample
power.  Precoding energy inflation is reported in ``avg_tx_energy``, not
silently folded into the SNR.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .config import KernelSpec, SimConfig, SimResult, config_hash
from .decomposition import EigenSystem, by_count, by_energy, decompose, unfold
from .errors import ConfigurationError, NumericError
from .kernels import (
    EVA_TAP_DELAYS_S,
    EVA_TAP_POWERS_DB,
    ChannelKernel,
    PhysicalPathSet,
    PropagationPath,
    SpaceTimeSignal,
    apply_kernel,
    identity_kernel,
    kernel_from_paths,
)
from .modem import (
    CONSTELLATIONS,
    mem_demodulate,
    mem_equalize,
    mem_modulate,
    ofdm_baseline,
    ofdm_geometry,
    otfs_geometry,
    otfs_tfst_baseline,
    qam_demap,
    qam_map,
    zp_mem,
)
from .precoding import (
    hogmt_precode,
    per_slice_svd_precode,
    per_slice_zf_precode,
    receiver_estimate,
    spatial_slices,
)

__all__ = [
    "realize_kernel",
    "perturb_csi",
    "run_sweep",
    "compare_schemes",
    "ComparisonTable",
    "validate_config",
]

LIGHT_SPEED = 2.998e8


def _keep_policy(config: SimConfig):
    if config.keep_policy == "count":
        return by_count(config.keep_fraction)
    return by_energy(config.keep_fraction)


# ---------------------------------------------------------------------
# kernel realizations
# ---------------------------------------------------------------------


def _mu_mimo_path_set(spec: KernelSpec, rng: np.random.Generator) -> PhysicalPathSet:
    frame = spec.n_rx_time * spec.sample_period
    rate_max = 2.0 * spec.doppler_rate_cycles / frame**2
    speeds = rng.uniform(spec.speed_kmh[0], spec.speed_kmh[1], spec.n_rx_space)
    powers = spec.tap_powers if spec.tap_powers else (0.985, 0.01, 0.005)
    rows = []
    for u in range(spec.n_rx_space):
        fmax = spec.doppler_scale * spec.carrier_hz * (speeds[u] / 3.6) / LIGHT_SPEED
        row = []
        for _u2 in range(spec.n_tx_space):
            paths = []
            for k, p in enumerate(powers):
                gain = np.sqrt(p) * (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2)
                delay = (k + (rng.uniform(0.0, 0.9) if k else 0.0)) * spec.sample_period
                doppler = fmax * np.cos(rng.uniform(0.0, 2.0 * np.pi))
                rate = rng.uniform(-rate_max, rate_max)
                paths.append(PropagationPath(delay, gain, doppler, rate))
            row.append(tuple(paths))
        rows.append(tuple(row))
    return PhysicalPathSet(tuple(rows)).normalize_power()


def _eva_path_set(spec: KernelSpec, rng: np.random.Generator) -> PhysicalPathSet:
    frame = spec.n_rx_time * spec.sample_period
    rate_max = 2.0 * spec.doppler_rate_cycles / frame**2
    powers = 10.0 ** (EVA_TAP_POWERS_DB / 10.0)
    powers = powers / powers.sum()
    rows = []
    for _u in range(spec.n_rx_space):
        row = []
        for _u2 in range(spec.n_tx_space):
            speed = rng.uniform(spec.speed_kmh[0], spec.speed_kmh[1])
            fmax = spec.doppler_scale * spec.carrier_hz * (speed / 3.6) / LIGHT_SPEED
            paths = []
            for delay, p in zip(EVA_TAP_DELAYS_S, powers):
                gain = np.sqrt(p) * (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2)
                doppler = fmax * np.cos(rng.uniform(0.0, 2.0 * np.pi))
                rate = rng.uniform(-rate_max, rate_max)
                paths.append(PropagationPath(delay, gain, doppler, rate))
            row.append(tuple(paths))
        rows.append(tuple(row))
    return PhysicalPathSet(tuple(rows)).normalize_power()


def _table_path_set(spec: KernelSpec, rng: np.random.Generator) -> PhysicalPathSet:
    powers = np.array([10.0 ** (p_db / 10.0) for _, p_db, _, _ in spec.taps])
    powers = powers / powers.sum()
    rows = []
    for _u in range(spec.n_rx_space):
        row = []
        for _u2 in range(spec.n_tx_space):
            paths = []
            for (delay, _p_db, doppler, rate), p in zip(spec.taps, powers):
                gain = np.sqrt(p) * (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2)
                paths.append(PropagationPath(delay, gain, doppler, rate))
            row.append(tuple(paths))
        rows.append(tuple(row))
    return PhysicalPathSet(tuple(rows)).normalize_power()


def realize_kernel(spec: KernelSpec, rng: np.random.Generator) -> ChannelKernel:
    """Draw one kernel realization (deterministic for a given generator
    state; models without randomness ignore the generator)."""
    if spec.model == "identity":
        return identity_kernel(spec.n_rx_space, spec.n_rx_time, spec.sample_period)
    if spec.model == "random":
        u, t, u2, t2 = spec.dims
        data = (
            rng.standard_normal((u, t, u2, t2))
            + 1j * rng.standard_normal((u, t, u2, t2))
        ) / np.sqrt(2.0 * u2 * t2)
        return ChannelKernel(u, u2, t, t2, spec.sample_period, data)
    builders = {
        "mu-mimo-ns": _mu_mimo_path_set,
        "eva-ns": _eva_path_set,
        "paths": _table_path_set,
    }
    try:
        builder = builders[spec.model]
    except KeyError:  # pragma: no cover - guarded by KernelSpec validation
        raise ConfigurationError(f"unknown kernel model {spec.model!r}") from None
    for _attempt in range(64):
        kernel = kernel_from_paths(
            builder(spec, rng), spec.n_rx_time, spec.sample_period, spec.n_tx_time
        )
        if spec.min_sigma_ratio <= 0:
            return kernel
        sigmas = np.linalg.svd(unfold(kernel), compute_uv=False)
        if sigmas[-1] > spec.min_sigma_ratio * sigmas[0]:
            return kernel
    raise NumericError(
        f"no {spec.model} realization met min_sigma_ratio="
        f"{spec.min_sigma_ratio:g} in 64 draws"
    )


def perturb_csi(
    kernel: ChannelKernel,
    std: float,
    rng: int | np.random.Generator,
) -> ChannelKernel:
    """Additive relative CSI error.

    Adds ``std * ||K||_F / sqrt(size)`` scaled unit complex Gaussian
    entries; at std 0 the input kernel is returned unchanged.  The draw is
    independent of ``std``, so sweeping the error level with the same
    seed scales a fixed perturbation.
    """
    if std < 0:
        raise ConfigurationError("csi error std must be >= 0")
    if std == 0:
        return kernel
    gen = np.random.default_rng(rng) if isinstance(rng, (int, np.integer)) else rng
    shape = kernel.data.shape
    noise = (gen.standard_normal(shape) + 1j * gen.standard_normal(shape)) / np.sqrt(2)
    scale = std * kernel.frobenius_norm() / np.sqrt(kernel.data.size)
    return ChannelKernel(
        kernel.n_rx_space,
        kernel.n_tx_space,
        kernel.n_rx_time,
        kernel.n_tx_time,
        kernel.sample_period,
        kernel.data + scale * noise,
    )


# ---------------------------------------------------------------------
# per-scheme trial runners
# ---------------------------------------------------------------------


def _complex_noise(rng: np.random.Generator, shape, variance: float) -> np.ndarray:
    return np.sqrt(variance / 2.0) * (
        rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    )


def _operating_eigensystem(
    config: SimConfig, kernel: ChannelKernel, rng_csi: np.random.Generator
) -> EigenSystem:
    source = (
        perturb_csi(kernel, config.csi_error_std, rng_csi)
        if config.csi_error_std > 0
        else kernel
    )
    return decompose(source, _keep_policy(config))


def _trial_precoding(config, kernel, rngs, snr_db):
    rng_bits, rng_noise, rng_csi = rngs
    const = CONSTELLATIONS[config.constellation]
    u, t = kernel.n_rx_space, kernel.n_rx_time
    n_sym = u * t
    bits = rng_bits.integers(0, 2, n_sym * const.bits_per_symbol, dtype=np.uint8)
    frame = qam_map(bits, const)
    s = SpaceTimeSignal(frame.symbols.reshape(u, t))
    if config.scheme == "hogmt-precode":
        eig = _operating_eigensystem(config, kernel, rng_csi)
        pre = hogmt_precode(s, eig)
        tx = pre.tx_signal
        energy = pre.tx_energy
    else:
        slices = spatial_slices(kernel)
        precoder = (
            per_slice_zf_precode if config.scheme == "zf-slice" else per_slice_svd_precode
        )
        res = precoder(slices, s)
        tx = res.tx_signal
        energy = float(np.sum(np.abs(tx.data) ** 2))
    r0 = apply_kernel(kernel, tx)
    n0 = 10.0 ** (-snr_db / 10.0)  # Es = 1 for unit-energy data symbols
    r = SpaceTimeSignal(r0.data + _complex_noise(rng_noise, r0.data.shape, n0))
    estimate = receiver_estimate(r)
    bits_hat = qam_demap(estimate.flatten(), const)
    return int(np.sum(bits_hat != bits)), len(bits), energy


def _trial_mem(config, kernel, rngs, snr_db):
    rng_bits, rng_noise, rng_csi = rngs
    const = CONSTELLATIONS[config.constellation]
    eig = _operating_eigensystem(config, kernel, rng_csi)
    budget = eig.n_kept
    n_zp = int(np.floor(config.zp_fraction * budget)) if config.scheme == "zp-mem" else 0
    n_sym = budget - n_zp
    bits = rng_bits.integers(0, 2, n_sym * const.bits_per_symbol, dtype=np.uint8)
    frame = qam_map(bits, const)
    if config.scheme == "zp-mem":
        mem = zp_mem(frame, eig, config.zp_fraction)
    else:
        mem = mem_modulate(frame, eig)
    r0 = apply_kernel(kernel, mem.tx_signal)
    sigmas = eig.kept_sigmas[mem.carrier_indices]
    es = float(np.mean(sigmas**2))
    n0 = es / 10.0 ** (snr_db / 10.0)
    r = SpaceTimeSignal(r0.data + _complex_noise(rng_noise, r0.data.shape, n0))
    raw = mem_demodulate(r, eig, mem.carrier_indices)
    eq = mem_equalize(raw, eig, mem.carrier_indices, n0, config.mem_equalizer)
    bits_hat = qam_demap(eq, const)
    energy = float(np.sum(np.abs(mem.tx_signal.data) ** 2))
    return int(np.sum(bits_hat != bits)), len(bits), energy


def _trial_single_link(config, kernel, rngs, snr_db):
    rng_bits, rng_noise, _rng_csi = rngs
    const = CONSTELLATIONS[config.constellation]
    if config.scheme == "ofdm":
        n_fft, cp = ofdm_geometry(kernel.n_rx_time)
        n_sym = n_fft
        overhead = 1.0 + cp / n_fft
    else:
        block, cp, n_delay, n_sym = otfs_geometry(
            kernel.n_rx_time, config.otfs_doppler_bins
        )
        overhead = block / n_delay
    bits = rng_bits.integers(0, 2, n_sym * const.bits_per_symbol, dtype=np.uint8)
    frame = qam_map(bits, const)
    if config.scheme == "ofdm":
        errors, n_bits = ofdm_baseline(frame, kernel, snr_db, rng_noise)
    else:
        errors, n_bits = otfs_tfst_baseline(
            frame, kernel, snr_db, rng_noise, config.otfs_doppler_bins
        )
    # expected transmit energy: unit-power samples plus prefix overhead
    energy = float(n_sym) * overhead
    return errors, n_bits, energy


_RUNNERS = {
    "hogmt-precode": _trial_precoding,
    "zf-slice": _trial_precoding,
    "svd-slice": _trial_precoding,
    "mem": _trial_mem,
    "zp-mem": _trial_mem,
    "ofdm": _trial_single_link,
    "otfs-tfst": _trial_single_link,
}


def validate_config(config: SimConfig) -> None:
    """Reject scheme/kernel incompatibilities before any trial runs."""
    spec = config.kernel
    if config.scheme in ("zf-slice", "svd-slice") and spec.n_rx_time != spec.n_tx_time:
        raise ConfigurationError("per-slice schemes need matching time grids")
    if config.scheme in ("ofdm", "otfs-tfst"):
        if spec.n_rx_space != 1 or spec.n_tx_space != 1:
            raise ConfigurationError(
                f"{config.scheme} is a single-link modem; kernel has "
                f"{spec.n_rx_space}x{spec.n_tx_space} space indices"
            )
        if spec.n_rx_time != spec.n_tx_time:
            raise ConfigurationError("modem baselines need matching time grids")
        n = spec.n_rx_time
        if n & (n - 1):
            raise ConfigurationError(f"time grid {n} must be a power of two")
        if config.scheme == "otfs-tfst":
            otfs_geometry(n, config.otfs_doppler_bins)
    if config.constellation not in CONSTELLATIONS:
        raise ConfigurationError(
            f"unknown constellation {config.constellation!r}"
        )


def _run_trial(config: SimConfig, point_idx: int, trial_idx: int, snr_db: float):
    root = np.random.SeedSequence([config.seed, point_idx, trial_idx])
    ss_kernel, ss_bits, ss_noise, ss_csi = root.spawn(4)
    kernel = realize_kernel(config.kernel, np.random.default_rng(ss_kernel))
    rngs = (
        np.random.default_rng(ss_bits),
        np.random.default_rng(ss_noise),
        np.random.default_rng(ss_csi),
    )
    return _RUNNERS[config.scheme](config, kernel, rngs, snr_db)


def run_sweep(config: SimConfig, n_threads: int = 1) -> SimResult:
    """Run the configured Monte-Carlo sweep.

    Deterministic for a fixed config and seed: per-trial substreams make
    the aggregate independent of execution order and ``n_threads``.
    """
    validate_config(config)
    start = time.perf_counter()
    n_points = len(config.snr_grid_db)
    n_trials = config.n_trials
    errors = np.zeros((n_points, n_trials), dtype=np.int64)
    bits = np.zeros((n_points, n_trials), dtype=np.int64)
    energy = np.zeros((n_points, n_trials), dtype=float)

    tasks = [
        (pi, ti, snr)
        for pi, snr in enumerate(config.snr_grid_db)
        for ti in range(n_trials)
    ]

    def work(task):
        pi, ti, snr = task
        return pi, ti, _run_trial(config, pi, ti, snr)

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            for pi, ti, (e, b, en) in pool.map(work, tasks):
                errors[pi, ti] = e
                bits[pi, ti] = b
                energy[pi, ti] = en
    else:
        for task in tasks:
            pi, ti, (e, b, en) = work(task)
            errors[pi, ti] = e
            bits[pi, ti] = b
            energy[pi, ti] = en

    tot_errors = errors.sum(axis=1)
    tot_bits = bits.sum(axis=1)
    ber = tot_errors / tot_bits
    se = np.sqrt(ber * (1.0 - ber) / tot_bits)
    throughput = tot_bits / n_trials
    return SimResult(
        scheme=config.scheme,
        snr_db=tuple(config.snr_grid_db),
        bits=tuple(int(b) for b in tot_bits),
        bit_errors=tuple(int(e) for e in tot_errors),
        ber=tuple(float(x) for x in ber),
        standard_error=tuple(float(x) for x in se),
        throughput_bits_per_frame=tuple(float(x) for x in throughput),
        avg_tx_energy=tuple(float(x) for x in energy.mean(axis=1)),
        seed=config.seed,
        config_hash=config_hash(config),
        wall_time=time.perf_counter() - start,
    )


class ComparisonTable:
    """Aligned multi-scheme view of sweep results."""

    def __init__(self, results):
        if not results:
            raise ConfigurationError("nothing to compare")
        grids = {r.snr_db for r in results}
        if len(grids) != 1:
            raise ConfigurationError(
                f"results use different snr grids: {sorted(grids)}"
            )
        seeds = {r.seed for r in results}
        if len(seeds) != 1:
            raise ConfigurationError(f"results use different seeds: {sorted(seeds)}")
        self.snr_db = results[0].snr_db
        self.results = list(results)
        self.schemes = [r.scheme for r in results]

    def ber(self, scheme: str) -> tuple:
        return self._get(scheme).ber

    def standard_error(self, scheme: str) -> tuple:
        return self._get(scheme).standard_error

    def throughput(self, scheme: str) -> tuple:
        return self._get(scheme).throughput_bits_per_frame

    def throughput_ratio(self, scheme: str) -> tuple:
        base = self.results[0].throughput_bits_per_frame
        other = self.throughput(scheme)
        return tuple(o / b for o, b in zip(other, base))

    def _get(self, scheme: str):
        for r in self.results:
            if r.scheme == scheme:
                return r
        raise ConfigurationError(f"no result for scheme {scheme!r}")


def compare_schemes(results) -> ComparisonTable:
    """Align sweep results sharing a grid and seed for side-by-side
    reporting."""
    return ComparisonTable(list(results))
