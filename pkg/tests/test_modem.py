import numpy as np
import pytest

from eigenwave import (
    CapacityError,
    PhysicalPathSet,
    PropagationPath,
    SpaceTimeSignal,
    apply_kernel,
    decompose,
    identity_kernel,
    kernel_from_paths,
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
from eigenwave.errors import ConfigurationError
from eigenwave.modem import CONSTELLATIONS, ofdm_geometry, otfs_geometry


class TestQamMapping:
    def test_all_zero_bits_16qam(self):
        frame = qam_map(np.zeros(16, dtype=np.uint8), "16qam")
        assert len(frame.symbols) == 4
        # label 0 maps to one fixed corner-region point, repeated
        assert np.allclose(frame.symbols, frame.symbols[0])
        assert np.array_equal(qam_demap(frame.symbols, "16qam"), frame.bits)

    @pytest.mark.parametrize("name", ["qpsk", "16qam", "64qam"])
    def test_exhaustive_bijectivity(self, name):
        const = CONSTELLATIONS[name]
        labels = np.arange(const.order)
        points = const.map_labels(labels)
        assert np.array_equal(const.demap_labels(points), labels)
        # distinct points
        assert len(np.unique(np.round(points, 12))) == const.order

    @pytest.mark.parametrize("name", ["qpsk", "16qam", "64qam"])
    def test_unit_average_energy(self, name):
        const = CONSTELLATIONS[name]
        assert np.mean(np.abs(const.points) ** 2) == pytest.approx(1.0, rel=1e-12)

    def test_gray_neighbours_differ_by_one_bit(self):
        const = CONSTELLATIONS["16qam"]
        pts = const.points
        for a in range(16):
            for b in range(16):
                d = abs(pts[a] - pts[b])
                if 0 < d < 0.7:  # nearest neighbours at spacing 2/sqrt(10)
                    assert bin(a ^ b).count("1") == 1

    def test_bit_length_validation(self):
        with pytest.raises(ConfigurationError):
            qam_map(np.zeros(5, dtype=np.uint8), "16qam")

    @pytest.mark.parametrize("name", ["qpsk", "16qam", "64qam"])
    def test_roundtrip_random(self, name):
        rng = np.random.default_rng(0)
        const = CONSTELLATIONS[name]
        bits = rng.integers(0, 2, 60 * const.bits_per_symbol, dtype=np.uint8)
        frame = qam_map(bits, name)
        assert np.array_equal(qam_demap(frame.symbols, name), bits)


class TestAwgnOracles:
    def test_known_16qam_value(self):
        # textbook exact value at Es/N0 = 10 dB
        assert qam_ber_awgn(10.0, "16qam") == pytest.approx(0.0590, abs=2e-4)

    @pytest.mark.parametrize("name,snr", [("qpsk", 6.0), ("16qam", 12.0), ("64qam", 18.0)])
    def test_monte_carlo_agreement(self, name, snr):
        rng = np.random.default_rng(1)
        const = CONSTELLATIONS[name]
        n = 200_000
        labels = rng.integers(0, const.order, n)
        tx = const.map_labels(labels)
        n0 = 10 ** (-snr / 10)
        rx = tx + np.sqrt(n0 / 2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        hat = const.demap_labels(rx)
        ser = np.mean(hat != labels)
        ser_th = qam_ser_awgn(snr, name)
        se = np.sqrt(ser_th * (1 - ser_th) / n)
        assert abs(ser - ser_th) < 3 * se
        errs = sum(bin(int(a) ^ int(b)).count("1") for a, b in zip(labels, hat))
        nbits = n * const.bits_per_symbol
        ber = errs / nbits
        ber_th = qam_ber_awgn(snr, name)
        se_b = np.sqrt(ber_th * (1 - ber_th) / nbits)
        assert abs(ber - ber_th) < 3 * se_b

    def test_ber_decreases_with_snr(self):
        vals = [qam_ber_awgn(s, "16qam") for s in (0, 5, 10, 15, 20)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


def eva_ns_kernel(seed, n_time=64, ts=1e-6, doppler_scale=128.0, rate_cycles=0.25):
    from eigenwave.config import preset_kernel_spec
    from eigenwave.simulate import realize_kernel

    spec = preset_kernel_spec("eva-ns")
    from dataclasses import replace

    spec = replace(
        spec,
        n_rx_time=n_time,
        n_tx_time=n_time,
        sample_period=ts,
        doppler_scale=doppler_scale,
        doppler_rate_cycles=rate_cycles,
    )
    return realize_kernel(spec, np.random.default_rng(seed))


def single_path_kernel(n_time, doppler_hz=0.0, rate=0.0, delay=0.0, ts=1.0):
    paths = PhysicalPathSet(
        (((PropagationPath(delay, 1.0, doppler_hz, rate),),),)
    )
    return kernel_from_paths(paths, n_time, ts)


class TestMemModulation:
    def test_identity_kernel_subspace(self):
        rng = np.random.default_rng(2)
        kernel = identity_kernel(1, 8)
        eig = decompose(kernel)
        bits = rng.integers(0, 2, 8 * 4, dtype=np.uint8)
        frame = qam_map(bits, "16qam")
        mem = mem_modulate(frame, eig)
        # tx lives in the span of the symbol placement; round trip is exact
        raw = mem_demodulate(
            apply_kernel(kernel, mem.tx_signal), eig, mem.carrier_indices
        )
        eq = mem_equalize(raw, eig, mem.carrier_indices)
        assert np.allclose(eq, frame.symbols, atol=1e-10)

    def test_single_carrier_duality(self):
        kernel = eva_ns_kernel(3, n_time=32)
        eig = decompose(kernel)
        sym = np.array([0.6 - 0.8j])
        tx = SpaceTimeSignal.from_flat(np.conj(eig.phi[0]) * sym[0], 1, 32)
        rx = apply_kernel(kernel, tx)
        expected = eig.sigmas[0] * sym[0] * eig.psi[0]
        assert np.linalg.norm(rx.flatten() - expected) < 1e-10 * eig.sigmas[0]

    def test_full_frame_noiseless_demodulation(self):
        rng = np.random.default_rng(4)
        kernel = eva_ns_kernel(4, n_time=32)
        eig = decompose(kernel)
        bits = rng.integers(0, 2, 32 * 4, dtype=np.uint8)
        frame = qam_map(bits, "16qam")
        mem = mem_modulate(frame, eig)
        raw = mem_demodulate(
            apply_kernel(kernel, mem.tx_signal), eig, mem.carrier_indices
        )
        expected = eig.kept_sigmas[mem.carrier_indices] * frame.symbols
        scale = max(eig.sigmas[0], 1.0)
        assert np.max(np.abs(raw - expected)) < 1e-10 * scale

    def test_cross_talk_energy_below_1e20(self):
        kernel = eva_ns_kernel(5, n_time=32)
        eig = decompose(kernel)
        # energy of <sigma_m s_m psi_m, psi_n> for n != m
        for m, n in ((0, 1), (3, 17), (30, 2)):
            contribution = eig.sigmas[m] * 1.0 * eig.psi[m]
            leak = np.vdot(eig.psi[n], contribution)
            assert np.abs(leak) ** 2 < 1e-20

    def test_noise_only_outputs_are_white(self):
        rng = np.random.default_rng(6)
        kernel = eva_ns_kernel(6, n_time=32)
        eig = decompose(kernel)
        carriers = np.arange(32)
        n0 = 0.5
        outs = []
        for _ in range(3000):
            noise = np.sqrt(n0 / 2) * (
                rng.standard_normal((1, 32)) + 1j * rng.standard_normal((1, 32))
            )
            outs.append(mem_demodulate(SpaceTimeSignal(noise), eig, carriers))
        outs = np.array(outs)
        # variance N0 on every carrier, no cross-correlation
        var = np.mean(np.abs(outs) ** 2, axis=0)
        assert np.allclose(var, n0, rtol=0.15)
        corr = (outs[:, 0] * np.conj(outs[:, 1])).mean()
        assert abs(corr) < 5 * n0 / np.sqrt(len(outs))

    def test_capacity_error(self):
        kernel = identity_kernel(1, 4)
        eig = decompose(kernel)
        bits = np.zeros(5 * 4, dtype=np.uint8)
        with pytest.raises(CapacityError):
            mem_modulate(qam_map(bits, "16qam"), eig)

    def test_carrier_index_validation(self):
        kernel = identity_kernel(1, 4)
        eig = decompose(kernel)
        r = SpaceTimeSignal(np.zeros((1, 4), dtype=complex))
        with pytest.raises(ConfigurationError):
            mem_demodulate(r, eig, np.array([4]))

    def test_mmse_equalizer_shrinks_towards_zero(self):
        kernel = eva_ns_kernel(15, n_time=32)
        eig = decompose(kernel)
        carriers = np.arange(8)
        raw = eig.kept_sigmas[carriers] * (1.0 + 0.0j)  # sigma_n * s_n with s_n = 1
        zf = mem_equalize(raw, eig, carriers, mode="zf")
        assert np.allclose(zf, 1.0)
        n0 = 0.5
        mmse = mem_equalize(raw, eig, carriers, noise_variance=n0, mode="mmse")
        sig = eig.kept_sigmas[carriers]
        assert np.allclose(mmse, sig**2 / (sig**2 + n0))
        assert np.all(np.abs(mmse) < 1.0)
        with pytest.raises(ConfigurationError):
            mem_equalize(raw, eig, carriers, mode="lmmse")


class TestZeroPadding:
    def test_zero_fraction_equals_plain_mem(self):
        rng = np.random.default_rng(7)
        kernel = eva_ns_kernel(7, n_time=32)
        eig = decompose(kernel)
        bits = rng.integers(0, 2, 32 * 4, dtype=np.uint8)
        frame = qam_map(bits, "16qam")
        a = mem_modulate(frame, eig)
        b = zp_mem(frame, eig, 0.0)
        assert np.allclose(a.tx_signal.data, b.tx_signal.data)
        assert b.zero_padded == 0

    def test_one_eighth_of_64_carriers(self):
        kernel = eva_ns_kernel(8, n_time=64)
        eig = decompose(kernel)
        assert eig.n_kept == 64
        bits = np.zeros(56 * 4, dtype=np.uint8)
        frame = qam_map(bits, "16qam")
        mem = zp_mem(frame, eig, 1.0 / 8.0)
        assert mem.zero_padded == 8
        assert len(mem.carrier_indices) == 56
        # throughput ratio (1 - zp_fraction) exactly
        assert (len(mem.carrier_indices) * 4) / (64 * 4) == pytest.approx(7 / 8)

    def test_overfull_frame_rejected(self):
        kernel = identity_kernel(1, 8)
        eig = decompose(kernel)
        bits = np.zeros(8 * 4, dtype=np.uint8)
        with pytest.raises(CapacityError):
            zp_mem(qam_map(bits, "16qam"), eig, 0.25)

    def test_zp_beats_plain_mem_at_moderate_snr(self):
        # weakest carriers dominate the error count; silencing them helps
        rng = np.random.default_rng(9)
        snr_db = 15.0
        errs = {"mem": 0, "zp": 0}
        bits_count = {"mem": 0, "zp": 0}
        for trial in range(30):
            kernel = eva_ns_kernel(100 + trial)
            eig = decompose(kernel)
            for mode in ("mem", "zp"):
                n_zp = 8 if mode == "zp" else 0
                n_sym = eig.n_kept - n_zp
                bits = rng.integers(0, 2, n_sym * 4, dtype=np.uint8)
                frame = qam_map(bits, "16qam")
                mem = (
                    zp_mem(frame, eig, 1 / 8) if mode == "zp" else mem_modulate(frame, eig)
                )
                sig = eig.kept_sigmas[mem.carrier_indices]
                n0 = float(np.mean(sig**2)) / 10 ** (snr_db / 10)
                rx = apply_kernel(kernel, mem.tx_signal, n0, rng)
                raw = mem_demodulate(rx, eig, mem.carrier_indices)
                eq = mem_equalize(raw, eig, mem.carrier_indices)
                errs[mode] += int(np.sum(qam_demap(eq, "16qam") != bits))
                bits_count[mode] += len(bits)
        ber_mem = errs["mem"] / bits_count["mem"]
        ber_zp = errs["zp"] / bits_count["zp"]
        assert ber_zp < ber_mem


class TestOfdmBaseline:
    def test_geometry(self):
        assert ofdm_geometry(64) == (32, 8)

    def test_flat_lti_matches_awgn_oracle(self):
        # single-tap unit-gain channel: one-tap equalization is exact
        rng = np.random.default_rng(10)
        kernel = single_path_kernel(64, delay=1.0)
        snr = 12.0
        errors = 0
        bits_total = 0
        for _ in range(300):
            bits = rng.integers(0, 2, 32 * 4, dtype=np.uint8)
            frame = qam_map(bits, "16qam")
            e, b = ofdm_baseline(frame, kernel, snr, rng)
            errors += e
            bits_total += b
        ber = errors / bits_total
        th = qam_ber_awgn(snr, "16qam")
        se = np.sqrt(th * (1 - th) / bits_total)
        assert abs(ber - th) < 3 * se

    def test_doppler_causes_error_floor(self):
        rng = np.random.default_rng(11)
        nu = 1.0 / 64.0  # one cycle per grid in normalized time
        kernel = single_path_kernel(64, doppler_hz=nu)
        errors = 0
        bits_total = 0
        for _ in range(100):
            bits = rng.integers(0, 2, 32 * 4, dtype=np.uint8)
            frame = qam_map(bits, "16qam")
            e, b = ofdm_baseline(frame, kernel, 30.0, rng)
            errors += e
            bits_total += b
        assert errors / bits_total > 0.01

    def test_frame_size_validation(self):
        kernel = single_path_kernel(64)
        bits = np.zeros(10 * 4, dtype=np.uint8)
        with pytest.raises(ConfigurationError):
            ofdm_baseline(qam_map(bits, "16qam"), kernel, 10.0, np.random.default_rng(0))

    def test_multi_link_rejected(self):
        kernel = identity_kernel(2, 64)
        bits = np.zeros(32 * 4, dtype=np.uint8)
        with pytest.raises(ConfigurationError):
            ofdm_baseline(qam_map(bits, "16qam"), kernel, 10.0, np.random.default_rng(0))


class TestOtfsBaseline:
    def test_geometry(self):
        block, cp, n_delay, n_sym = otfs_geometry(64, 8)
        assert (block, cp, n_delay, n_sym) == (8, 2, 6, 48)

    def test_static_channel_roundtrip(self):
        rng = np.random.default_rng(12)
        kernel = single_path_kernel(64, delay=0.0)
        bits = rng.integers(0, 2, 48 * 4, dtype=np.uint8)
        frame = qam_map(bits, "16qam")
        e, b = otfs_tfst_baseline(frame, kernel, 100.0, rng)
        assert e == 0 and b == 192

    def test_beats_ofdm_under_constant_doppler(self):
        rng = np.random.default_rng(13)
        nu = 1.5 / 64.0
        kernel = single_path_kernel(64, doppler_hz=nu)
        snr = 20.0
        e_ofdm = e_otfs = b_ofdm = b_otfs = 0
        for _ in range(150):
            bits = rng.integers(0, 2, 32 * 4, dtype=np.uint8)
            e, b = ofdm_baseline(qam_map(bits, "16qam"), kernel, snr, rng)
            e_ofdm += e
            b_ofdm += b
            bits = rng.integers(0, 2, 48 * 4, dtype=np.uint8)
            e, b = otfs_tfst_baseline(qam_map(bits, "16qam"), kernel, snr, rng)
            e_otfs += e
            b_otfs += b
        assert e_otfs / b_otfs < e_ofdm / b_ofdm

    def test_nonstationary_kernel_floors_otfs_but_not_mem(self):
        rng = np.random.default_rng(14)
        snr = 25.0
        e_otfs = b_otfs = 0
        e_mem = b_mem = 0
        for trial in range(60):
            kernel = eva_ns_kernel(200 + trial)
            bits = rng.integers(0, 2, 48 * 4, dtype=np.uint8)
            e, b = otfs_tfst_baseline(qam_map(bits, "16qam"), kernel, snr, rng)
            e_otfs += e
            b_otfs += b
            eig = decompose(kernel)
            # use the strongest 48 carriers for a like-for-like payload
            bits = rng.integers(0, 2, 48 * 4, dtype=np.uint8)
            frame = qam_map(bits, "16qam")
            mem = mem_modulate(frame, eig)
            sig = eig.kept_sigmas[mem.carrier_indices]
            n0 = float(np.mean(sig**2)) / 10 ** (snr / 10)
            rx = apply_kernel(kernel, mem.tx_signal, n0, rng)
            eq = mem_equalize(
                mem_demodulate(rx, eig, mem.carrier_indices), eig, mem.carrier_indices
            )
            e_mem += int(np.sum(qam_demap(eq, "16qam") != bits))
            b_mem += len(bits)
        assert e_otfs / b_otfs > 0.05  # error floor
        assert e_mem / b_mem < 0.5 * (e_otfs / b_otfs)
