import numpy as np
import pytest

from eigenwave import (
    ChannelKernel,
    SimConfig,
    config_hash,
    decompose,
    run_sweep,
)
from eigenwave.config import KernelSpec
from eigenwave.errors import ConfigurationError, FormatError
from eigenwave.fileio import (
    ConfigError,
    append_manifest,
    load_config,
    read_eigensystem,
    read_kernel,
    read_manifest,
    read_results_csv,
    save_config,
    write_eigensystem,
    write_kernel,
    write_results_csv,
)


def random_kernel(rng, dims=(2, 5, 3, 4)):
    u, t, u2, t2 = dims
    data = rng.standard_normal(dims) + 1j * rng.standard_normal(dims)
    return ChannelKernel(u, u2, t, t2, 2.5e-6, data)


class TestKernelFile:
    def test_roundtrip_bitwise(self, tmp_path):
        kernel = random_kernel(np.random.default_rng(0))
        path = tmp_path / "k.hgk"
        write_kernel(kernel, path)
        back = read_kernel(path)
        assert back.dims == kernel.dims
        assert back.sample_period == kernel.sample_period
        assert np.array_equal(back.data, kernel.data)

    def test_header_layout(self, tmp_path):
        kernel = random_kernel(np.random.default_rng(1), (1, 2, 1, 2))
        path = tmp_path / "k.hgk"
        write_kernel(kernel, path)
        raw = path.read_bytes()
        assert raw[:4] == b"HGK1"
        assert np.frombuffer(raw[4:20], dtype="<u4").tolist() == [1, 2, 1, 2]
        assert np.frombuffer(raw[20:28], dtype="<f8")[0] == 2.5e-6
        # row-major complex interleaved f64: first entry is data[0,0,0,0]
        first = np.frombuffer(raw[28:44], dtype="<f8")
        assert first[0] == kernel.data[0, 0, 0, 0].real
        assert first[1] == kernel.data[0, 0, 0, 0].imag

    def test_magic_mismatch(self, tmp_path):
        path = tmp_path / "bad.hgk"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(FormatError):
            read_kernel(path)

    def test_truncated_file(self, tmp_path):
        kernel = random_kernel(np.random.default_rng(2))
        path = tmp_path / "k.hgk"
        write_kernel(kernel, path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(FormatError):
            read_kernel(path)

    def test_trailing_bytes(self, tmp_path):
        kernel = random_kernel(np.random.default_rng(3))
        path = tmp_path / "k.hgk"
        write_kernel(kernel, path)
        path.write_bytes(path.read_bytes() + b"xx")
        with pytest.raises(FormatError):
            read_kernel(path)

    def test_absurd_dimensions_rejected(self, tmp_path):
        import struct

        path = tmp_path / "k.hgk"
        path.write_bytes(
            b"HGK1" + struct.pack("<IIII", 2**20, 2**20, 4, 4) + struct.pack("<d", 1.0)
        )
        with pytest.raises(FormatError):
            read_kernel(path)

    def test_frobenius_preserved_exactly(self, tmp_path):
        kernel = random_kernel(np.random.default_rng(4))
        path = tmp_path / "k.hgk"
        write_kernel(kernel, path)
        assert read_kernel(path).frobenius_norm() == kernel.frobenius_norm()


class TestEigensystemFile:
    def test_roundtrip_bitwise(self, tmp_path):
        from eigenwave import by_count

        kernel = random_kernel(np.random.default_rng(5))
        eig = decompose(kernel, by_count(0.6))
        path = tmp_path / "e.hge"
        write_eigensystem(eig, path)
        back = read_eigensystem(path)
        assert back.n_total == eig.n_total
        assert back.n_kept == eig.n_kept
        assert back.rx_dims == eig.rx_dims
        assert back.tx_dims == eig.tx_dims
        assert np.array_equal(back.sigmas, eig.sigmas)
        assert np.array_equal(back.psi, eig.psi)
        assert np.array_equal(back.phi, eig.phi)

    def test_magic_and_truncation(self, tmp_path):
        kernel = random_kernel(np.random.default_rng(6))
        eig = decompose(kernel)
        path = tmp_path / "e.hge"
        write_eigensystem(eig, path)
        raw = path.read_bytes()
        assert raw[:4] == b"HGE1"
        path.write_bytes(raw[: len(raw) // 2])
        with pytest.raises(FormatError):
            read_eigensystem(path)
        path.write_bytes(b"HGX1" + raw[4:])
        with pytest.raises(FormatError):
            read_eigensystem(path)

    def test_kept_exceeding_total_rejected(self, tmp_path):
        import struct

        path = tmp_path / "e.hge"
        path.write_bytes(b"HGE1" + struct.pack("<IIIIII", 2, 3, 1, 2, 1, 2))
        with pytest.raises(FormatError):
            read_eigensystem(path)


class TestConfigDocuments:
    MINIMAL = """
schema_version = 1

[kernel]
model = "eva-ns"

[sim]
scheme = "mem"
"""

    def test_minimal_with_defaults(self, tmp_path):
        path = tmp_path / "sim.cfg"
        path.write_text(self.MINIMAL)
        cfg = load_config(path)
        assert cfg.scheme == "mem"
        assert cfg.kernel.model == "eva-ns"
        assert cfg.kernel.dims == (1, 64, 1, 64)  # preset expansion
        assert cfg.constellation == "16qam"
        assert cfg.n_trials == 100
        assert cfg.keep_policy == "count"
        assert cfg.keep_fraction == 1.0
        assert cfg.seed == 0

    def test_range_violation_names_field(self, tmp_path):
        path = tmp_path / "sim.cfg"
        path.write_text(self.MINIMAL + "zp_fraction = 1.5\n")
        with pytest.raises(ConfigError) as err:
            load_config(path)
        assert "zp_fraction" in str(err.value)

    def test_unknown_key_rejected_with_line(self, tmp_path):
        path = tmp_path / "sim.cfg"
        path.write_text('[kernel]\nmodel = "eva-ns"\nbogus = 3\n\n[sim]\nscheme = "mem"\n')
        with pytest.raises(ConfigError) as err:
            load_config(path)
        assert "line 3" in str(err.value)
        assert "bogus" in str(err.value)

    def test_all_violations_reported(self, tmp_path):
        path = tmp_path / "sim.cfg"
        path.write_text(
            '[kernel]\nmodel = "eva-ns"\n\n[sim]\nscheme = "mem"\n'
            "n_trials = -2\nzp_fraction = 7\nwhat = 1\n"
        )
        with pytest.raises(ConfigError) as err:
            load_config(path)
        text = str(err.value)
        assert "what" in text  # unknown key reported alongside range errors

    def test_syntax_error_line_precise(self, tmp_path):
        path = tmp_path / "sim.cfg"
        path.write_text('[kernel]\nmodel = "eva-ns"\nnot a key value\n')
        with pytest.raises(ConfigError) as err:
            load_config(path)
        assert "line 3" in str(err.value)

    def test_unquoted_string_rejected(self, tmp_path):
        path = tmp_path / "sim.cfg"
        path.write_text("[kernel]\nmodel = eva-ns\n\n[sim]\nscheme = \"mem\"\n")
        with pytest.raises(ConfigError) as err:
            load_config(path)
        assert "quoted" in str(err.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(tmp_path / "absent.cfg")

    def test_preset_roundtrip_through_save(self, tmp_path):
        path = tmp_path / "sim.cfg"
        path.write_text(self.MINIMAL)
        cfg = load_config(path)
        out = tmp_path / "expanded.cfg"
        save_config(cfg, out)
        cfg2 = load_config(out)
        assert cfg2 == cfg
        assert config_hash(cfg2) == config_hash(cfg)

    def test_paths_section(self, tmp_path):
        path = tmp_path / "sim.cfg"
        path.write_text(
            """
[kernel]
model = "paths"
dims = [1, 16, 1, 16]
sample_period = 1.0

[paths]
tap = [0.0, 0.0, 0.1, 0.0]
tap = [1.0, -3.0, 0.0, 0.0]

[sim]
scheme = "mem"
"""
        )
        cfg = load_config(path)
        assert cfg.kernel.model == "paths"
        assert len(cfg.kernel.taps) == 2
        assert cfg.kernel.taps[1] == (1.0, -3.0, 0.0, 0.0)
        out = tmp_path / "out.cfg"
        save_config(cfg, out)
        assert load_config(out) == cfg

    def test_hash_stable_under_key_reordering(self, tmp_path):
        a = tmp_path / "a.cfg"
        b = tmp_path / "b.cfg"
        a.write_text(
            '[kernel]\nmodel = "eva-ns"\n\n[sim]\nscheme = "mem"\nseed = 4\nn_trials = 7\n'
        )
        b.write_text(
            '[sim]\nn_trials = 7\nseed = 4\nscheme = "mem"\n\n[kernel]\nmodel = "eva-ns"\n'
        )
        assert config_hash(load_config(a)) == config_hash(load_config(b))

    def test_bad_schema_version(self, tmp_path):
        path = tmp_path / "sim.cfg"
        path.write_text("schema_version = 9\n" + self.MINIMAL)
        with pytest.raises(ConfigError) as err:
            load_config(path)
        assert "schema_version" in str(err.value)

    def test_comments_and_blank_lines(self, tmp_path):
        path = tmp_path / "sim.cfg"
        path.write_text(
            "# comment\n[kernel]\nmodel = \"eva-ns\"  # preset\n\n[sim]\nscheme = \"mem\"\n"
        )
        assert load_config(path).scheme == "mem"


class TestResultsCsv:
    def _result(self):
        cfg = SimConfig(
            kernel=KernelSpec(model="identity", n_rx_space=1, n_tx_space=1,
                              n_rx_time=8, n_tx_time=8),
            scheme="hogmt-precode",
            snr_grid_db=(5.0, 10.0),
            n_trials=3,
            seed=2,
        )
        return run_sweep(cfg)

    def test_roundtrip(self, tmp_path):
        result = self._result()
        path = tmp_path / "r.csv"
        write_results_csv(result, path)
        back = read_results_csv(path)
        assert back.scheme == result.scheme
        assert back.snr_db == result.snr_db
        assert back.bits == result.bits
        assert back.bit_errors == result.bit_errors
        assert back.ber == result.ber
        assert back.standard_error == result.standard_error
        assert back.avg_tx_energy == result.avg_tx_energy
        assert back.config_hash == result.config_hash

    def test_header_mismatch(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("foo,bar\n1,2\n")
        with pytest.raises(FormatError):
            read_results_csv(path)

    def test_manifest_roundtrip(self, tmp_path):
        man = tmp_path / "manifest.txt"
        append_manifest("a.csv", man)
        append_manifest("b.csv", man)
        append_manifest("a.csv", man)  # deduplicated
        assert read_manifest(man) == ["a.csv", "b.csv"]

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(ConfigurationError):
            read_manifest(tmp_path / "none.txt")
