"""Persistence: strict config documents, binary kernel/eigensystem files,
results CSV and sweep manifests.

Binary layouts (little-endian throughout):

kernel file
    magic ``HGK1`` | u32 U, T, U2, T2 | f64 sample_period |
    complex entries row-major (u slowest; t; u2; t2 fastest) as
    interleaved f64 (re, im).

eigensystem file
    magic ``HGE1`` | u32 n_total, n_kept, U, T, U2, T2 |
    f64 sigmas[n_total] | psi rows (n_total x U*T complex) |
    phi rows (n_total x U2*T2 complex).

Config documents are ``key = value`` lines under ``[section]`` headers;
parsers reject rather than coerce, and report every violation with its
line number.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import fields
from pathlib import Path

import numpy as np

from .config import (
    KERNEL_MODELS,
    SCHEMA_VERSION,
    SCHEMES,
    KernelSpec,
    SimConfig,
    SimResult,
    preset_kernel_spec,
)
from .decomposition import EigenSystem
from .errors import ConfigurationError, FormatError
from .kernels import ChannelKernel

__all__ = [
    "ConfigError",
    "load_config",
    "save_config",
    "write_kernel",
    "read_kernel",
    "write_eigensystem",
    "read_eigensystem",
    "write_results_csv",
    "read_results_csv",
    "load_kernel_spec",
    "write_manifest",
    "append_manifest",
    "read_manifest",
]

KERNEL_MAGIC = b"HGK1"
EIGEN_MAGIC = b"HGE1"
MAX_ENTRIES = 1 << 34  # refuse absurd headers before allocating


class ConfigError(ConfigurationError):
    """Carries every violation found in a config document."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("\n".join(self.violations))


# ---------------------------------------------------------------------
# config documents
# ---------------------------------------------------------------------


def _parse_value(text: str, line_no: int, violations: list):
    text = text.strip()
    if not text:
        violations.append(f"line {line_no}: empty value")
        return None
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    if text.startswith("["):
        if not text.endswith("]"):
            violations.append(f"line {line_no}: unterminated list")
            return None
        inner = text[1:-1].strip()
        if not inner:
            return []
        items = []
        for part in inner.split(","):
            items.append(_parse_value(part.strip(), line_no, violations))
        return items
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        violations.append(
            f"line {line_no}: cannot parse value {text!r} "
            "(strings must be quoted)"
        )
        return None


def _strip_comment(line: str) -> str:
    out = []
    quoted = False
    for ch in line:
        if ch == '"':
            quoted = not quoted
        if ch == "#" and not quoted:
            break
        out.append(ch)
    return "".join(out)


def parse_config_text(text: str):
    """Parse a config document into {section: {key: [(value, line)^+]}}.

    The empty-string section holds top-level keys.  Raises
    :class:`ConfigError` listing every syntax violation.
    """
    sections: dict = {"": {}}
    current = ""
    violations: list = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                violations.append(f"line {line_no}: malformed section header")
                continue
            current = line[1:-1].strip()
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            violations.append(f"line {line_no}: expected 'key = value'")
            continue
        key, _, value_text = line.partition("=")
        key = key.strip()
        if not key:
            violations.append(f"line {line_no}: missing key")
            continue
        value = _parse_value(value_text, line_no, violations)
        sections[current].setdefault(key, []).append((value, line_no))
    if violations:
        raise ConfigError(violations)
    return sections


# schema: key -> (type-check, range message, converter)
def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _number_list(v):
    return isinstance(v, list) and all(_is_number(x) for x in v)


_KERNEL_KEYS = {
    "model": "string",
    "dims": "int-list-4",
    "sample_period": "number",
    "carrier_hz": "number",
    "speed_kmh": "number-list-2",
    "doppler_scale": "number",
    "doppler_rate_cycles": "number",
    "tap_powers": "number-list",
}

_SIM_KEYS = {
    "scheme": "string",
    "constellation": "string",
    "snr_db": "number-list",
    "n_trials": "int",
    "keep_policy": "string",
    "keep_fraction": "number",
    "zp_fraction": "number",
    "csi_error_std": "number",
    "seed": "int",
    "mem_equalizer": "string",
    "otfs_doppler_bins": "int",
}

# value-range checks applied per key so every violation is reported with
# its line, not just the first one the constructor happens to hit
_RANGE_CHECKS = {
    "scheme": (lambda v: v in SCHEMES, f"must be one of {SCHEMES}"),
    "n_trials": (lambda v: v >= 1, "must be >= 1"),
    "keep_policy": (lambda v: v in ("count", "energy"), "must be 'count' or 'energy'"),
    "keep_fraction": (lambda v: 0.0 < v <= 1.0, "outside (0, 1]"),
    "zp_fraction": (lambda v: 0.0 <= v < 1.0, "outside [0, 1)"),
    "csi_error_std": (lambda v: v >= 0.0, "must be >= 0"),
    "otfs_doppler_bins": (lambda v: v >= 1, "must be >= 1"),
    "snr_db": (
        lambda v: all(b > a for a, b in zip(v, v[1:])) and len(v) > 0,
        "must be non-empty and strictly ascending",
    ),
    "sample_period": (lambda v: v > 0, "must be positive"),
    "carrier_hz": (lambda v: v > 0, "must be positive"),
    "dims": (lambda v: all(x >= 1 for x in v), "entries must be >= 1"),
}


def _check_type(kind, value) -> bool:
    if kind == "string":
        return isinstance(value, str)
    if kind == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == "number":
        return _is_number(value)
    if kind == "number-list":
        return _number_list(value)
    if kind == "number-list-2":
        return _number_list(value) and len(value) == 2
    if kind == "int-list-4":
        return (
            isinstance(value, list)
            and len(value) == 4
            and all(isinstance(x, int) and not isinstance(x, bool) for x in value)
        )
    raise AssertionError(kind)


def _take_single(entries, key, section, violations):
    if len(entries) > 1:
        lines = ", ".join(str(ln) for _, ln in entries)
        violations.append(
            f"line {entries[-1][1]}: duplicate key {key!r} in [{section}] "
            f"(lines {lines})"
        )
    return entries[-1]


def load_config(path) -> SimConfig:
    """Load and validate a sweep configuration.

    Unknown sections/keys, type errors and range errors are all collected
    and reported together, each with its line number.
    """
    spec, sim_kwargs = _load_document(path, require_scheme=True)
    try:
        return SimConfig(kernel=spec, **sim_kwargs)
    except ConfigurationError as exc:
        raise ConfigError([f"[sim]: {exc}"]) from exc


def load_kernel_spec(path) -> KernelSpec:
    """Load just the kernel description from a config document (the
    [sim] section, if present, is validated but not required)."""
    spec, _ = _load_document(path, require_scheme=False)
    return spec


def _load_document(path, require_scheme: bool):
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    sections = parse_config_text(path.read_text())
    violations: list = []

    known_sections = {"", "kernel", "sim", "paths"}
    for name, content in sections.items():
        if name not in known_sections:
            first_line = min(ln for entries in content.values() for _, ln in entries) if content else 0
            violations.append(f"line {first_line}: unknown section [{name}]")

    top = sections.get("", {})
    for key, entries in top.items():
        if key != "schema_version":
            violations.append(
                f"line {entries[0][1]}: unknown top-level key {key!r}"
            )
    if "schema_version" in top:
        value, line_no = _take_single(top["schema_version"], "schema_version", "", violations)
        if value != SCHEMA_VERSION:
            violations.append(
                f"line {line_no}: schema_version {value!r} unsupported "
                f"(expected {SCHEMA_VERSION})"
            )

    def collect(section_name, schema):
        out = {}
        for key, entries in sections.get(section_name, {}).items():
            if key not in schema:
                violations.append(
                    f"line {entries[0][1]}: unknown key {key!r} in [{section_name}]"
                )
                continue
            value, line_no = _take_single(entries, key, section_name, violations)
            if not _check_type(schema[key], value):
                violations.append(
                    f"line {line_no}: key {key!r} expects {schema[key]}, "
                    f"got {value!r}"
                )
                continue
            if key in _RANGE_CHECKS:
                ok, message = _RANGE_CHECKS[key]
                if not ok(value):
                    violations.append(
                        f"line {line_no}: {key} = {value!r} {message}"
                    )
                    continue
            out[key] = (value, line_no)
        return out

    kern = collect("kernel", _KERNEL_KEYS)
    sim = collect("sim", _SIM_KEYS)

    taps = []
    for key, entries in sections.get("paths", {}).items():
        if key != "tap":
            violations.append(
                f"line {entries[0][1]}: unknown key {key!r} in [paths] "
                "(only 'tap' is allowed)"
            )
            continue
        for value, line_no in entries:
            if not (_number_list(value) and len(value) == 4):
                violations.append(
                    f"line {line_no}: tap expects [delay_s, power_db, "
                    f"doppler_hz, doppler_rate_hz_per_s], got {value!r}"
                )
                continue
            taps.append(tuple(float(x) for x in value))

    if "model" not in kern:
        violations.append("line 0: [kernel] section must set 'model'")
    if require_scheme and "scheme" not in sim:
        violations.append("line 0: [sim] section must set 'scheme'")
    if violations:
        raise ConfigError(violations)

    model = kern["model"][0]
    model_line = kern["model"][1]
    if model not in KERNEL_MODELS:
        raise ConfigError(
            [f"line {model_line}: unknown kernel model {model!r} "
             f"(choose from {KERNEL_MODELS})"]
        )
    dims = tuple(kern["dims"][0]) if "dims" in kern else None
    try:
        if model in ("mu-mimo-ns", "eva-ns", "identity", "random"):
            spec = preset_kernel_spec(model, dims)
            overrides = {}
            for key in ("sample_period", "carrier_hz", "doppler_scale",
                        "doppler_rate_cycles"):
                if key in kern:
                    overrides[key] = kern[key][0]
            if "speed_kmh" in kern:
                overrides["speed_kmh"] = tuple(kern["speed_kmh"][0])
            if "tap_powers" in kern:
                overrides["tap_powers"] = tuple(kern["tap_powers"][0])
            if overrides:
                values = {f.name: getattr(spec, f.name) for f in fields(spec)}
                values.update(overrides)
                spec = KernelSpec(**values)
        else:  # explicit path table
            u, t, u2, t2 = dims if dims else (1, 16, 1, 16)
            spec = KernelSpec(
                model="paths",
                n_rx_space=u,
                n_rx_time=t,
                n_tx_space=u2,
                n_tx_time=t2,
                sample_period=kern.get("sample_period", (1.0, 0))[0],
                taps=tuple(taps),
                carrier_hz=kern.get("carrier_hz", (2e9, 0))[0],
            )
    except ConfigurationError as exc:
        raise ConfigError([f"[kernel]: {exc}"]) from exc

    sim_kwargs = {}
    mapping = {
        "scheme": "scheme",
        "constellation": "constellation",
        "snr_db": "snr_grid_db",
        "n_trials": "n_trials",
        "keep_policy": "keep_policy",
        "keep_fraction": "keep_fraction",
        "zp_fraction": "zp_fraction",
        "csi_error_std": "csi_error_std",
        "seed": "seed",
        "mem_equalizer": "mem_equalizer",
        "otfs_doppler_bins": "otfs_doppler_bins",
    }
    for key, (value, _line_no) in sim.items():
        field_name = mapping[key]
        if key == "snr_db":
            value = tuple(float(x) for x in value)
        sim_kwargs[field_name] = value
    return spec, sim_kwargs


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return f'"{value}"'
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    raise ConfigurationError(f"cannot serialize {value!r}")


def save_config(config: SimConfig, path) -> None:
    """Write the fully-expanded canonical form of a configuration."""
    spec = config.kernel
    lines = [f"schema_version = {SCHEMA_VERSION}", "", "[kernel]"]
    lines.append(f'model = "{spec.model}"')
    lines.append(f"dims = {_format_value(list(spec.dims))}")
    lines.append(f"sample_period = {_format_value(spec.sample_period)}")
    lines.append(f"carrier_hz = {_format_value(spec.carrier_hz)}")
    if spec.model in ("mu-mimo-ns", "eva-ns"):
        lines.append(f"speed_kmh = {_format_value(list(spec.speed_kmh))}")
        lines.append(f"doppler_scale = {_format_value(spec.doppler_scale)}")
        lines.append(
            f"doppler_rate_cycles = {_format_value(spec.doppler_rate_cycles)}"
        )
        if spec.tap_powers:
            lines.append(f"tap_powers = {_format_value(list(spec.tap_powers))}")
    if spec.taps:
        lines.append("")
        lines.append("[paths]")
        for tap in spec.taps:
            lines.append(f"tap = {_format_value(list(tap))}")
    lines += [
        "",
        "[sim]",
        f'scheme = "{config.scheme}"',
        f'constellation = "{config.constellation}"',
        f"snr_db = {_format_value(list(config.snr_grid_db))}",
        f"n_trials = {config.n_trials}",
        f'keep_policy = "{config.keep_policy}"',
        f"keep_fraction = {_format_value(config.keep_fraction)}",
        f"zp_fraction = {_format_value(config.zp_fraction)}",
        f"csi_error_std = {_format_value(config.csi_error_std)}",
        f"seed = {config.seed}",
        f'mem_equalizer = "{config.mem_equalizer}"',
        f"otfs_doppler_bins = {config.otfs_doppler_bins}",
        "",
    ]
    Path(path).write_text("\n".join(lines))


# ---------------------------------------------------------------------
# binary kernel / eigensystem files
# ---------------------------------------------------------------------


def write_kernel(kernel: ChannelKernel, path) -> None:
    u, t, u2, t2 = kernel.dims
    payload = np.ascontiguousarray(kernel.data, dtype="<c16").tobytes()
    with open(path, "wb") as fh:
        fh.write(KERNEL_MAGIC)
        fh.write(struct.pack("<IIII", u, t, u2, t2))
        fh.write(struct.pack("<d", kernel.sample_period))
        fh.write(payload)


def read_kernel(path) -> ChannelKernel:
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != KERNEL_MAGIC:
        raise FormatError(
            f"{path}: not a kernel file (magic {raw[:4]!r}, expected "
            f"{KERNEL_MAGIC!r})"
        )
    header = 4 + 16 + 8
    if len(raw) < header:
        raise FormatError(f"{path}: truncated kernel header")
    u, t, u2, t2 = struct.unpack_from("<IIII", raw, 4)
    (sample_period,) = struct.unpack_from("<d", raw, 20)
    n_entries = u * t * u2 * t2
    if min(u, t, u2, t2) == 0 or n_entries > MAX_ENTRIES:
        raise FormatError(
            f"{path}: unreasonable kernel dimensions ({u}, {t}, {u2}, {t2})"
        )
    expected = header + 16 * n_entries
    if len(raw) < expected:
        raise FormatError(
            f"{path}: truncated kernel data ({len(raw)} bytes, expected "
            f"{expected})"
        )
    if len(raw) > expected:
        raise FormatError(f"{path}: {len(raw) - expected} trailing bytes")
    data = np.frombuffer(raw, dtype="<c16", count=n_entries, offset=header)
    return ChannelKernel(
        u, u2, t, t2, sample_period, data.reshape(u, t, u2, t2).copy()
    )


def write_eigensystem(eig: EigenSystem, path) -> None:
    u, t = eig.rx_dims
    u2, t2 = eig.tx_dims
    with open(path, "wb") as fh:
        fh.write(EIGEN_MAGIC)
        fh.write(struct.pack("<IIIIII", eig.n_total, eig.n_kept, u, t, u2, t2))
        fh.write(np.ascontiguousarray(eig.sigmas, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(eig.psi, dtype="<c16").tobytes())
        fh.write(np.ascontiguousarray(eig.phi, dtype="<c16").tobytes())


def read_eigensystem(path) -> EigenSystem:
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != EIGEN_MAGIC:
        raise FormatError(
            f"{path}: not an eigensystem file (magic {raw[:4]!r}, expected "
            f"{EIGEN_MAGIC!r})"
        )
    header = 4 + 24
    if len(raw) < header:
        raise FormatError(f"{path}: truncated eigensystem header")
    n_total, n_kept, u, t, u2, t2 = struct.unpack_from("<IIIIII", raw, 4)
    if min(n_total, n_kept, u, t, u2, t2) == 0 or n_total > MAX_ENTRIES:
        raise FormatError(f"{path}: unreasonable eigensystem header")
    if n_kept > n_total:
        raise FormatError(f"{path}: n_kept {n_kept} exceeds n_total {n_total}")
    n_rx = u * t
    n_tx = u2 * t2
    expected = header + 8 * n_total + 16 * n_total * (n_rx + n_tx)
    if len(raw) < expected:
        raise FormatError(
            f"{path}: truncated eigensystem data ({len(raw)} bytes, "
            f"expected {expected})"
        )
    if len(raw) > expected:
        raise FormatError(f"{path}: {len(raw) - expected} trailing bytes")
    offset = header
    sigmas = np.frombuffer(raw, dtype="<f8", count=n_total, offset=offset).copy()
    offset += 8 * n_total
    psi = (
        np.frombuffer(raw, dtype="<c16", count=n_total * n_rx, offset=offset)
        .reshape(n_total, n_rx)
        .copy()
    )
    offset += 16 * n_total * n_rx
    phi = (
        np.frombuffer(raw, dtype="<c16", count=n_total * n_tx, offset=offset)
        .reshape(n_total, n_tx)
        .copy()
    )
    return EigenSystem(
        sigmas=sigmas,
        psi=psi,
        phi=phi,
        n_kept=n_kept,
        rx_dims=(u, t),
        tx_dims=(u2, t2),
    )


# ---------------------------------------------------------------------
# results CSV and sweep manifests
# ---------------------------------------------------------------------

CSV_COLUMNS = [
    "scheme",
    "snr_db",
    "bits",
    "bit_errors",
    "ber",
    "se",
    "throughput",
    "tx_energy",
    "awgn_ber",
    "seed",
    "config_hash",
]


def write_results_csv(result: SimResult, path, awgn_oracle=None) -> None:
    """One row per SNR point; ``awgn_oracle`` optionally maps snr -> ideal
    BER, emitted alongside the measured column."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for i, snr in enumerate(result.snr_db):
            oracle = "" if awgn_oracle is None else repr(float(awgn_oracle(snr)))
            writer.writerow(
                [
                    result.scheme,
                    repr(float(snr)),
                    result.bits[i],
                    result.bit_errors[i],
                    repr(float(result.ber[i])),
                    repr(float(result.standard_error[i])),
                    repr(float(result.throughput_bits_per_frame[i])),
                    repr(float(result.avg_tx_energy[i])),
                    oracle,
                    result.seed,
                    result.config_hash,
                ]
            )


def read_results_csv(path) -> SimResult:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            head = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty results file") from None
        if head != CSV_COLUMNS:
            raise FormatError(f"{path}: unexpected results header {head}")
        rows = list(reader)
    if not rows:
        raise FormatError(f"{path}: no data rows")
    schemes = {r[0] for r in rows}
    seeds = {r[9] for r in rows}
    hashes = {r[10] for r in rows}
    if len(schemes) != 1 or len(seeds) != 1 or len(hashes) != 1:
        raise FormatError(f"{path}: mixed scheme/seed/hash rows")
    return SimResult(
        scheme=rows[0][0],
        snr_db=tuple(float(r[1]) for r in rows),
        bits=tuple(int(r[2]) for r in rows),
        bit_errors=tuple(int(r[3]) for r in rows),
        ber=tuple(float(r[4]) for r in rows),
        standard_error=tuple(float(r[5]) for r in rows),
        throughput_bits_per_frame=tuple(float(r[6]) for r in rows),
        avg_tx_energy=tuple(float(r[7]) for r in rows),
        seed=int(rows[0][9]),
        config_hash=rows[0][10],
        wall_time=0.0,
    )


def write_manifest(csv_paths, path) -> None:
    Path(path).write_text("".join(f"{p}\n" for p in csv_paths))


def append_manifest(csv_path, path) -> None:
    entry = f"{csv_path}\n"
    p = Path(path)
    existing = p.read_text() if p.exists() else ""
    if entry not in existing.splitlines(keepends=True):
        p.write_text(existing + entry)


def read_manifest(path) -> list:
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"manifest not found: {path}")
    return [line.strip() for line in p.read_text().splitlines() if line.strip()]
