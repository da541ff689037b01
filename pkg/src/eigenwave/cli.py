"""Command-line surface: generate kernels, decompose them, run Monte-Carlo
sweeps, and compare schemes.

Exit codes: 0 success, 1 runtime/numeric error, 2 usage or configuration
error.  Every command is deterministic given its flags and seed.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .config import KERNEL_MODELS, preset_kernel_spec
from .decomposition import by_count, by_energy, decompose, orthonormality_defect, verify_duality
from .errors import ConfigurationError, EigenwaveError
from .modem import qam_ber_awgn
from .plotting import save_ber_figure
from .simulate import compare_schemes, realize_kernel, run_sweep

VERIFY_RESIDUAL_LIMIT = 1e-6


def _parse_dims(text: str):
    parts = text.split(",")
    if len(parts) != 4:
        raise ConfigurationError(f"--dims wants U,T,U2,T2, got {text!r}")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError:
        raise ConfigurationError(f"--dims entries must be integers: {text!r}") from None
    if any(d < 1 for d in dims):
        raise ConfigurationError("--dims entries must be >= 1")
    return dims


def _parse_keep(text: str):
    kind, _, frac_text = text.partition(":")
    try:
        fraction = float(frac_text)
    except ValueError:
        raise ConfigurationError(
            f"--keep wants count:FRACTION or energy:FRACTION, got {text!r}"
        ) from None
    if kind == "count":
        return by_count(fraction)
    if kind == "energy":
        return by_energy(fraction)
    raise ConfigurationError(f"unknown truncation policy {kind!r}")


def _cmd_generate(args) -> int:
    dims = _parse_dims(args.dims) if args.dims else None
    if args.model in KERNEL_MODELS:
        spec = preset_kernel_spec(args.model, dims)
    else:
        cfg_path = Path(args.model)
        if not cfg_path.exists():
            raise ConfigurationError(
                f"--model {args.model!r} is neither a known model "
                f"{KERNEL_MODELS} nor a config file"
            )
        spec = fileio.load_kernel_spec(cfg_path)
        if dims is not None:
            from .config import replace_dims

            spec = replace_dims(spec, *dims)
    rng = np.random.default_rng(np.random.SeedSequence([args.seed]))
    kernel = realize_kernel(spec, rng)
    fileio.write_kernel(kernel, args.out)
    u, t, u2, t2 = kernel.dims
    print(
        f"kernel model={spec.model} U={u} T={t} U'={u2} T'={t2} "
        f"sample_period={kernel.sample_period:g}s -> {args.out}"
    )
    return 0


def _cmd_decompose(args) -> int:
    kernel = fileio.read_kernel(args.kernel)
    keep = _parse_keep(args.keep)
    eig = decompose(kernel, keep)
    fileio.write_eigensystem(eig, args.out)
    print(
        f"eigensystem n_total={eig.n_total} n_kept={eig.n_kept} "
        f"sigma_max={eig.sigmas[0]:.6g} -> {args.out}"
    )
    if args.verify:
        residual = verify_duality(kernel, eig)
        defect = orthonormality_defect(eig)
        print(f"duality residual {residual:.3e}")
        print(f"orthonormality defect {defect:.3e}")
        if residual > VERIFY_RESIDUAL_LIMIT:
            print(
                f"verification failed: residual above {VERIFY_RESIDUAL_LIMIT:g}",
                file=sys.stderr,
            )
            return 1
    return 0


def _default_threads() -> int:
    env = os.environ.get("EIGENWAVE_THREADS", "1")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _cmd_sweep(args) -> int:
    config = fileio.load_config(args.config)  # validate before touching --out
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = run_sweep(config, n_threads=args.threads)
    csv_name = f"{config.scheme}.csv"
    fileio.write_results_csv(
        result,
        out_dir / csv_name,
        awgn_oracle=lambda snr: qam_ber_awgn(snr, config.constellation),
    )
    fileio.append_manifest(csv_name, out_dir / "manifest.txt")
    if args.figure:
        oracle_snr = result.snr_db
        oracle = (oracle_snr, [qam_ber_awgn(s, config.constellation) for s in oracle_snr])
        save_ber_figure(
            {config.scheme: (result.snr_db, result.ber, result.standard_error)},
            out_dir / f"ber_{config.scheme}.svg",
            oracle=oracle,
            title=f"{config.scheme} on {config.kernel.model}",
        )
    for i, snr in enumerate(result.snr_db):
        print(
            f"{config.scheme} snr={snr:g} dB ber={result.ber[i]:.6g} "
            f"({result.bit_errors[i]}/{result.bits[i]} bits)"
        )
    print(f"results -> {out_dir / csv_name}")
    return 0


def _cmd_compare(args) -> int:
    manifest = Path(args.manifest)
    entries = fileio.read_manifest(manifest)
    results = [fileio.read_results_csv(manifest.parent / e) for e in entries]
    table = compare_schemes(results)
    out_path = Path(args.out) if args.out else manifest.parent / "compare.csv"
    header = ["snr_db"]
    for scheme in table.schemes:
        header += [f"ber_{scheme}", f"se_{scheme}", f"throughput_{scheme}"]
    for scheme in table.schemes[1:]:
        header.append(f"throughput_ratio_{scheme}")
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, snr in enumerate(table.snr_db):
            row = [repr(float(snr))]
            for scheme in table.schemes:
                row += [
                    repr(float(table.ber(scheme)[i])),
                    repr(float(table.standard_error(scheme)[i])),
                    repr(float(table.throughput(scheme)[i])),
                ]
            for scheme in table.schemes[1:]:
                row.append(repr(float(table.throughput_ratio(scheme)[i])))
            writer.writerow(row)
    if args.figure:
        curves = {
            s: (table.snr_db, table.ber(s), table.standard_error(s))
            for s in table.schemes
        }
        save_ber_figure(curves, out_path.with_suffix(".svg"), title="scheme comparison")
    print(f"compared {', '.join(table.schemes)} -> {out_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eigenwave",
        description=(
            "Non-stationary channel decomposition toolkit: synthesize 4-D "
            "kernels, split them into dual eigenfunction subchannels, and "
            "benchmark precoding/modulation schemes by Monte-Carlo sweeps."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="write a kernel realization")
    p_gen.add_argument(
        "--model",
        required=True,
        help=f"kernel model name {KERNEL_MODELS} or a config file path",
    )
    p_gen.add_argument("--dims", help="override grid as U,T,U2,T2")
    p_gen.add_argument("--seed", type=int, default=0, help="realization seed")
    p_gen.add_argument("--out", required=True, help="output kernel file (.hgk)")
    p_gen.set_defaults(func=_cmd_generate)

    p_dec = sub.add_parser("decompose", help="decompose a kernel file")
    p_dec.add_argument("kernel", help="input kernel file (.hgk)")
    p_dec.add_argument(
        "--keep",
        default="count:1.0",
        help="truncation policy, count:FRACTION or energy:FRACTION",
    )
    p_dec.add_argument(
        "--verify",
        action="store_true",
        help="print duality residual and orthonormality defect; exit 1 if "
        f"the residual exceeds {VERIFY_RESIDUAL_LIMIT:g}",
    )
    p_dec.add_argument("--out", required=True, help="output eigensystem file (.hge)")
    p_dec.set_defaults(func=_cmd_decompose)

    p_sw = sub.add_parser("sweep", help="run a Monte-Carlo sweep")
    p_sw.add_argument("--config", required=True, help="sweep config file")
    p_sw.add_argument("--out", required=True, help="output directory")
    p_sw.add_argument(
        "--threads",
        type=int,
        default=_default_threads(),
        help="worker threads (results are identical for any value; "
        "default from EIGENWAVE_THREADS)",
    )
    p_sw.add_argument(
        "--no-figure", dest="figure", action="store_false", help="skip the BER figure"
    )
    p_sw.set_defaults(func=_cmd_sweep, figure=True)

    p_cmp = sub.add_parser("compare", help="align sweeps listed in a manifest")
    p_cmp.add_argument("--manifest", required=True, help="manifest file from sweeps")
    p_cmp.add_argument("--out", help="output CSV (default: compare.csv next to manifest)")
    p_cmp.add_argument(
        "--no-figure", dest="figure", action="store_false", help="skip the BER figure"
    )
    p_cmp.set_defaults(func=_cmd_compare, figure=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EigenwaveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
