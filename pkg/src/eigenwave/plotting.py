"""Batch figure rendering for sweep reports.

Figures are written straight to files (Agg backend); the CLI drops them
next to the CSV output so every report directory is self-contained.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["save_ber_figure"]


def save_ber_figure(curves, path, oracle=None, title="BER vs SNR"):
    """Render BER-vs-SNR curves to a file.

    Parameters
    ----------
    curves : dict
        name -> (snr_db, ber, se); se may be None.
    path : str | Path
        Output file; format follows the extension (.svg, .png, .pdf).
    oracle : tuple, optional
        (snr_db, ber) reference curve, drawn dashed.
    """
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for name, (snr, ber, se) in curves.items():
        snr = np.asarray(snr, dtype=float)
        ber = np.asarray(ber, dtype=float)
        plotted = np.where(ber > 0, ber, np.nan)  # log axis cannot show 0
        if se is not None:
            ax.errorbar(
                snr,
                plotted,
                yerr=3.0 * np.asarray(se, dtype=float),
                marker="o",
                ms=3.5,
                capsize=2,
                label=name,
            )
        else:
            ax.plot(snr, plotted, marker="o", ms=3.5, label=name)
    if oracle is not None:
        osnr, ober = oracle
        ober = np.asarray(ober, dtype=float)
        ax.plot(
            osnr,
            np.where(ober > 0, ober, np.nan),
            "k--",
            lw=1.0,
            label="awgn ideal",
        )
    ax.set_yscale("log")
    ax.set_xlabel("Es/N0 (dB)")
    ax.set_ylabel("BER")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
